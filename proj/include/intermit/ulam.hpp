#pragma once

// Ulam discretizations: M[k][l] = |A_k ∩ T^{-1} A_l| / |A_k| from exact
// preimage intervals.
//
// The induced matrix is assembled band by band. Every pullback band maps onto
// I_0 = [z, T(z)] after i cusp steps, so its column structure is the pullback
// T_1^{-i} of the grid edges inside I_0. Mass of each (row, column) piece is
// filed under the exact return time of the piece, which gives R_n as an exact
// fractional split of the rows.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <unordered_map>
#include <vector>

#include <Eigen/Sparse>

#include "intermit/error.hpp"
#include "intermit/grid.hpp"
#include "intermit/induced_system.hpp"
#include "intermit/map_models.hpp"

namespace intermit {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Triplet = Eigen::Triplet<double>;

enum class OperatorKind { induced, full };

struct UlamOperator {
  OperatorKind kind = OperatorKind::induced;
  Grid grid;
  SparseMatrix matrix;
  double z = 0.0;
  std::size_t xhat_begin = 0;  // first grid cell inside Xhat

  // induced kind only
  std::vector<std::size_t> cell_tau;  // majority return time of each row
  std::vector<char> straddle;         // row meets more than one return time
  double majority_leakage = 0.0;      // max over rows of the minority mass fraction
  std::vector<SparseMatrix> R;        // R[n - 1] = R_n for n = 1 .. n_split
  SparseMatrix R_tail;                // all return times > n_split
  std::size_t n_split = 0;
  std::size_t tau_max = 0;            // largest represented return time
  std::vector<double> tail_row_mass;  // row mass of R_tail
  std::vector<double> tail_row_moment;  // row sum of tau * mass over R_tail
  std::vector<double> sliver_row_mass;  // row mass of the truncated slivers
  double truncation_mass = 0.0;         // normalized sliver measure

  // full kind with pullback J cells
  std::size_t markov_depth = 0;

  std::size_t size() const { return grid.size(); }

  /// Transfer operator on masses: m' = M^T m.
  Eigen::VectorXd push_mass(const Eigen::VectorXd& m) const { return matrix.transpose() * m; }

  /// Transfer operator on densities (cell averages).
  GridFunction apply(const GridFunction& f) const {
    const Eigen::VectorXd m = to_mass(f);
    return from_mass(push_mass(m));
  }

  Eigen::VectorXd to_mass(const GridFunction& f) const {
    Eigen::VectorXd m(size());
    for (std::size_t k = 0; k < size(); ++k) m[k] = f.values[k] * grid.width(k);
    return m;
  }

  GridFunction from_mass(const Eigen::VectorXd& m) const {
    GridFunction f(grid, 0.0);
    for (std::size_t k = 0; k < size(); ++k) f.values[k] = m[k] / grid.width(k);
    return f;
  }
};

namespace detail {

// Pieces of a branch segment over the rows of `rows`, weighted within each row
// segment and scaled by the exact x-length of that segment.
template <class Sink>
void emit_segment(const Branch& b, const Grid& rows, double x_lo, double x_hi, double y_lo, double y_hi,
                  std::span<const double> ybreaks, std::span<const std::size_t> cols,
                  const std::function<double(double)>& x_of, Sink&& sink) {
  if (!(x_hi > x_lo) || !(y_hi > y_lo) || cols.empty()) return;
  const bool affine = b.is_affine();
  std::size_t row = rows.locate(x_lo);
  auto row_end_x = [&](std::size_t r) { return std::min(x_hi, rows.cell_hi(r)); };
  auto row_end_y = [&](std::size_t r) {
    const double e = rows.cell_hi(r);
    return e < x_hi ? b.value(e) : std::numeric_limits<double>::infinity();
  };

  std::vector<std::pair<std::size_t, double>> buffer;
  double seg_x0 = x_lo;
  double x_prev = x_lo;
  auto flush = [&](double seg_x1) {
    double total = 0.0;
    for (const auto& [c, w] : buffer) total += w;
    const double scale = (seg_x1 - seg_x0) / rows.width(row);
    if (total > 0.0 && scale > 0.0)
      for (const auto& [c, w] : buffer) sink(row, c, w / total * scale);
    buffer.clear();
    seg_x0 = seg_x1;
  };

  std::size_t m = static_cast<std::size_t>(std::upper_bound(ybreaks.begin(), ybreaks.end(), y_lo) - ybreaks.begin());
  m = m == 0 ? 0 : std::min(m - 1, cols.size() - 1);
  double y = y_lo;
  double yr = row_end_y(row);
  while (y < y_hi && m < cols.size()) {
    const double yp = std::min(ybreaks[m + 1], y_hi);
    const double ye = std::min(yp, yr);
    if (ye > y) {
      double w;
      if (affine) {
        w = ye - y;
      } else {
        const double x_next = (ye == yr) ? rows.cell_hi(row) : (ye == y_hi ? x_hi : x_of(ye));
        w = std::max(0.0, x_next - x_prev);
        x_prev = x_next;
      }
      if (w > 0.0) {
        if (!buffer.empty() && buffer.back().first == cols[m]) buffer.back().second += w;
        else buffer.emplace_back(cols[m], w);
      }
      y = ye;
    }
    if (ye >= yr) {
      flush(row_end_x(row));
      if (row + 1 >= rows.size()) break;
      ++row;
      x_prev = rows.cell_lo(row);
      yr = row_end_y(row);
    }
    if (ye >= yp) ++m;
  }
  flush(x_hi);
}

inline std::function<double(double)> inverse_of(const BranchMap& map, std::size_t j) {
  return [&map, j](double y) { return branch_inverse(map, j, y); };
}

// Breakpoints of [y_lo, y_hi] at the grid edges and the grid cell of each piece.
inline void grid_breaks(const Grid& g, double y_lo, double y_hi, std::vector<double>& ys, std::vector<std::size_t>& cols) {
  ys.clear();
  cols.clear();
  ys.push_back(y_lo);
  std::size_t k = g.locate(y_lo);
  while (k + 1 < g.size() && g.cell_hi(k) < y_hi) {
    cols.push_back(k);
    ys.push_back(g.cell_hi(k));
    ++k;
  }
  cols.push_back(k);
  ys.push_back(y_hi);
}

// Pullback of the I_0 breakpoints by one more cusp step, ends pinned to the pullback sequence.
inline std::vector<double> pull_band(const BranchMap& map, const std::vector<double>& prev, double z_i, double z_im1) {
  std::vector<double> out(prev.size());
  out.front() = z_i;
  out.back() = z_im1;
  for (std::size_t m = 1; m + 1 < prev.size(); ++m) out[m] = branch_inverse(map, 0, prev[m]);
  return out;
}

// I_0 = [z, T(z)] cut at the grid edges, with the Xhat-grid column of each piece.
struct BandColumns {
  std::vector<double> y0;
  std::vector<std::size_t> cols;
};

inline BandColumns band_columns(const BranchMap& map, double z, const Grid& xhat_grid) {
  BandColumns bc;
  grid_breaks(xhat_grid, z, map.branch(0).value(z), bc.y0, bc.cols);
  return bc;
}

struct RowAccumulator {
  std::size_t n_cols = 0;
  std::unordered_map<std::size_t, std::vector<double>> rows;
  void add(std::size_t r, std::size_t c, double v) {
    auto& row = rows[r];
    if (row.empty()) row.assign(n_cols, 0.0);
    row[c] += v;
  }
  void to_triplets(std::vector<Triplet>& out) const {
    std::vector<std::size_t> keys;
    for (const auto& [r, _] : rows) keys.push_back(r);
    std::sort(keys.begin(), keys.end());
    for (auto r : keys) {
      const auto& row = rows.at(r);
      for (std::size_t c = 0; c < row.size(); ++c)
        if (row[c] != 0.0) out.emplace_back(static_cast<int>(r), static_cast<int>(c), row[c]);
    }
  }
};

inline SparseMatrix from_triplets(std::size_t n_rows, std::size_t n_cols, const std::vector<Triplet>& t) {
  SparseMatrix m(static_cast<Eigen::Index>(n_rows), static_cast<Eigen::Index>(n_cols));
  m.setFromTriplets(t.begin(), t.end());
  m.makeCompressed();
  return m;
}

}  // namespace detail

struct InducedUlamOptions {
  /// R_n is kept separately for n <= n_split; larger return times are lumped into R_tail.
  std::size_t n_split = std::numeric_limits<std::size_t>::max();
};

/// Ulam matrix of the first-return map on a uniform grid of n_cells over [z, 1].
inline UlamOperator ulam_induced(const InducedSystem& ind, std::size_t n_cells, InducedUlamOptions opt = {}) {
  if (n_cells < 2) throw DomainError("ulam matrix needs at least 2 cells");
  const BranchMap& map = ind.map;
  UlamOperator op;
  op.kind = OperatorKind::induced;
  op.z = ind.z;
  op.grid = Grid::uniform(ind.z, 1.0, n_cells);
  const Grid& g = op.grid;
  const std::size_t N = n_cells;
  op.tau_max = ind.slivers.empty() ? ind.max_tau() : ind.n_max + 2;
  op.n_split = std::clamp<std::size_t>(opt.n_split, 1, op.tau_max);
  op.tail_row_mass.assign(N, 0.0);
  op.tail_row_moment.assign(N, 0.0);
  op.sliver_row_mass.assign(N, 0.0);
  op.truncation_mass = ind.tail_bound / ind.xhat_length();

  std::vector<std::vector<Triplet>> trip(op.n_split);
  detail::RowAccumulator tail{N, {}};
  auto sink_for = [&](std::size_t tau) {
    return [&, tau](std::size_t r, std::size_t c, double v) {
      if (!(v > 0.0)) return;
      if (tau <= op.n_split) {
        trip[tau - 1].emplace_back(static_cast<int>(r), static_cast<int>(c), v);
      } else {
        tail.add(r, c, v);
        op.tail_row_mass[r] += v;
        op.tail_row_moment[r] += static_cast<double>(tau) * v;
      }
    };
  };

  // Return time 1: images inside Xhat, columns are grid cells.
  std::vector<double> ys;
  std::vector<std::size_t> cols;
  for (const auto& c : ind.cells) {
    if (c.i != 0) continue;
    const double y_lo = std::max(c.image_lo, ind.z);
    const double y_hi = std::min(c.image_hi, 1.0);
    detail::grid_breaks(g, y_lo, y_hi, ys, cols);
    detail::emit_segment(map.branch(c.j), g, c.lo, c.hi, y_lo, y_hi, ys, cols, detail::inverse_of(map, c.j),
                         sink_for(1));
  }

  // Pullback bands.
  if (ind.z > 0.0 && (ind.n_max > 0 || !ind.slivers.empty())) {
    const auto bc = detail::band_columns(map, ind.z, g);
    std::vector<std::vector<const Cell*>> bands(map.size(), std::vector<const Cell*>(ind.n_max + 1, nullptr));
    for (const auto& c : ind.cells)
      if (c.i > 0) bands[c.j][c.i] = &c;
    std::vector<double> y = bc.y0;
    const auto& zs = ind.pullbacks;
    for (std::size_t i = 1; i <= ind.n_max; ++i) {
      y = detail::pull_band(map, y, zs[i], zs[i - 1]);
      for (std::size_t j = 0; j < map.size(); ++j) {
        const Cell* c = bands[j][i];
        if (!c) continue;
        const Branch& b = map.branch(j);
        const double y_lo = std::max(zs[i], b.value(c->lo));
        const double y_hi = std::min(zs[i - 1], b.value(c->hi));
        detail::emit_segment(b, g, c->lo, c->hi, y_lo, y_hi, y, bc.cols, detail::inverse_of(map, j),
                             sink_for(c->tau));
      }
    }
    // Slivers: column fractions of the deepest resolved band, rescaled onto the sliver.
    const double top = y.back(), bottom = y.front();
    for (const auto& s : ind.slivers) {
      const Branch& b = map.branch(s.j);
      const double s_lo = std::max(0.0, b.value(s.lo));
      const double s_hi = zs.back();
      if (!(s_hi > s_lo)) continue;
      std::vector<double> ys_s(y.size());
      for (std::size_t m = 0; m < y.size(); ++m) ys_s[m] = s_lo + (y[m] - bottom) * (s_hi - s_lo) / (top - bottom);
      ys_s.front() = s_lo;
      ys_s.back() = s_hi;
      auto base = sink_for(ind.n_max + 2);
      auto sink = [&](std::size_t r, std::size_t c, double v) {
        base(r, c, v);
        op.sliver_row_mass[r] += v;
      };
      detail::emit_segment(b, g, s.lo, s.hi, s_lo, s_hi, ys_s, bc.cols, detail::inverse_of(map, s.j), sink);
    }
  }

  std::vector<Triplet> all;
  op.R.reserve(op.n_split);
  for (std::size_t n = 0; n < op.n_split; ++n) {
    op.R.push_back(detail::from_triplets(N, N, trip[n]));
    all.insert(all.end(), trip[n].begin(), trip[n].end());
    std::vector<Triplet>().swap(trip[n]);
  }
  std::vector<Triplet> tail_trip;
  tail.to_triplets(tail_trip);
  op.R_tail = detail::from_triplets(N, N, tail_trip);
  all.insert(all.end(), tail_trip.begin(), tail_trip.end());
  op.matrix = detail::from_triplets(N, N, all);

  // Majority return-time labels, from the cell geometry.
  std::vector<std::vector<std::pair<std::size_t, double>>> per_row(N);
  auto add_cover = [&](double lo, double hi, std::size_t tau) {
    for (std::size_t r = g.locate(lo); r < N && g.cell_lo(r) < hi; ++r) {
      const double ov = std::min(hi, g.cell_hi(r)) - std::max(lo, g.cell_lo(r));
      if (ov > 0.0) per_row[r].emplace_back(tau, ov / g.width(r));
    }
  };
  for (const auto& c : ind.cells) add_cover(c.lo, c.hi, c.tau);
  for (const auto& s : ind.slivers) add_cover(s.lo, s.hi, ind.n_max + 2);
  op.cell_tau.assign(N, 0);
  op.straddle.assign(N, 0);
  for (std::size_t r = 0; r < N; ++r) {
    auto& v = per_row[r];
    std::sort(v.begin(), v.end());
    std::size_t best_tau = 0, distinct = 0;
    double best = -1.0, total = 0.0;
    for (std::size_t k = 0; k < v.size();) {
      double mass = 0.0;
      std::size_t t = v[k].first;
      for (; k < v.size() && v[k].first == t; ++k) mass += v[k].second;
      ++distinct;
      total += mass;
      if (mass > best) {
        best = mass;
        best_tau = t;
      }
    }
    op.cell_tau[r] = best_tau;
    op.straddle[r] = distinct > 1;
    op.majority_leakage = std::max(op.majority_leakage, total - best);
  }
  return op;
}

struct FullGridOptions {
  enum class J { uniform, geometric, markov };
  J j_grid = J::uniform;
  double ratio = 0.9;       // geometric refinement toward 0
  double min_edge = 1e-10;  // geometric: smallest positive edge
  std::size_t depth = 64;   // markov: number of resolved pullback levels
};

/// Ulam matrix of the full map on J-cells over [0, z] followed by a uniform grid of n_xhat_cells over [z, 1].
inline UlamOperator ulam_full(const InducedSystem& ind, std::size_t n_xhat_cells, FullGridOptions opt = {}) {
  if (n_xhat_cells < 2) throw DomainError("ulam matrix needs at least 2 cells");
  const BranchMap& map = ind.map;
  const double z = ind.z;
  const Grid xhat = Grid::uniform(z, 1.0, n_xhat_cells);
  UlamOperator op;
  op.kind = OperatorKind::full;
  op.z = z;

  std::vector<double> edges;
  detail::BandColumns bc;
  std::vector<std::vector<double>> bands;  // bands[i] = breakpoints of band i, i = 1 .. depth + 1
  std::vector<double> zs;
  const bool markov = z > 0.0 && opt.j_grid == FullGridOptions::J::markov;
  if (z > 0.0) {
    if (markov) {
      const std::size_t d = std::max<std::size_t>(opt.depth, 1);
      zs = ind.pullbacks.size() > d + 1 ? std::vector<double>(ind.pullbacks.begin(), ind.pullbacks.begin() + d + 2)
                                        : pullback_sequence(map, z, d + 1);
      bc = detail::band_columns(map, z, xhat);
      bands.resize(d + 2);
      bands[0] = bc.y0;
      for (std::size_t i = 1; i <= d + 1; ++i) bands[i] = detail::pull_band(map, bands[i - 1], zs[i], zs[i - 1]);
      edges.push_back(0.0);
      for (std::size_t i = d; i >= 1; --i) edges.insert(edges.end(), bands[i].begin(), bands[i].end() - 1);
      op.markov_depth = d;
    } else if (opt.j_grid == FullGridOptions::J::geometric) {
      const double w = (1.0 - z) / static_cast<double>(n_xhat_cells);
      std::vector<double> desc{z};
      for (;;) {
        const double next = std::max(desc.back() - w, opt.ratio * desc.back());
        if (next < opt.min_edge) break;
        desc.push_back(next);
      }
      desc.push_back(0.0);
      edges.assign(desc.rbegin(), desc.rend() - 1);
    } else {
      const double w = (1.0 - z) / static_cast<double>(n_xhat_cells);
      const auto k = static_cast<std::size_t>(std::max(1.0, std::ceil(z / w - 1e-9)));
      for (std::size_t q = 0; q < k; ++q) edges.push_back(z * static_cast<double>(q) / static_cast<double>(k));
    }
  }
  op.xhat_begin = edges.size();
  edges.insert(edges.end(), xhat.edges().begin(), xhat.edges().end());
  op.grid = Grid::from_edges(std::move(edges));
  const Grid& g = op.grid;
  const std::size_t N = g.size();

  std::vector<Triplet> trip;
  auto sink = [&](std::size_t r, std::size_t c, double v) {
    if (v > 0.0) trip.emplace_back(static_cast<int>(r), static_cast<int>(c), v);
  };
  std::vector<double> ys;
  std::vector<std::size_t> cols;
  const double x_from = markov ? z : 0.0;
  for (std::size_t j = 0; j < map.size(); ++j) {
    const Branch& b = map.branch(j);
    const double x_lo = std::max(b.lo(), x_from);
    const double x_hi = b.hi();
    if (!(x_lo < x_hi)) continue;
    const double y_lo = std::clamp(b.value(x_lo), 0.0, 1.0);
    const double y_hi = std::clamp(b.value(x_hi), 0.0, 1.0);
    detail::grid_breaks(g, y_lo, y_hi, ys, cols);
    detail::emit_segment(b, g, x_lo, x_hi, y_lo, y_hi, ys, cols, detail::inverse_of(map, j), sink);
  }

  if (markov) {
    const std::size_t d = op.markov_depth;
    const std::size_t M = bc.cols.size();
    auto idx = [&](std::size_t i, std::size_t m) { return 1 + (d - i) * M + m; };
    const double zd = zs[d];
    trip.emplace_back(0, 0, zs[d + 1] / zd);
    for (std::size_t m = 0; m < M; ++m)
      trip.emplace_back(0, static_cast<int>(idx(d, m)), (bands[d + 1][m + 1] - bands[d + 1][m]) / zd);
    for (std::size_t i = 2; i <= d; ++i)
      for (std::size_t m = 0; m < M; ++m) trip.emplace_back(static_cast<int>(idx(i, m)), static_cast<int>(idx(i - 1, m)), 1.0);
    for (std::size_t m = 0; m < M; ++m)
      trip.emplace_back(static_cast<int>(idx(1, m)), static_cast<int>(op.xhat_begin + bc.cols[m]), 1.0);
  }
  op.matrix = detail::from_triplets(N, N, trip);
  return op;
}

/// Ulam matrix of the whole map on a uniform grid over [0, 1] (no inducing set).
inline UlamOperator ulam_matrix(const BranchMap& map, std::size_t n_cells) {
  return ulam_full(build_induced(map, 0.0, 0), n_cells);
}

/// Induced kind on the inducing set of ind.
inline UlamOperator ulam_matrix(const InducedSystem& ind, std::size_t n_cells, InducedUlamOptions opt = {}) {
  return ulam_induced(ind, n_cells, opt);
}

/// Max over rows of |row sum - 1|.
inline double row_sum_defect(const SparseMatrix& m) {
  double worst = 0.0;
  for (Eigen::Index r = 0; r < m.outerSize(); ++r) {
    double s = 0.0;
    for (SparseMatrix::InnerIterator it(m, r); it; ++it) s += it.value();
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

}  // namespace intermit
