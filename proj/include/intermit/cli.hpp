#pragma once

// Batch pipeline behind the intermit_cli tool: validate, induce, ulam, density,
// decay, aperiodicity, scaling, report, all.

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "intermit/decay.hpp"
#include "intermit/io.hpp"
#include "intermit/norms.hpp"
#include "intermit/scaling_laws.hpp"
#include "intermit/transfer.hpp"
#include "intermit/validation.hpp"

namespace intermit::cli {

enum ExitCode : int { kPass = 0, kCheckFailed = 1, kConfigError = 2, kNumericalError = 3 };

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

using Window = std::array<double, 2>;

struct RunConfig {
  MapSpec map;
  std::size_t n_max = 5000;  // pullback depth of the induced system
  std::size_t cells = 2048;  // induced grid for density and decay
  std::size_t n_split = 400;
  std::uint64_t seed = 42;
  std::string out = "out";

  Window tail_window{20, 2000};
  Window dn_window{50, 3000};
  Window decay_window{30, 300};

  struct Ulam {
    std::size_t cells = 1024;
    std::size_t n_split = 200;
    std::size_t contraction_trials = 100;
  } ulam;
  struct Renewal {
    std::size_t cells = 256;
    std::size_t n_split = 60;
    std::size_t n_trunc = 40;
    double z = 0.5;
  } renewal;
  struct LasotaYorke {
    std::size_t cells = 4096;
    std::size_t trials = 500;
    double slack = 1.1;
  } lasota_yorke;
  struct Decay {
    std::size_t n = 300;
    Window observable{0.55, 0.95};
    std::size_t extend_steps = 20000;
    std::size_t mc_samples = 0;
    std::vector<std::size_t> mc_lags{0, 1, 2, 5, 10};
  } decay;
  struct Aperiodicity {
    std::size_t cells = 256;
    std::size_t t_grid = 64;
  } aperiodicity;
  struct Scaling {
    std::size_t n_max = 5000;
    double alpha = 1.0;
  } scaling;

  std::vector<std::string> checks{"validate", "induce", "ulam", "density", "decay", "aperiodicity", "scaling"};
  nlohmann::json theory = nlohmann::json::object();  // check name -> expected value or limit
};

namespace detail {

inline void only_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) throw ConfigError("unknown key '" + k + "' in " + where);
  }
}

template <class T>
void read(const nlohmann::json& j, const char* key, T& field) {
  if (!j.contains(key)) return;
  try {
    field = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

inline void positive(std::size_t v, const char* what) {
  if (v == 0) throw ConfigError(std::string(what) + " must be positive");
}

inline void ordered(const Window& w, const char* what) {
  if (!(w[0] > 0.0 && w[0] < w[1])) throw ConfigError(std::string(what) + " window must satisfy 0 < lo < hi");
}

}  // namespace detail

inline const std::vector<std::string>& check_groups() {
  static const std::vector<std::string> g{"validate", "induce", "ulam", "density", "decay", "aperiodicity", "scaling"};
  return g;
}

/// Reads a JSON config. Unknown keys are errors.
inline RunConfig config_from_json(const nlohmann::json& j) {
  using detail::read;
  RunConfig c;
  detail::only_keys(j,
                    {"map", "n_max", "cells", "n_split", "seed", "out", "windows", "ulam", "renewal", "lasota_yorke",
                     "decay", "aperiodicity", "scaling", "checks", "theory"},
                    "config");
  if (j.contains("map")) {
    detail::only_keys(j["map"], {"family", "gamma", "c", "z", "breakpoints", "slopes"}, "map");
    try {
      c.map = j["map"].get<MapSpec>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("bad map: ") + e.what());
    }
  }
  read(j, "n_max", c.n_max);
  read(j, "cells", c.cells);
  read(j, "n_split", c.n_split);
  read(j, "seed", c.seed);
  read(j, "out", c.out);
  if (j.contains("windows")) {
    const auto& w = j["windows"];
    detail::only_keys(w, {"tail", "d_n", "decay"}, "windows");
    read(w, "tail", c.tail_window);
    read(w, "d_n", c.dn_window);
    read(w, "decay", c.decay_window);
  }
  if (j.contains("ulam")) {
    const auto& s = j["ulam"];
    detail::only_keys(s, {"cells", "n_split", "contraction_trials"}, "ulam");
    read(s, "cells", c.ulam.cells);
    read(s, "n_split", c.ulam.n_split);
    read(s, "contraction_trials", c.ulam.contraction_trials);
  }
  if (j.contains("renewal")) {
    const auto& s = j["renewal"];
    detail::only_keys(s, {"cells", "n_split", "n_trunc", "z"}, "renewal");
    read(s, "cells", c.renewal.cells);
    read(s, "n_split", c.renewal.n_split);
    read(s, "n_trunc", c.renewal.n_trunc);
    read(s, "z", c.renewal.z);
  }
  if (j.contains("lasota_yorke")) {
    const auto& s = j["lasota_yorke"];
    detail::only_keys(s, {"cells", "trials", "slack"}, "lasota_yorke");
    read(s, "cells", c.lasota_yorke.cells);
    read(s, "trials", c.lasota_yorke.trials);
    read(s, "slack", c.lasota_yorke.slack);
  }
  if (j.contains("decay")) {
    const auto& s = j["decay"];
    detail::only_keys(s, {"n", "observable", "extend_steps", "mc_samples", "mc_lags"}, "decay");
    read(s, "n", c.decay.n);
    read(s, "observable", c.decay.observable);
    read(s, "extend_steps", c.decay.extend_steps);
    read(s, "mc_samples", c.decay.mc_samples);
    read(s, "mc_lags", c.decay.mc_lags);
  }
  if (j.contains("aperiodicity")) {
    const auto& s = j["aperiodicity"];
    detail::only_keys(s, {"cells", "t_grid"}, "aperiodicity");
    read(s, "cells", c.aperiodicity.cells);
    read(s, "t_grid", c.aperiodicity.t_grid);
  }
  if (j.contains("scaling")) {
    const auto& s = j["scaling"];
    detail::only_keys(s, {"n_max", "alpha"}, "scaling");
    read(s, "n_max", c.scaling.n_max);
    read(s, "alpha", c.scaling.alpha);
  }
  read(j, "checks", c.checks);
  if (j.contains("theory")) {
    if (!j["theory"].is_object()) throw ConfigError("theory must be an object of numbers");
    for (const auto& [k, v] : j["theory"].items())
      if (!v.is_number()) throw ConfigError("theory override '" + k + "' must be a number");
    c.theory = j["theory"];
  }
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

/// Consistency of the numeric settings; run() calls this before any work.
inline void check_config(const RunConfig& c) {
  detail::positive(c.n_max, "n_max");
  detail::positive(c.cells, "cells");
  detail::positive(c.n_split, "n_split");
  detail::ordered(c.tail_window, "tail");
  detail::ordered(c.dn_window, "d_n");
  detail::ordered(c.decay_window, "decay");
  if (c.out.empty()) throw ConfigError("out must name a directory");
  if (c.decay.n > c.n_split) throw ConfigError("decay.n must not exceed n_split");
  if (c.decay_window[1] > static_cast<double>(c.decay.n)) throw ConfigError("decay window exceeds decay.n");
  if (c.decay.n >= c.n_max) throw ConfigError("decay.n must be below n_max");
  if (!(c.decay.observable[0] < c.decay.observable[1])) throw ConfigError("decay.observable must be an interval");
  if (!(c.renewal.z > 0.0 && c.renewal.z < 1.0)) throw ConfigError("renewal.z must lie in (0, 1)");
  if (c.aperiodicity.t_grid < 2) throw ConfigError("aperiodicity.t_grid must be at least 2");
  if (!(c.scaling.alpha > 0.0 && c.scaling.alpha <= 1.0)) throw ConfigError("scaling.alpha must lie in (0, 1]");
  for (const auto& g : c.checks)
    if (std::find(check_groups().begin(), check_groups().end(), g) == check_groups().end())
      throw ConfigError("unknown check group '" + g + "'");
}

struct Check {
  enum class Kind { near, at_most, at_least };
  std::string name;
  Kind kind = Kind::near;
  double value = 0.0;
  double expected = 0.0;   // centre (near) or limit
  double tolerance = 0.0;  // near only
  double bound = std::numeric_limits<double>::quiet_NaN();  // truncation / leakage bound behind the value

  bool pass() const {
    if (!std::isfinite(value)) return false;
    switch (kind) {
      case Kind::near: return std::abs(value - expected) <= tolerance;
      case Kind::at_most: return value <= expected;
      case Kind::at_least: return value >= expected;
    }
    return false;
  }
};

inline void to_json(nlohmann::json& j, const Check& c) {
  static const char* kinds[] = {"near", "at_most", "at_least"};
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  j = nlohmann::json{{"name", c.name},       {"kind", kinds[static_cast<int>(c.kind)]},
                     {"value", num(c.value)}, {"expected", c.expected},
                     {"tolerance", c.tolerance}, {"bound", num(c.bound)},
                     {"pass", c.pass()}};
}

struct Outcome {
  nlohmann::json record = nlohmann::json::object();
  std::vector<Check> checks;
};

/// Lazily built, shared stages of the pipeline.
class Pipeline {
public:
  explicit Pipeline(RunConfig cfg) : cfg_(std::move(cfg)) {}

  const RunConfig& config() const { return cfg_; }
  std::filesystem::path out() const { return cfg_.out; }

  const BranchMap& map() {
    if (!map_) map_ = make_family(cfg_.map);
    return *map_;
  }

  const InducedSystem& induced() {
    if (!ind_) ind_ = build_induced(map(), cfg_.map.z, cfg_.n_max);
    return *ind_;
  }

  const UlamOperator& induced_op() {
    if (!ind_op_) {
      InducedUlamOptions o;
      o.n_split = cfg_.n_split;
      ind_op_ = ulam_induced(induced(), cfg_.cells, o);
    }
    return *ind_op_;
  }

  const FixedDensity& density() {
    if (!fd_) fd_ = fixed_density(induced_op());
    return *fd_;
  }

  /// mu(Xhat) from Kac, the value consistent with the renewal chain of the induced operator.
  double mu_Xhat() { return 1.0 / mean_return_time(induced(), &density().density); }

  const ExtendedDensity& extended() {
    if (!ext_) {
      FullGridOptions fo;
      fo.j_grid = FullGridOptions::J::markov;
      full_op_ = ulam_full(induced(), cfg_.cells, fo);
      ext_ = extend_density(*full_op_, induced(), density().density, cfg_.decay.extend_steps);
    }
    return *ext_;
  }

  const UlamOperator& full_op() {
    extended();
    return *full_op_;
  }

  Check near(const std::string& name, double value, double expected, double tol,
             double bound = std::numeric_limits<double>::quiet_NaN()) const {
    return {name, Check::Kind::near, value, theory(name, expected), tol, bound};
  }
  Check at_most(const std::string& name, double value, double limit,
                double bound = std::numeric_limits<double>::quiet_NaN()) const {
    return {name, Check::Kind::at_most, value, theory(name, limit), 0.0, bound};
  }
  Check at_least(const std::string& name, double value, double limit,
                 double bound = std::numeric_limits<double>::quiet_NaN()) const {
    return {name, Check::Kind::at_least, value, theory(name, limit), 0.0, bound};
  }

private:
  double theory(const std::string& name, double fallback) const {
    return cfg_.theory.contains(name) ? cfg_.theory[name].get<double>() : fallback;
  }

  RunConfig cfg_;
  std::optional<BranchMap> map_;
  std::optional<InducedSystem> ind_;
  std::optional<UlamOperator> ind_op_;
  std::optional<FixedDensity> fd_;
  std::optional<UlamOperator> full_op_;
  std::optional<ExtendedDensity> ext_;
};

// ---------------------------------------------------------------------------
// Commands. Each returns its record and checks; `write` controls artifact files.

inline Outcome cmd_validate(Pipeline& p, bool write) {
  const auto r = validate_assumptions(p.map(), p.config().map.z, p.config().n_max);
  Outcome o;
  o.record = r;
  o.record["map"] = p.config().map;
  o.checks.push_back(p.at_least("assumptions_hold", r.passes() ? 1.0 : 0.0, 1.0));
  if (write) io::write_json(p.out() / "validate.json", o.record);
  return o;
}

inline Outcome cmd_induce(Pipeline& p, bool write) {
  const auto& cfg = p.config();
  const auto& ind = p.induced();
  const auto tail = tail_profile(ind, nullptr, true);
  const auto dn = ind.d_n();  // dn[n - 1] = d_n
  const std::size_t N = ind.n_max;
  const auto tail_fit = fit_rate(std::span<const double>(tail), 0, cfg.tail_window[0], cfg.tail_window[1]);
  const auto dn_fit = fit_rate(std::span<const double>(dn), 1, cfg.dn_window[0], cfg.dn_window[1]);
  const double g = cfg.map.gamma;
  const double leak = ind.tail_bound / ind.xhat_length();

  Outcome o;
  o.record = {{"z", ind.z},
              {"n_max", N},
              {"cells", ind.cells.size()},
              {"slivers", ind.slivers.size()},
              {"sliver_measure", leak},
              {"distortion", ind.distortion},
              {"min_image_length", ind.min_image_length},
              {"gcd_return_times", return_time_gcd(ind)},
              {"mean_return_time", mean_return_time(ind)},
              {"rigorous", ind.rigorous},
              {"tail_fit", tail_fit},
              {"d_n_fit", dn_fit}};
  o.checks.push_back(p.near("tail_exponent", -tail_fit.slope, 1.0 / g, 0.1, leak));
  o.checks.push_back(p.near("d_n_exponent", -dn_fit.slope, 1.0 / g + 1.0, 0.05, leak));
  o.checks.push_back(p.near("gcd_return_times", static_cast<double>(return_time_gcd(ind)), 1.0, 0.0));
  if (write) {
    io::write_json(p.out() / "induce.json", o.record);
    io::CsvWriter csv(p.out() / "induce.csv", {"n", "tail", "d_n"});
    for (std::size_t n = 1; n <= N; ++n) csv.row({static_cast<double>(n), tail[n], dn[n - 1]});
  }
  return o;
}

inline Outcome cmd_ulam(Pipeline& p, bool write) {
  const auto& cfg = p.config();
  const auto& ind = p.induced();
  InducedUlamOptions uo;
  uo.n_split = cfg.ulam.n_split;
  const auto op = ulam_induced(ind, cfg.ulam.cells, uo);

  SparseMatrix sum = op.R_tail;
  for (const auto& r : op.R) sum += r;
  const SparseMatrix diff = sum - op.matrix;
  const double gap = diff.nonZeros() ? diff.coeffs().cwiseAbs().maxCoeff() : 0.0;
  double sliver = 0.0;
  for (double v : op.sliver_row_mass) sliver = std::max(sliver, v);

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> U(-1.0, 1.0), R(0.0, 1.0), T(0.0, 2 * std::numbers::pi);
  double worst = 0.0;
  for (std::size_t t = 0; t < cfg.ulam.contraction_trials; ++t) {
    const std::complex<double> z = std::polar(R(rng), T(rng));
    const auto rz = R_of_z(op, z, op.n_split);
    Eigen::VectorXcd m(op.size());
    for (auto& v : m) v = {U(rng), U(rng)};
    const double in = std::abs(z) * m.lpNorm<1>();
    if (in > 0.0) worst = std::max(worst, (rz.matrix.transpose() * m).lpNorm<1>() / in);
  }

  InducedUlamOptions ro;
  ro.n_split = cfg.renewal.n_split;
  FullGridOptions fo;
  fo.j_grid = FullGridOptions::J::markov;
  const auto ren = renewal_check(ulam_induced(ind, cfg.renewal.cells, ro), ulam_full(ind, cfg.renewal.cells, fo),
                                 cfg.renewal.z, cfg.renewal.n_trunc);

  InducedUlamOptions lo;
  lo.n_split = 1;
  const auto ly = ly_probe(ulam_induced(ind, cfg.lasota_yorke.cells, lo), ind, LYNorm{}, cfg.lasota_yorke.trials,
                           cfg.seed);

  Outcome o;
  o.record = {{"cells", op.size()},
              {"n_split", op.n_split},
              {"tau_max", op.tau_max},
              {"nonzeros", op.matrix.nonZeros()},
              {"row_sum_defect", row_sum_defect(op.matrix)},
              {"majority_leakage", op.majority_leakage},
              {"truncation_mass", op.truncation_mass},
              {"renewal_reconstruction_gap", gap},
              {"contraction_worst_ratio", worst},
              {"contraction_trials", cfg.ulam.contraction_trials},
              {"renewal_identity", {{"z", cfg.renewal.z}, {"n_trunc", cfg.renewal.n_trunc},
                                    {"discrepancy", ren.discrepancy}, {"bound", ren.bound}}},
              {"lasota_yorke", ly}};
  o.checks.push_back(p.at_most("row_sum_defect", row_sum_defect(op.matrix), 1e-12));
  o.checks.push_back(p.at_most("renewal_reconstruction", gap, sliver + 1e-14, sliver));
  o.checks.push_back(p.at_most("renewal_contraction", worst, 1.0 + 1e-12));
  o.checks.push_back(p.at_most("renewal_identity", ren.discrepancy, ren.bound, ren.bound));
  o.checks.push_back(p.at_most("lasota_yorke_violations", static_cast<double>(ly.violations.size()), 0.0));
  if (write) {
    io::write_json(p.out() / "ulam.json", o.record);
    io::write_coo(p.out() / "ulam_matrix.coo", op.matrix);
  }
  return o;
}

inline Outcome cmd_density(Pipeline& p, bool write) {
  const auto& fd = p.density();
  const auto& ext = p.extended();
  const double mu = p.mu_Xhat();
  const auto kac = kac_check(p.induced(), fd.density, ext.mu_Xhat);
  Outcome o;
  o.record = {{"cells", fd.density.size()},
              {"iterations", fd.iterations},
              {"fixed_density_residual", fd.residual},
              {"mu_Xhat_extension", ext.mu_Xhat},
              {"mu_Xhat_kac", mu},
              {"kac_sum", kac.value},
              {"kac_tail_slack", kac.tail_slack},
              {"extension_residual", ext.residual},
              {"extension_truncation_bound", ext.truncation_bound},
              {"extension_projection_slack", ext.projection_slack},
              {"extension_steps", ext.steps}};
  o.checks.push_back(p.at_most("fixed_density_residual", fd.residual, 1e-10));
  o.checks.push_back(p.near("kac_identity", kac.value, 1.0, 0.02, kac.tail_slack));
  if (write) {
    io::write_json(p.out() / "density.json", o.record);
    io::CsvWriter a(p.out() / "density_induced.csv", {"x_lo", "x_hi", "h_hat"});
    const Grid& g = fd.density.grid;
    for (std::size_t k = 0; k < g.size(); ++k) a.row({g.cell_lo(k), g.cell_hi(k), fd.density.values[k]});
    io::CsvWriter b(p.out() / "density_full.csv", {"x_lo", "x_hi", "h"});
    const Grid& gf = ext.h.grid;
    for (std::size_t k = 0; k < gf.size(); ++k) b.row({gf.cell_lo(k), gf.cell_hi(k), ext.h.values[k]});
  }
  return o;
}

inline Outcome cmd_decay(Pipeline& p, bool write) {
  const auto& cfg = p.config();
  const auto& op = p.induced_op();
  const auto& h = p.density().density;
  const double mu = p.mu_Xhat();
  const auto f = indicator(op.grid, cfg.decay.observable[0], cfg.decay.observable[1]);
  const auto cov = covariance_renewal(op, h, mu, f, f, cfg.decay.n);
  double mf = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) mf += f.values[k] * mu * h.values[k] / op.grid.length() * op.grid.width(k);
  const auto pred = predicted_leading_term(p.induced(), h, mu, mf, mf);
  const double beta = 1.0 / cfg.map.gamma;
  const auto fit = fit_rate(std::span<const double>(cov), 0, cfg.decay_window[0], cfg.decay_window[1]);

  double rmin = std::numeric_limits<double>::infinity(), rmax = -rmin;
  for (auto n = static_cast<std::size_t>(std::ceil(cfg.decay_window[0])); n <= static_cast<std::size_t>(cfg.decay_window[1]); ++n) {
    const double r = cov[n] / pred.values[n];
    rmin = std::min(rmin, r);
    rmax = std::max(rmax, r);
  }

  Outcome o;
  o.record = {{"observable", cfg.decay.observable},
              {"mu_Xhat", mu},
              {"mu_f", mf},
              {"cells", op.size()},
              {"n_split", op.n_split},
              {"beta", beta},
              {"rate_fit", fit},
              {"ratio_min", rmin},
              {"ratio_max", rmax},
              {"predicted_tail_bound", pred.tail_bound},
              {"truncation_mass", op.truncation_mass}};
  if (cfg.decay.mc_samples > 0) {
    McOptions mo;
    mo.samples = cfg.decay.mc_samples;
    mo.seed = cfg.seed;
    const double a = cfg.decay.observable[0], b = cfg.decay.observable[1];
    auto win = [a, b](double x) { return (x >= a && x <= b) ? 1.0 : 0.0; };
    nlohmann::json mc = nlohmann::json::array();
    for (const auto& e : covariance_mc_series(p.map(), win, win, cfg.decay.mc_lags, mo))
      mc.push_back({{"lag", e.lag}, {"estimate", e.estimate}, {"stderr", e.stderr_}});
    o.record["monte_carlo"] = {{"samples", mo.samples}, {"seed", mo.seed}, {"lags", mc}};
  }
  const double leak = op.truncation_mass;
  o.checks.push_back(p.near("decay_exponent", -fit.slope, beta - 1.0, 0.25, leak));
  o.checks.push_back(p.at_least("decay_ratio_min", rmin, 0.5, pred.tail_bound));
  o.checks.push_back(p.at_most("decay_ratio_max", rmax, 2.0, pred.tail_bound));
  if (write) {
    io::write_json(p.out() / "decay.json", o.record);
    io::CsvWriter csv(p.out() / "decay.csv", {"n", "cov", "predicted_term", "f_beta"});
    for (std::size_t n = 0; n <= cfg.decay.n; ++n) {
      const double fb = (n >= 2 && beta > 1.0) ? f_beta_envelope(static_cast<double>(n), beta)
                                                : std::numeric_limits<double>::quiet_NaN();
      csv.row({static_cast<double>(n), cov[n], pred.values[n], fb});
    }
  }
  return o;
}

inline Outcome cmd_aperiodicity(Pipeline& p, bool write) {
  const auto& cfg = p.config();
  const auto op = ulam_induced(p.induced(), cfg.aperiodicity.cells);
  const std::size_t T = cfg.aperiodicity.t_grid;
  const auto zero = twisted_min_sv(op, 0.0);
  std::vector<std::array<double, 2>> series;
  double best = std::numeric_limits<double>::infinity(), best_t = 0.0;
  for (std::size_t k = 1; k < T; ++k) {
    const double t = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(T);
    const double s = twisted_min_sv(op, t).sigma_min;
    series.push_back({t, s});
    if (s < best) {
      best = s;
      best_t = t;
    }
  }
  const auto gcd = return_time_gcd(p.induced());
  Outcome o;
  o.record = {{"gcd_return_times", gcd},
              {"min_twisted_sv", best},
              {"argmin_t", best_t},
              {"t_grid", T},
              {"sigma_at_zero", zero.sigma_min},
              {"omitted_mass", zero.omitted_mass},
              {"cells", op.size()}};
  o.checks.push_back(p.near("gcd_return_times", static_cast<double>(gcd), 1.0, 0.0));
  o.checks.push_back(p.at_least("min_twisted_sv", best, 0.05, zero.omitted_mass));
  o.checks.push_back(p.at_most("sigma_at_zero", zero.sigma_min, 1e-8, zero.omitted_mass));
  if (write) {
    io::write_json(p.out() / "aperiodicity.json", o.record);
    io::CsvWriter csv(p.out() / "aperiodicity.csv", {"t", "sigma_min"});
    csv.row({0.0, zero.sigma_min});
    for (const auto& [t, s] : series) csv.row({t, s});
  }
  return o;
}

inline Outcome cmd_scaling(Pipeline& p, bool write) {
  const auto& cfg = p.config();
  const std::size_t n = cfg.scaling.n_max;
  const double alpha = cfg.scaling.alpha;
  const auto ex71 = exponent_report(make_ex71(), n, alpha);
  const auto ex72 = exponent_report(make_ex72(0.5), n, alpha);
  const auto ex73 = exponent_report(make_ex73(), n, alpha);
  const auto ex74 = exponent_report(make_ex74(3, 1.0), n, alpha);
  const auto rad = exponent_report(make_radial(0.5, 2), n, alpha);
  Outcome o;
  o.record = {{"models", {ex71, ex72, ex73, ex74, rad}}};
  o.checks.push_back(p.near("ex71_det_exponent", ex71.beta_prime, 3.0, 0.1));
  o.checks.push_back(p.near("ex74_det_exponent", ex74.beta_prime, 4.0, 0.1));
  o.checks.push_back(p.near("ex73_det_exponent", ex73.beta_prime, 2.5, 0.1));
  o.checks.push_back(p.near("radial_norm_exponent", -rad.norm_fit.slope, 2.0, 0.1));
  if (alpha == 1.0) {
    o.checks.push_back(p.near("ex71_beta", ex71.beta_E, 1.25, 0.1));
    o.checks.push_back(p.near("ex71_predicted_decay", ex71.predicted_decay, 0.5, 0.05));
  }
  if (write) io::write_json(p.out() / "scaling.json", o.record);
  return o;
}

inline const std::vector<std::string>& commands() {
  static const std::vector<std::string> c{"validate", "induce",  "ulam",   "density", "decay",
                                          "aperiodicity", "scaling", "report", "all"};
  return c;
}

inline Outcome dispatch(Pipeline& p, const std::string& group, bool write) {
  if (group == "validate") return cmd_validate(p, write);
  if (group == "induce") return cmd_induce(p, write);
  if (group == "ulam") return cmd_ulam(p, write);
  if (group == "density") return cmd_density(p, write);
  if (group == "decay") return cmd_decay(p, write);
  if (group == "aperiodicity") return cmd_aperiodicity(p, write);
  if (group == "scaling") return cmd_scaling(p, write);
  throw ConfigError("unknown command '" + group + "'");
}

inline void print_check(std::ostream& log, const Check& c) {
  log << (c.pass() ? "PASS " : "FAIL ") << c.name << " value=" << io::number(c.value);
  if (c.kind == Check::Kind::near)
    log << " expected=" << io::number(c.expected) << " tol=" << io::number(c.tolerance);
  else
    log << (c.kind == Check::Kind::at_most ? " limit<=" : " limit>=") << io::number(c.expected);
  if (std::isfinite(c.bound)) log << " bound=" << io::number(c.bound);
  log << '\n';
}

inline std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const NumericalError*>(&e)) return "NumericalError";
  if (dynamic_cast<const ResolutionError*>(&e)) return "ResolutionError";
  if (dynamic_cast<const InsufficientDataError*>(&e)) return "InsufficientDataError";
  if (dynamic_cast<const RangeError*>(&e)) return "RangeError";
  if (dynamic_cast<const ContractError*>(&e)) return "ContractError";
  return "Error";
}

/// Runs one command; exit code 0 iff every check it evaluates passes.
inline int run(const std::string& command, const RunConfig& cfg, std::ostream& log, std::ostream& err) {
  try {
    check_config(cfg);
    if (std::find(commands().begin(), commands().end(), command) == commands().end())
      throw ConfigError("unknown command '" + command + "'");
    make_family(cfg.map);
    if (!(cfg.map.z >= 0.0 && cfg.map.z < 1.0)) throw ConfigError("map.z must lie in [0, 1)");
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const ConstructionError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  }

  Pipeline p(cfg);
  try {
    std::vector<std::string> groups;
    if (command == "report" || command == "all") {
      for (const auto& g : check_groups())
        if (std::find(cfg.checks.begin(), cfg.checks.end(), g) != cfg.checks.end()) groups.push_back(g);
    } else {
      groups.push_back(command);
    }
    const bool write = command != "report";
    std::vector<Check> all;
    nlohmann::json records = nlohmann::json::object();
    for (const auto& g : groups) {
      auto o = dispatch(p, g, write);
      records[g] = std::move(o.record);
      for (auto& c : o.checks) all.push_back(std::move(c));
    }
    std::size_t failed = 0;
    for (const auto& c : all) {
      print_check(log, c);
      failed += c.pass() ? 0 : 1;
    }
    if (command == "report" || command == "all") {
      nlohmann::json failing = nlohmann::json::array();
      for (const auto& c : all)
        if (!c.pass()) failing.push_back(c.name);
      io::write_json(p.out() / "report.json", {{"config", {{"map", cfg.map}, {"n_max", cfg.n_max}, {"cells", cfg.cells},
                                                           {"n_split", cfg.n_split}, {"seed", cfg.seed}}},
                                               {"checks", all},
                                               {"failing", failing},
                                               {"records", records},
                                               {"pass", failed == 0}});
    }
    log << (failed == 0 ? "ALL PASS" : std::to_string(failed) + " FAILED") << " (" << all.size() << " checks)\n";
    return failed == 0 ? kPass : kCheckFailed;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const ConstructionError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    const nlohmann::json diag{{"command", command}, {"error", error_kind(e)}, {"message", e.what()}};
    err << "numerical error: " << error_kind(e) << ": " << e.what() << '\n';
    try {
      io::write_json(p.out() / "error.json", diag);
    } catch (const std::exception&) {
    }
    return kNumericalError;
  }
}

}  // namespace intermit::cli
