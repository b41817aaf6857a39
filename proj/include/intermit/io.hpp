#pragma once

// Plain-text artifacts: JSON records, CSV series and coordinate-format matrices.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Sparse>
#include <json.hpp>

namespace intermit::io {

/// Shortest text that reads back to the same double; nan and inf are spelled out.
inline std::string number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline std::ofstream open_for_write(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  auto out = open_for_write(path);
  out << j.dump(2) << '\n';
}

class CsvWriter {
public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header) : out_(open_for_write(path)) {
    for (std::size_t k = 0; k < header.size(); ++k) out_ << (k ? "," : "") << header[k];
    out_ << '\n';
  }

  void row(const std::vector<double>& values) {
    for (std::size_t k = 0; k < values.size(); ++k) out_ << (k ? "," : "") << number(values[k]);
    out_ << '\n';
  }

private:
  std::ofstream out_;
};

/// "rows cols nnz" header, then one "row col value" line per stored entry, 0-based.
template <class Sparse>
void write_coo(const std::filesystem::path& path, const Sparse& m) {
  auto out = open_for_write(path);
  out << "% rows cols nnz (0-based row col value)\n" << m.rows() << ' ' << m.cols() << ' ' << m.nonZeros() << '\n';
  for (Eigen::Index r = 0; r < m.outerSize(); ++r)
    for (typename Sparse::InnerIterator it(m, r); it; ++it)
      out << it.row() << ' ' << it.col() << ' ' << number(it.value()) << '\n';
}

}  // namespace intermit::io
