#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>

#include <json.hpp>

#include "intermit/induced_system.hpp"
#include "intermit/map_models.hpp"

namespace intermit {

struct ValidationReport {
  double z = 0.0;
  bool z_in_first_branch = false;
  bool image_in_first_branch = false;  // T(z) in I_1
  double delta = 0.0;                  // inf of |T'| over [z, 1]
  bool strict_expansion = false;       // delta > 2
  double distortion = 0.0;             // C
  double min_image_length = 0.0;       // c
  double eta = 0.0;                    // 2 / delta
  double D = 0.0;                      // 2C + 2/c
  std::size_t gcd_return_times = 0;    // over return times <= 50
  bool rigorous = true;
  std::string note;

  bool passes() const {
    return z_in_first_branch && image_in_first_branch && strict_expansion && gcd_return_times == 1 &&
           std::isfinite(distortion);
  }
};

inline void to_json(nlohmann::json& j, const ValidationReport& r) {
  j = nlohmann::json{{"z", r.z},
                     {"z_in_first_branch", r.z_in_first_branch},
                     {"image_in_first_branch", r.image_in_first_branch},
                     {"delta", r.delta},
                     {"strict_expansion", r.strict_expansion},
                     {"distortion", r.distortion},
                     {"min_image_length", r.min_image_length},
                     {"eta", r.eta},
                     {"D", r.D},
                     {"gcd_return_times", r.gcd_return_times},
                     {"rigorous", r.rigorous},
                     {"passes", r.passes()},
                     {"note", r.note}};
}

/// inf |T'| over [z, 1]: a dense sample per branch plus the analytic minimum of each kind.
inline double expansion_bound(const BranchMap& map, double z) {
  constexpr int kSamples = 4096;
  double delta = std::numeric_limits<double>::infinity();
  for (const auto& b : map.branches()) {
    const double lo = std::max(b.lo(), z);
    if (!(lo < b.hi())) continue;
    if (const auto* a = std::get_if<AffineKind>(&b.kind())) {
      delta = std::min(delta, std::abs(a->slope));
      continue;
    }
    if (b.is_cusp()) {
      delta = std::min(delta, b.derivative(lo));  // increasing derivative
      continue;
    }
    for (int s = 0; s <= kSamples; ++s) delta = std::min(delta, std::abs(b.derivative(lo + (b.hi() - lo) * s / kSamples)));
  }
  return delta;
}

/// Checks the standing assumptions at inducing point z. Failures are flags, never exceptions.
inline ValidationReport validate_assumptions(const BranchMap& map, double z, std::size_t n_max = 1000) {
  ValidationReport r;
  r.z = z;
  const Branch& b1 = map.branch(0);
  if (!(z >= 0.0 && z <= 1.0)) {
    r.note = "z outside [0,1]";
    return r;
  }
  r.delta = expansion_bound(map, z);
  r.strict_expansion = r.delta > 2.0;
  r.eta = 2.0 / r.delta;
  r.z_in_first_branch = z < b1.hi();
  if (!r.z_in_first_branch) {
    r.note = "z outside the first branch domain";
    return r;
  }
  const double tz = b1.value(z);
  r.image_in_first_branch = z == 0.0 || (tz > z && map.owner(std::clamp(tz, 0.0, 1.0)) == 0);
  if (!r.image_in_first_branch) {
    r.note = "T(z) is not in the first branch domain";
    return r;
  }
  try {
    const auto ind = build_induced(map, z, n_max);
    r.distortion = ind.distortion;
    r.min_image_length = ind.min_image_length;
    r.D = 2.0 * r.distortion + 2.0 / r.min_image_length;
    r.gcd_return_times = return_time_gcd(ind, 50);
    r.rigorous = ind.rigorous;
    if (ind.tail_bound > 0.0) r.note = "image family truncated at n_max = " + std::to_string(n_max);
  } catch (const std::exception& e) {
    r.note = std::string("induced system construction failed: ") + e.what();
  }
  return r;
}

}  // namespace intermit
