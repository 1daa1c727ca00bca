#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <vector>

namespace mcp::theory {

/// Retention of a confidence filter inside vs. outside an alignment region.
/// Samples are 2-D standard normal; the region is the disc around the origin
/// holding `align_region_prob` of the mass.
struct RetentionReport {
  std::uint64_t n_t = 0, k_t = 0, n_a = 0, k_a = 0;
  double ratio_t = 0.0;  // k_t / n_t
  double ratio_a = 0.0;  // k_a / n_a
  double gap = 0.0;
};

/// `dependent` replaces the independent filter with "accept iff inside the
/// region", which breaks the independence premise on purpose.
RetentionReport retention_ratio_sim(std::uint64_t n_t, double accept_prob, double align_region_prob,
                                    std::uint64_t seed, bool dependent = false);

struct Component {
  double weight = 1.0;
  std::array<double, 2> mean{0.0, 0.0};
  double sd = 1.0;
};

struct Mixture {
  std::vector<Component> components;
  std::array<double, 2> center{0.0, 0.0};  // class center mu_c

  /// Two overlapping isotropic blobs; center at the mixture mean.
  static Mixture standard();
};

struct DensityReport {
  double c_t_hat = 0.0;
  double c_a_hat = 0.0;
  double ratio = 0.0;             // c_a_hat / c_t_hat
  double region_prob = 0.0;       // n_a / n_t on the simulation sample
  double region_prob_ref = 0.0;   // independent re-estimate
  double probe_radius = 0.0;
  std::uint64_t n_t = 0, n_a = 0;
  bool equality_case = false;     // region holds every sample, so p_a = p_t
};

/// Local-mass density constants of p_t and p_a = p_t(x | |x - mu| <= d0),
/// averaged over small probe balls placed inside the region.
DensityReport density_constants_sim(const Mixture& mix, double d0, std::uint64_t seed,
                                    std::uint64_t n = 1'000'000, std::size_t probes = 64,
                                    double probe_radius = 0.1);

/// Radius around the mixture's center holding fraction q of the mass.
double radius_quantile(const Mixture& mix, double q, std::uint64_t seed, std::uint64_t n = 200'000);

inline constexpr double kInfiniteRadius = std::numeric_limits<double>::infinity();

}  // namespace mcp::theory
