#include "mcp/theory.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "mcp/core.hpp"

namespace mcp::theory {

RetentionReport retention_ratio_sim(std::uint64_t n_t, double accept_prob, double region_prob,
                                    std::uint64_t seed, bool dependent) {
  if (n_t == 0) throw InvalidArgument("retention_ratio_sim: n_t must be positive");
  if (!(accept_prob > 0.0 && accept_prob <= 1.0) || !(region_prob > 0.0 && region_prob < 1.0))
    throw InvalidArgument("retention_ratio_sim: probabilities must lie in (0,1)");
  // chi-square(2) quantile: P(|x| <= r) = 1 - exp(-r^2/2)
  const double r2 = -2.0 * std::log1p(-region_prob);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  RetentionReport rep;
  rep.n_t = n_t;
  for (std::uint64_t i = 0; i < n_t; ++i) {
    const double x = gauss(rng);
    const double y = gauss(rng);
    const bool inside = x * x + y * y <= r2;
    const double u = unif(rng);
    const bool accept = dependent ? inside : u < accept_prob;
    rep.k_t += accept;
    rep.n_a += inside;
    rep.k_a += accept && inside;
  }
  rep.ratio_t = static_cast<double>(rep.k_t) / static_cast<double>(rep.n_t);
  rep.ratio_a = rep.n_a ? static_cast<double>(rep.k_a) / static_cast<double>(rep.n_a) : 0.0;
  rep.gap = std::abs(rep.ratio_t - rep.ratio_a);
  return rep;
}

Mixture Mixture::standard() {
  Mixture m;
  m.components = {{0.6, {0.0, 0.0}, 1.0}, {0.4, {1.5, 0.5}, 0.7}};
  m.center = {0.6 * 0.0 + 0.4 * 1.5, 0.6 * 0.0 + 0.4 * 0.5};
  return m;
}

namespace {

using Point = std::array<double, 2>;

std::vector<Point> sample_mixture(const Mixture& mix, std::uint64_t n, std::uint64_t seed) {
  if (mix.components.empty()) throw InvalidArgument("mixture has no components");
  std::vector<double> w;
  for (const auto& c : mix.components) w.push_back(c.weight);
  std::mt19937_64 rng(seed);
  std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<Point> pts(n);
  for (auto& p : pts) {
    const auto& c = mix.components[pick(rng)];
    p[0] = c.mean[0] + c.sd * gauss(rng);
    p[1] = c.mean[1] + c.sd * gauss(rng);
  }
  return pts;
}

double dist2(const Point& a, const Point& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1];
  return dx * dx + dy * dy;
}

}  // namespace

double radius_quantile(const Mixture& mix, double q, std::uint64_t seed, std::uint64_t n) {
  if (!(q > 0.0 && q < 1.0)) throw InvalidArgument("radius_quantile: q must lie in (0,1)");
  auto pts = sample_mixture(mix, n, seed);
  std::vector<double> r(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) r[i] = std::sqrt(dist2(pts[i], mix.center));
  const auto k = static_cast<std::size_t>(q * static_cast<double>(r.size()));
  std::nth_element(r.begin(), r.begin() + static_cast<std::ptrdiff_t>(k), r.end());
  return r[k];
}

DensityReport density_constants_sim(const Mixture& mix, double d0, std::uint64_t seed, std::uint64_t n,
                                    std::size_t probes, double probe_radius) {
  if (!(d0 > 0.0)) throw InvalidArgument("density_constants_sim: d0 must be positive");
  const auto pts = sample_mixture(mix, n, seed);
  const double d0sq = std::isinf(d0) ? std::numeric_limits<double>::infinity() : d0 * d0;

  DensityReport rep;
  rep.n_t = n;
  std::vector<char> inside(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    inside[i] = dist2(pts[i], mix.center) <= d0sq;
    rep.n_a += inside[i];
  }
  if (rep.n_a == 0) throw InvalidArgument("density_constants_sim: region holds no samples");
  rep.region_prob = static_cast<double>(rep.n_a) / static_cast<double>(rep.n_t);
  rep.equality_case = rep.n_a == rep.n_t;

  {
    const auto ref = sample_mixture(mix, n, seed ^ 0x9e3779b97f4a7c15ULL);
    std::uint64_t in = 0;
    for (const auto& p : ref) in += dist2(p, mix.center) <= d0sq;
    rep.region_prob_ref = static_cast<double>(in) / static_cast<double>(n);
  }

  // Probe balls lie entirely inside the region so p_a is a pure rescaling of p_t there.
  const double r = std::isinf(d0) ? probe_radius : std::min(probe_radius, 0.5 * d0);
  rep.probe_radius = r;
  const double limit = std::isinf(d0) ? std::numeric_limits<double>::infinity() : (d0 - r) * (d0 - r);
  std::vector<Point> centers;
  {
    const auto cand = sample_mixture(mix, 50 * probes + 1000, seed + 17);
    for (const auto& p : cand) {
      if (dist2(p, mix.center) <= limit) centers.push_back(p);
      if (centers.size() == probes) break;
    }
  }
  if (centers.empty()) throw InvalidArgument("density_constants_sim: no probe fits inside the region");

  std::uint64_t count_t = 0, count_a = 0;
  const double r2 = r * r;
  for (const auto& c : centers)
    for (std::size_t i = 0; i < pts.size(); ++i)
      if (dist2(pts[i], c) <= r2) {
        ++count_t;
        count_a += inside[i];
      }
  const double vol = static_cast<double>(centers.size()) * std::numbers::pi * r2;
  rep.c_t_hat = static_cast<double>(count_t) / (static_cast<double>(rep.n_t) * vol);
  rep.c_a_hat = static_cast<double>(count_a) / (static_cast<double>(rep.n_a) * vol);
  rep.ratio = rep.c_t_hat > 0.0 ? rep.c_a_hat / rep.c_t_hat : 0.0;
  return rep;
}

}  // namespace mcp::theory
