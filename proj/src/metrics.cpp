#include "mcp/metrics.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <limits>

namespace mcp {

CompactnessReport compactness(const std::vector<Vec>& features, const std::vector<std::size_t>& labels,
                              std::size_t num_classes) {
  if (features.size() != labels.size()) throw InvalidArgument("compactness: features/labels size mismatch");
  CompactnessReport rep;
  rep.classes.resize(num_classes);
  const std::size_t d = features.empty() ? 0 : features.front().size();
  Matrix means(num_classes, d);
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (labels[i] >= num_classes) throw InvalidArgument("compactness: label out of range");
    check_dims(features[i].size(), d, "compactness");
    const auto n = static_cast<double>(++rep.classes[labels[i]].count);
    Row m = means.row(labels[i]);
    for (std::size_t j = 0; j < d; ++j) m[j] += (features[i][j] - m[j]) / n;
  }
  Vec dist_sum(num_classes, 0.0);
  for (std::size_t i = 0; i < features.size(); ++i)
    dist_sum[labels[i]] += distance(features[i], means.row(labels[i]));

  double total = 0.0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    auto& cc = rep.classes[c];
    if (cc.count < 2) continue;
    cc.mean_distance = dist_sum[c] / static_cast<double>(cc.count);
    total += dist_sum[c];
    rep.samples_used += cc.count;
  }
  if (rep.samples_used == 0) throw InvalidArgument("compactness: no class has two or more samples");
  rep.grand_mean_distance = total / static_cast<double>(rep.samples_used);
  rep.compactness = rep.grand_mean_distance > 0.0 ? 1.0 / rep.grand_mean_distance
                                                  : std::numeric_limits<double>::infinity();
  return rep;
}

double pearson_t(double r, std::size_t n) {
  if (std::abs(r) >= 1.0) return std::copysign(std::numeric_limits<double>::infinity(), r);
  return r * std::sqrt(static_cast<double>(n - 2) / (1.0 - r * r));
}

PearsonResult pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw InvalidArgument("pearson: length mismatch");
  const std::size_t n = xs.size();
  if (n < 3) throw InvalidArgument("pearson: need at least 3 pairs");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) throw InvalidArgument("pearson: zero variance");
  PearsonResult res;
  res.n = n;
  res.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  res.t = pearson_t(res.r, n);
  if (std::isinf(res.t)) {
    res.p = 0.0;
  } else {
    boost::math::students_t dist(static_cast<double>(n - 2));
    res.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(res.t)));
  }
  return res;
}

}  // namespace mcp
