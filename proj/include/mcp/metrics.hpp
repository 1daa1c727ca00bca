#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "mcp/core.hpp"

namespace mcp {

struct ClassCompactness {
  std::size_t count = 0;
  std::optional<double> mean_distance;  // absent for classes with < 2 samples
};

struct CompactnessReport {
  std::vector<ClassCompactness> classes;
  double grand_mean_distance = 0.0;
  /// 1 / grand mean distance; +infinity when every qualifying class is a point.
  double compactness = 0.0;
  std::size_t samples_used = 0;
};

/// Mean Euclidean distance of each sample to its class mean (unnormalized),
/// pooled over classes with at least two samples.
CompactnessReport compactness(const std::vector<Vec>& features, const std::vector<std::size_t>& labels,
                              std::size_t num_classes);

struct PearsonResult {
  double r = 0.0;
  double t = 0.0;
  double p = 1.0;  // two-sided, Student t with n - 2 dof
  std::size_t n = 0;
};

PearsonResult pearson(std::span<const double> xs, std::span<const double> ys);

/// t statistic r sqrt((n-2)/(1-r^2)).
double pearson_t(double r, std::size_t n);

}  // namespace mcp
