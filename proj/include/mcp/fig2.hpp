#pragma once

#include <string>
#include <vector>

#include "mcp/config.hpp"
#include "mcp/metrics.hpp"
#include "mcp/synth.hpp"

namespace mcp {

struct Fig2Dataset {
  std::string name;
  SynthSpec spec;
};

/// Sweep file: synth keys shared by every dataset plus `spreads = a, b, ...`
/// giving one dataset per spread value, and optionally `shifts` (same length)
/// pairing each spread with its own text displacement.
std::vector<Fig2Dataset> load_fig2_sweep(const std::string& path);

struct Fig2Point {
  std::string name;
  double spread = 0.0;
  double compactness_cached = 0.0;  // over final entropy + align cache contents, by pseudo-label
  double compactness_test = 0.0;    // over every original view, by true label
  double zero_shot_accuracy = 0.0;
  double mcp_accuracy = 0.0;
  double gain = 0.0;  // percentage points
};

struct Fig2Report {
  std::vector<Fig2Point> points;
  PearsonResult cached;  // compactness of cached samples vs gain
  PearsonResult test;    // compactness of test data vs gain
  double seconds = 0.0;

  std::string csv() const;
  std::string json() const;
};

/// Runs zero-shot and MCP on every dataset (in parallel, one engine each) and
/// correlates compactness with the accuracy gain.
Fig2Report fig2_experiment(const std::vector<Fig2Dataset>& datasets, const RunConfig& cfg,
                           std::size_t threads = 0);

}  // namespace mcp
