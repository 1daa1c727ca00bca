#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include "mcp/caches.hpp"
#include "mcp/config.hpp"
#include "mcp/inference.hpp"
#include "mcp/prototypes.hpp"
#include "mcp/stream_io.hpp"
#include "mcp/tuning.hpp"

namespace mcp {

struct PredictResult {
  LogitsBreakdown breakdown;
  Vec zero_shot_probs;
  std::size_t zero_shot_pred = 0;
  double zero_shot_entropy = 0.0;
  bool low_entropy_path = false;
  std::optional<AdmissionDecision> entropy_admission;
  std::optional<AdmissionDecision> align_admission;
  std::optional<RoutingDecision> routing;
  std::optional<double> calibrated_entropy;
  std::optional<LossValue> loss;  // MCP++ only, before the step
  bool step_skipped = false;

  std::size_t pred() const { return breakdown.pred; }
};

/// One stream's adaptation state: text prototypes, cache bank, residuals and
/// optimizer. predict() is sequential; copies are independent.
class Engine {
 public:
  Engine(const StreamHeader& header, RunConfig config);

  /// Runs the full per-sample pipeline on N x d views (view 0 = original).
  /// Views are renormalized on intake.
  PredictResult predict(const Matrix& views);

  const RunConfig& config() const { return config_; }
  const Matrix& text() const { return text_; }
  const CacheBank& bank() const { return bank_; }
  const PrototypeState& prototypes() const { return state_; }
  const OptimizerState& optimizer() const { return opt_; }
  std::uint64_t samples_seen() const { return samples_; }

  /// Binary snapshot of bank, residuals and optimizer state.
  void save_snapshot(std::ostream& out) const;
  void save_snapshot(const std::string& path) const;
  /// Restores state written by save_snapshot; throws DataError on mismatch
  /// with this engine's C, d or cache capacities.
  void load_snapshot(std::istream& in);
  void load_snapshot(const std::string& path);

 private:
  Vec center_of(std::size_t c) const;
  void rebuild_prototypes();

  RunConfig config_;
  Matrix text_;
  CacheBank bank_;
  PrototypeState state_;
  OptimizerState opt_;
  std::uint64_t samples_ = 0;
};

/// Renormalized copy of a view matrix.
Matrix normalized_views(const Matrix& views);

}  // namespace mcp
