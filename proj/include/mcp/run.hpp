#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mcp/config.hpp"
#include "mcp/engine.hpp"
#include "mcp/stream_io.hpp"

namespace mcp {

struct RunSummary {
  std::uint64_t samples = 0;
  std::uint64_t labeled = 0;
  std::uint64_t correct = 0;
  std::uint64_t zero_shot_correct = 0;
  std::array<std::size_t, 3> occupancy{};  // entropy, align, negative
  std::array<CacheCounters, 3> turnover{};
  std::uint64_t reader_warnings = 0;
  std::uint64_t skipped_steps = 0;
  std::uint64_t tuned_samples = 0;
  double mean_loss_entropy = 0.0;
  double mean_loss_align = 0.0;
  double mean_loss_contrast = 0.0;
  double mean_loss_total = 0.0;  // weighted objective actually minimized
  double wall_ms = 0.0;
  bool completed = false;
  std::string error;
  KeyValues config;

  /// Top-1 accuracy in percent; absent on unlabeled streams.
  std::optional<double> accuracy() const;
  std::optional<double> zero_shot_accuracy() const;
  /// Summary JSON; `include_wall_time` false gives byte-stable output.
  std::string to_json(bool include_wall_time = true) const;
};

/// Drives the engine over the source in order. Per-sample JSON lines go to
/// `jsonl` when given. `summary` is filled as records are processed, so it
/// holds partial metrics when an exception propagates.
void run_stream(Engine& engine, RecordSource& source, std::ostream* jsonl, RunSummary& summary);
RunSummary run_stream(Engine& engine, RecordSource& source, std::ostream* jsonl = nullptr);

/// Convenience: build an engine from `cfg` and run the source through it.
RunSummary run_config(const RunConfig& cfg, RecordSource& source, std::ostream* jsonl = nullptr);

/// Whole stream in memory, for repeated runs over the same data.
struct LoadedStream {
  StreamHeader header;
  std::shared_ptr<const std::vector<SampleRecord>> records;
  std::uint64_t warnings = 0;

  MemorySource source() const { return MemorySource(header, records); }
};

LoadedStream load_stream(const std::string& path);

using SourceFactory = std::function<std::unique_ptr<RecordSource>()>;

// ---- grid search ----

struct GridSpec {
  std::vector<double> alpha1{1.0};
  std::vector<double> alpha2{1.0};
  std::vector<double> alpha3{1.0};
  std::vector<double> w{0.8};

  std::size_t size() const { return alpha1.size() * alpha2.size() * alpha3.size() * w.size(); }
};

struct GridRow {
  double alpha1 = 0.0, alpha2 = 0.0, alpha3 = 0.0, w = 0.0;
  double accuracy = 0.0;
};

struct GridResult {
  std::vector<GridRow> rows;  // lexicographic grid order (alpha1, alpha2, alpha3, w)
  std::size_t best = 0;       // highest accuracy; earliest row on ties
};

/// Exhaustive search; each point runs on its own engine. `threads` = 0 uses
/// the hardware concurrency. Requires a labeled stream.
GridResult grid_search(const RunConfig& base, const SourceFactory& make_source, const GridSpec& grid,
                       std::size_t threads = 0);

std::string grid_table_tsv(const GridResult& g);

}  // namespace mcp
