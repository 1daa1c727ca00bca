#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mcp/stream_io.hpp"

namespace mcp {

/// Desk-scale stand-in for a real embedding dataset: class means on the unit
/// sphere, Gaussian intra-class spread, noisy augmented views, and text
/// prototypes displaced toward a neighbouring class (the modality gap).
struct SynthSpec {
  std::size_t classes = 8;
  std::size_t dim = 64;
  double min_angle_deg = 60.0;
  double spread = 0.8;       // norm of the intra-class perturbation
  double view_noise = 0.3;   // norm of the per-view perturbation
  double shift = 0.5;        // text prototype displacement
  std::size_t prompts_per_class = 3;
  double prompt_noise = 0.05;
  std::size_t samples = 1000;
  std::size_t views = 32;
  std::uint64_t seed = 0;

  /// Sets one field from a key=value pair; throws ConfigError on unknown keys.
  void set(const std::string& key, const std::string& value);
  void validate() const;
};

/// Parses a flat key=value file (# comments) into a SynthSpec; keys not
/// belonging to SynthSpec are returned in `rest` when given, else rejected.
SynthSpec load_synth_spec(const std::string& path,
                          std::vector<std::pair<std::string, std::string>>* rest = nullptr);

struct SynthStream {
  StreamHeader header;
  std::vector<SampleRecord> records;
};

SynthStream synth_stream(const SynthSpec& spec);
void write_synth_stream(const SynthSpec& spec, const std::string& path);

}  // namespace mcp
