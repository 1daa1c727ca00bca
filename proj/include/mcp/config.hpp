#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mcp/caches.hpp"
#include "mcp/core.hpp"
#include "mcp/inference.hpp"
#include "mcp/tuning.hpp"

namespace mcp {

using KeyValues = std::vector<std::pair<std::string, std::string>>;

/// Flat `key = value` text, `#` starts a comment. Throws ConfigError with the
/// line number on malformed lines or duplicate keys.
KeyValues parse_key_values(const std::string& text);
KeyValues read_key_values(const std::string& path);

double parse_double(const std::string& key, const std::string& value);
std::uint64_t parse_uint(const std::string& key, const std::string& value);
bool parse_bool(const std::string& key, const std::string& value);
std::vector<double> parse_double_list(const std::string& key, const std::string& value);

enum class Mode { kMcp, kMcpPlusPlus };
enum class InferenceViews { kOriginal, kConfident };

const char* to_string(Mode m);
Mode parse_mode(const std::string& s);

struct RunConfig {
  HyperParams hp;
  Mode mode = Mode::kMcp;
  CacheToggles caches;
  TermToggles terms;
  LossToggles losses;
  bool persist_residuals = false;
  InferenceViews inference_views = InferenceViews::kOriginal;
  std::uint64_t seed = 0;
  std::string stream;  // optional default input path
  std::string out;     // optional default output prefix
  bool emit_terms = false;

  /// Applies one key; throws ConfigError for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  void apply(const KeyValues& kv);
  /// Validates cross-field constraints; throws ConfigError.
  void validate() const;
  /// Canonical key=value listing of every field, in a fixed order.
  KeyValues to_key_values() const;

  static RunConfig from_file(const std::string& path);
};

}  // namespace mcp
