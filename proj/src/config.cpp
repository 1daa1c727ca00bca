#include "mcp/config.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace mcp {

namespace {

std::string trim(std::string s) {
  const auto ws = [](unsigned char c) { return std::isspace(c) != 0; };
  s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), ws));
  s.erase(std::find_if_not(s.rbegin(), s.rend(), ws).base(), s.end());
  return s;
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    if (!seen.insert(key).second)
      throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    kv.emplace_back(std::move(key), std::move(value));
  }
  return kv;
}

KeyValues read_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_key_values(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected a number, got '" + value + "'");
  }
}

std::uint64_t parse_uint(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, v);
  if (ec != std::errc() || ptr != end)
    throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + value + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "on" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "off" || value == "no") return false;
  throw ConfigError("key '" + key + "': expected a boolean, got '" + value + "'");
}

std::vector<double> parse_double_list(const std::string& key, const std::string& value) {
  std::vector<double> out;
  std::istringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_double(key, item));
  }
  if (out.empty()) throw ConfigError("key '" + key + "': empty list");
  return out;
}

const char* to_string(Mode m) { return m == Mode::kMcp ? "mcp" : "mcp++"; }

Mode parse_mode(const std::string& s) {
  if (s == "mcp" || s == "MCP") return Mode::kMcp;
  if (s == "mcp++" || s == "MCP++" || s == "mcppp") return Mode::kMcpPlusPlus;
  throw ConfigError("unknown mode '" + s + "' (expected mcp or mcp++)");
}

void RunConfig::set(const std::string& key, const std::string& v) {
  auto num = [&](double& dst) { dst = parse_double(key, v); };
  auto size = [&](std::size_t& dst) { dst = static_cast<std::size_t>(parse_uint(key, v)); };
  auto flag = [&](bool& dst) { dst = parse_bool(key, v); };

  if (key == "tau") num(hp.tau);
  else if (key == "alpha") num(hp.alpha);
  else if (key == "beta") num(hp.beta);
  else if (key == "w") num(hp.w);
  else if (key == "alpha1") num(hp.alpha1);
  else if (key == "alpha2") num(hp.alpha2);
  else if (key == "alpha3") num(hp.alpha3);
  else if (key == "lambda") num(hp.lambda);
  else if (key == "gamma") num(hp.gamma);
  else if (key == "rho") num(hp.rho);
  else if (key == "eps") num(hp.eps);
  else if (key == "lr") num(hp.lr);
  else if (key == "weight_decay") num(hp.weight_decay);
  else if (key == "adam_beta1") num(hp.adam_beta1);
  else if (key == "adam_beta2") num(hp.adam_beta2);
  else if (key == "adam_eps") num(hp.adam_eps);
  else if (key == "h_low_frac") num(hp.h_low_frac);
  else if (key == "h_high_frac") num(hp.h_high_frac);
  else if (key == "e_gate_frac") num(hp.e_gate_frac);
  else if (key == "p_mask") num(hp.p_mask);
  else if (key == "cache_entropy") size(hp.m_entropy);
  else if (key == "cache_align") size(hp.m_align);
  else if (key == "cache_negative") size(hp.m_negative);
  else if (key == "normalization") {
    try {
      hp.normalization = parse_normalization(v);
    } catch (const InvalidArgument& e) {
      throw ConfigError(e.what());
    }
  }
  else if (key == "mode") mode = parse_mode(v);
  else if (key == "use_entropy_cache") flag(caches.entropy);
  else if (key == "use_align_cache") flag(caches.align);
  else if (key == "use_negative_cache") flag(caches.negative);
  else if (key == "use_text_term") flag(terms.text);
  else if (key == "use_visual_term") flag(terms.visual);
  else if (key == "use_cache_term") flag(terms.cache);
  else if (key == "use_align_loss") flag(losses.align);
  else if (key == "use_contrast_loss") flag(losses.contrast);
  else if (key == "persist_residuals") flag(persist_residuals);
  else if (key == "inference_views") {
    if (v == "original") inference_views = InferenceViews::kOriginal;
    else if (v == "confident") inference_views = InferenceViews::kConfident;
    else throw ConfigError("key 'inference_views': expected original or confident");
  }
  else if (key == "seed") seed = parse_uint(key, v);
  else if (key == "stream") stream = v;
  else if (key == "out") out = v;
  else if (key == "emit_terms") flag(emit_terms);
  else throw ConfigError("unknown config key '" + key + "'");
}

void RunConfig::apply(const KeyValues& kv) {
  for (const auto& [k, v] : kv) set(k, v);
}

void RunConfig::validate() const {
  try {
    hp.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
}

KeyValues RunConfig::to_key_values() const {
  auto b = [](bool x) { return std::string(x ? "true" : "false"); };
  return {
      {"mode", to_string(mode)},
      {"tau", fmt_double(hp.tau)},
      {"alpha", fmt_double(hp.alpha)},
      {"beta", fmt_double(hp.beta)},
      {"w", fmt_double(hp.w)},
      {"alpha1", fmt_double(hp.alpha1)},
      {"alpha2", fmt_double(hp.alpha2)},
      {"alpha3", fmt_double(hp.alpha3)},
      {"lambda", fmt_double(hp.lambda)},
      {"gamma", fmt_double(hp.gamma)},
      {"rho", fmt_double(hp.rho)},
      {"eps", fmt_double(hp.eps)},
      {"lr", fmt_double(hp.lr)},
      {"weight_decay", fmt_double(hp.weight_decay)},
      {"adam_beta1", fmt_double(hp.adam_beta1)},
      {"adam_beta2", fmt_double(hp.adam_beta2)},
      {"adam_eps", fmt_double(hp.adam_eps)},
      {"h_low_frac", fmt_double(hp.h_low_frac)},
      {"h_high_frac", fmt_double(hp.h_high_frac)},
      {"e_gate_frac", fmt_double(hp.e_gate_frac)},
      {"p_mask", fmt_double(hp.p_mask)},
      {"cache_entropy", std::to_string(hp.m_entropy)},
      {"cache_align", std::to_string(hp.m_align)},
      {"cache_negative", std::to_string(hp.m_negative)},
      {"normalization", to_string(hp.normalization)},
      {"use_entropy_cache", b(caches.entropy)},
      {"use_align_cache", b(caches.align)},
      {"use_negative_cache", b(caches.negative)},
      {"use_text_term", b(terms.text)},
      {"use_visual_term", b(terms.visual)},
      {"use_cache_term", b(terms.cache)},
      {"use_align_loss", b(losses.align)},
      {"use_contrast_loss", b(losses.contrast)},
      {"persist_residuals", b(persist_residuals)},
      {"inference_views", inference_views == InferenceViews::kOriginal ? "original" : "confident"},
      {"seed", std::to_string(seed)},
  };
}

RunConfig RunConfig::from_file(const std::string& path) {
  RunConfig cfg;
  cfg.apply(read_key_values(path));
  // Relative data paths resolve against the config file's directory.
  const auto base = std::filesystem::path(path).parent_path();
  auto resolve = [&](std::string& p) {
    if (!p.empty() && std::filesystem::path(p).is_relative()) p = (base / p).lexically_normal().string();
  };
  resolve(cfg.stream);
  resolve(cfg.out);
  cfg.validate();
  return cfg;
}

}  // namespace mcp
