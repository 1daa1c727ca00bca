#include "mcp/synth.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "mcp/config.hpp"

namespace mcp {

namespace {

constexpr std::size_t kMaxPackingTries = 100000;

Vec gaussian(std::mt19937_64& rng, std::size_t d, double scale) {
  std::normal_distribution<double> g(0.0, 1.0);
  Vec v(d);
  for (auto& x : v) x = scale * g(rng);
  return v;
}

Vec random_unit(std::mt19937_64& rng, std::size_t d) {
  for (;;) {
    Vec v = gaussian(rng, d, 1.0);
    if (norm(v) > 1e-9) return l2_normalize(v);
  }
}

Vec axpy(const Vec& a, double s, const Vec& b) {
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + s * b[i];
  return out;
}

// Stored as f32 on disk; rounding here keeps memory and file streams identical.
Vec to_f32(Vec v) {
  for (auto& x : v) x = static_cast<double>(static_cast<float>(x));
  return v;
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint32_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), tag};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

}  // namespace

void SynthSpec::set(const std::string& key, const std::string& value) {
  auto size = [&](std::size_t& dst) { dst = static_cast<std::size_t>(parse_uint(key, value)); };
  if (key == "classes") size(classes);
  else if (key == "dim") size(dim);
  else if (key == "min_angle_deg") min_angle_deg = parse_double(key, value);
  else if (key == "spread") spread = parse_double(key, value);
  else if (key == "view_noise") view_noise = parse_double(key, value);
  else if (key == "shift") shift = parse_double(key, value);
  else if (key == "prompts_per_class") size(prompts_per_class);
  else if (key == "prompt_noise") prompt_noise = parse_double(key, value);
  else if (key == "samples") size(samples);
  else if (key == "views") size(views);
  else if (key == "seed") seed = parse_uint(key, value);
  else throw ConfigError("unknown synth key '" + key + "'");
}

void SynthSpec::validate() const {
  if (classes < 2) throw ConfigError("synth: classes must be >= 2");
  if (dim < 2) throw ConfigError("synth: dim must be >= 2");
  if (views < 1) throw ConfigError("synth: views must be >= 1");
  if (prompts_per_class < 1) throw ConfigError("synth: prompts_per_class must be >= 1");
  if (!(min_angle_deg >= 0.0 && min_angle_deg < 180.0)) throw ConfigError("synth: min_angle_deg in [0, 180)");
  for (double x : {spread, view_noise, shift, prompt_noise})
    if (!(x >= 0.0) || !std::isfinite(x)) throw ConfigError("synth: noise scales must be finite and >= 0");
}

SynthSpec load_synth_spec(const std::string& path, KeyValues* rest) {
  SynthSpec spec;
  static const char* const kKeys[] = {"classes", "dim", "min_angle_deg", "spread", "view_noise", "shift",
                                      "prompts_per_class", "prompt_noise", "samples", "views", "seed"};
  for (const auto& [k, v] : read_key_values(path)) {
    bool known = false;
    for (const char* name : kKeys) known = known || k == name;
    if (known) spec.set(k, v);
    else if (rest) rest->emplace_back(k, v);
    else throw ConfigError(path + ": unknown synth key '" + k + "'");
  }
  spec.validate();
  return spec;
}

SynthStream synth_stream(const SynthSpec& spec) {
  spec.validate();
  const std::size_t C = spec.classes, d = spec.dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  const double max_cos = std::cos(spec.min_angle_deg * std::numbers::pi / 180.0);

  std::mt19937_64 rng_means(stream_seed(spec.seed, 1));
  std::mt19937_64 rng_shift(stream_seed(spec.seed, 2));
  std::mt19937_64 rng_prompts(stream_seed(spec.seed, 3));
  std::mt19937_64 rng_samples(stream_seed(spec.seed, 4));

  std::vector<Vec> means;
  std::size_t tries = 0;
  while (means.size() < C) {
    if (++tries > kMaxPackingTries)
      throw InvalidArgument("synth: cannot place " + std::to_string(C) + " class means " +
                            std::to_string(spec.min_angle_deg) + " degrees apart in d=" + std::to_string(d));
    Vec m = random_unit(rng_means, d);
    bool ok = true;
    for (const auto& o : means) ok = ok && dot(m, o) <= max_cos;
    if (ok) means.push_back(std::move(m));
  }

  SynthStream s;
  s.header.dim = d;
  s.header.prompts.resize(C);
  for (std::size_t c = 0; c < C; ++c) {
    s.header.class_names.push_back("class_" + std::to_string(c));
    const Vec toward = axpy(means[(c + 1) % C], -1.0, means[c]);
    Vec u = axpy(l2_normalize(toward), 0.5, random_unit(rng_shift, d));
    const Vec text = l2_normalize(axpy(means[c], spec.shift, l2_normalize(u)));
    for (std::size_t p = 0; p < spec.prompts_per_class; ++p)
      s.header.prompts[c].push_back(
          to_f32(l2_normalize(axpy(text, 1.0, gaussian(rng_prompts, d, spec.prompt_noise * scale)))));
  }

  std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(C - 1));
  s.records.reserve(spec.samples);
  for (std::size_t i = 0; i < spec.samples; ++i) {
    SampleRecord r;
    const std::uint32_t label = pick(rng_samples);
    r.label = label;
    r.views = Matrix(spec.views, d);
    const Vec base = l2_normalize(axpy(means[label], 1.0, gaussian(rng_samples, d, spec.spread * scale)));
    r.views.set_row(0, to_f32(base));
    for (std::size_t v = 1; v < spec.views; ++v)
      r.views.set_row(v, to_f32(l2_normalize(axpy(base, 1.0, gaussian(rng_samples, d, spec.view_noise * scale)))));
    s.records.push_back(std::move(r));
  }
  return s;
}

void write_synth_stream(const SynthSpec& spec, const std::string& path) {
  const SynthStream s = synth_stream(spec);
  write_stream(path, s.header, s.records);
}

}  // namespace mcp
