#include "mcp/engine.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace mcp {

namespace {

AdamConfig adam_config(const HyperParams& hp) {
  return {hp.lr, hp.adam_beta1, hp.adam_beta2, hp.adam_eps, hp.weight_decay};
}

CacheCapacities capacities(const HyperParams& hp) { return {hp.m_entropy, hp.m_align, hp.m_negative}; }

Vec mean_probs(const std::vector<Vec>& probs, const std::vector<std::size_t>& idx) {
  Vec m(probs.front().size(), 0.0);
  for (std::size_t n : idx)
    for (std::size_t c = 0; c < m.size(); ++c) m[c] += probs[n][c];
  for (double& x : m) x /= static_cast<double>(idx.size());
  return m;
}

}  // namespace

Matrix normalized_views(const Matrix& views) {
  Matrix out = views;
  for (std::size_t n = 0; n < out.rows(); ++n) l2_normalize_inplace(out.row(n));
  return out;
}

Engine::Engine(const StreamHeader& header, RunConfig config)
    : config_(std::move(config)),
      text_(text_prototypes(header.prompts)),
      bank_(header.num_classes(), header.dim, capacities(config_.hp), config_.caches),
      opt_(header.num_classes(), header.dim, adam_config(config_.hp)) {
  config_.validate();
  rebuild_prototypes();
}

void Engine::rebuild_prototypes() {
  const bool keep = config_.persist_residuals && state_.res_text.rows() == text_.rows();
  state_ = build_prototypes(text_, bank_, config_.hp.w, keep ? &state_ : nullptr);
}

Vec Engine::center_of(std::size_t c) const {
  const PrototypeState s =
      build_prototypes(text_, bank_, config_.hp.w, config_.persist_residuals ? &state_ : nullptr);
  return class_center(s, c, config_.hp.w);
}

PredictResult Engine::predict(const Matrix& raw_views) {
  if (raw_views.rows() == 0) throw InvalidArgument("predict: no views");
  check_dims(raw_views.cols(), bank_.dim(), "predict views");
  const Matrix views = normalized_views(raw_views);
  const HyperParams& hp = config_.hp;
  const std::size_t C = bank_.num_classes();
  ConstRow f = views.row(0);

  PredictResult r;
  r.zero_shot_probs = zero_shot_probs(f, text_, hp.tau);
  r.zero_shot_entropy = entropy_unchecked(r.zero_shot_probs);
  r.zero_shot_pred = argmax(r.zero_shot_probs);

  const double gate = hp.e_gate_frac * std::log(static_cast<double>(C));
  r.low_entropy_path = r.zero_shot_entropy <= gate;
  if (r.low_entropy_path) {
    r.entropy_admission = bank_.entropy_cache_update(f, r.zero_shot_probs);
    if (bank_.toggles().align)
      r.align_admission = bank_.align_cache_update(f, r.zero_shot_probs, center_of(r.zero_shot_pred));
  }
  if (!r.low_entropy_path || !r.entropy_admission->stored()) {
    const ReflectResult cal = reflect(f, bank_, text_, hp);
    r.calibrated_entropy = cal.entropy;
    r.routing = bank_.negative_cache_update(f, cal.probs, cal.entropy, hp);
    if (r.routing->route == Route::kReconsider) {
      r.entropy_admission = bank_.entropy_cache_update(f, cal.probs);
      if (!r.low_entropy_path && bank_.toggles().align)
        r.align_admission = bank_.align_cache_update(f, cal.probs, center_of(argmax(cal.probs)));
    }
  }

  rebuild_prototypes();

  std::optional<TuningProblem> problem;
  auto tuning_problem = [&]() -> const TuningProblem& {
    if (!problem) problem = make_tuning_problem(views, bank_, state_, hp, config_.terms, config_.losses);
    return *problem;
  };

  if (config_.mode == Mode::kMcpPlusPlus) {
    if (!config_.persist_residuals) {
      state_.res_text.fill(0.0);
      state_.res_visual.fill(0.0);
      opt_.reset();
    }
    const auto g = grad_residuals(tuning_problem(), state_.res_text, state_.res_visual);
    r.loss = g.loss;
    r.step_skipped = !optimizer_step(opt_, g.text, g.visual, state_.res_text, state_.res_visual);
    const auto refined = apply_residuals(state_);
    state_.centers = prototype_center(refined.text, refined.visual, state_.valid_visual, hp.w);
  }

  const auto refined = apply_residuals(state_);
  const auto neg = bank_.cache_matrices(CacheKind::kNegative, hp.p_mask);
  const Vec p = visual_negative_score(f, refined.visual, state_.valid_visual, neg.features, neg.labels, hp);
  r.breakdown = fuse_logits(f, refined.text, p, retrieve_adaptive(f, bank_, hp), hp, config_.terms);

  if (config_.inference_views == InferenceViews::kConfident && views.rows() > 1) {
    const auto probs = view_probabilities(tuning_problem(), state_.res_text, state_.res_visual);
    r.breakdown.probs = mean_probs(probs, select_confident_views(probs, hp.rho));
    r.breakdown.pred = argmax(r.breakdown.probs);
  }
  ++samples_;
  return r;
}

// ---- snapshot ----
//
//   "MCPS" | u32 version (=1) | u32 C | u32 d | u32 M_entropy | u32 M_align | u32 M_negative
//   u64 samples_seen | u64 next_seq
//   3 x { u64 admitted | u64 replaced | u64 rejected }        entropy, align, negative
//   3 x C x { u32 count | count x slot }
//      slot: u64 seq | u32 pseudo_label | f64 entropy | u8 has_dist | f64 dist | d x f64 feature | C x f64 probs
//   C x d f64 R_t | C x d f64 R_v
//   u64 adam_step | u64 skipped_nonfinite | 4 x (C x d f64)    m_t, v_t, m_v, v_v
//
// All little-endian.

namespace {

constexpr char kSnapMagic[4] = {'M', 'C', 'P', 'S'};
constexpr std::uint32_t kSnapVersion = 1;

class Out {
 public:
  explicit Out(std::ostream& os) : os_(os) {}
  void u8(std::uint8_t v) { os_.put(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void span(std::span<const double> xs) {
    for (double x : xs) f64(x);
  }

 private:
  std::ostream& os_;
};

class In {
 public:
  explicit In(std::istream& is) : is_(is) {}
  std::uint8_t u8() {
    const int c = is_.get();
    if (c == std::char_traits<char>::eof())
      throw DataError("snapshot: truncated at byte offset " + std::to_string(offset_));
    ++offset_;
    return static_cast<std::uint8_t>(c);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  void span(std::span<double> xs) {
    for (double& x : xs) x = f64();
  }
  std::uint64_t offset() const { return offset_; }

 private:
  std::istream& is_;
  std::uint64_t offset_ = 0;
};

}  // namespace

void Engine::save_snapshot(std::ostream& os) const {
  Out o(os);
  for (char ch : kSnapMagic) o.u8(static_cast<std::uint8_t>(ch));
  const std::size_t C = bank_.num_classes(), d = bank_.dim();
  o.u32(kSnapVersion);
  o.u32(static_cast<std::uint32_t>(C));
  o.u32(static_cast<std::uint32_t>(d));
  o.u32(static_cast<std::uint32_t>(bank_.capacities().entropy));
  o.u32(static_cast<std::uint32_t>(bank_.capacities().align));
  o.u32(static_cast<std::uint32_t>(bank_.capacities().negative));
  o.u64(samples_);
  o.u64(bank_.next_seq());
  for (CacheKind k : kAllCacheKinds) {
    const auto& c = bank_.counters(k);
    o.u64(c.admitted);
    o.u64(c.replaced);
    o.u64(c.rejected);
  }
  for (CacheKind k : kAllCacheKinds) {
    for (std::size_t c = 0; c < C; ++c) {
      const auto& slots = bank_.cache(k, c).slots;
      o.u32(static_cast<std::uint32_t>(slots.size()));
      for (const auto& s : slots) {
        o.u64(s.seq);
        o.u32(static_cast<std::uint32_t>(s.pseudo_label));
        o.f64(s.entropy);
        o.u8(s.dist_to_center ? 1 : 0);
        o.f64(s.dist_to_center.value_or(0.0));
        o.span(s.feature);
        o.span(s.probs);
      }
    }
  }
  o.span(state_.res_text.data());
  o.span(state_.res_visual.data());
  o.u64(opt_.step);
  o.u64(opt_.skipped_nonfinite);
  for (const Matrix* m : {&opt_.m_text, &opt_.v_text, &opt_.m_visual, &opt_.v_visual}) o.span(m->data());
  if (!os) throw DataError("snapshot: write failed");
}

void Engine::save_snapshot(const std::string& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open '" + path + "' for writing");
  save_snapshot(os);
}

void Engine::load_snapshot(std::istream& is) {
  In in(is);
  char magic[4];
  for (char& ch : magic) ch = static_cast<char>(in.u8());
  if (std::memcmp(magic, kSnapMagic, 4) != 0) throw DataError("snapshot: bad magic at byte offset 0");
  if (in.u32() != kSnapVersion) throw DataError("snapshot: unsupported version at byte offset 4");
  const std::size_t C = bank_.num_classes(), d = bank_.dim();
  if (in.u32() != C || in.u32() != d) throw DataError("snapshot: class count or dimension mismatch");
  const auto caps = bank_.capacities();
  if (in.u32() != caps.entropy || in.u32() != caps.align || in.u32() != caps.negative)
    throw DataError("snapshot: cache capacities differ from the configuration");

  CacheBank bank(C, d, caps, bank_.toggles());
  const std::uint64_t samples = in.u64();
  bank.set_next_seq(in.u64());
  for (CacheKind k : kAllCacheKinds) {
    CacheCounters c;
    c.admitted = in.u64();
    c.replaced = in.u64();
    c.rejected = in.u64();
    bank.set_counters(k, c);
  }
  for (CacheKind k : kAllCacheKinds) {
    for (std::size_t c = 0; c < C; ++c) {
      auto& cc = bank.mutable_cache(k, c);
      const std::uint32_t n = in.u32();
      if (n > cc.capacity)
        throw DataError("snapshot: cache over capacity before byte offset " + std::to_string(in.offset()));
      cc.slots.resize(n);
      for (auto& s : cc.slots) {
        s.seq = in.u64();
        s.pseudo_label = in.u32();
        if (s.pseudo_label != c) throw DataError("snapshot: slot label does not match its class");
        s.entropy = in.f64();
        const bool has_dist = in.u8() != 0;
        const double dist = in.f64();
        if (has_dist) s.dist_to_center = dist;
        s.feature.resize(d);
        in.span(s.feature);
        s.probs.resize(C);
        in.span(s.probs);
      }
    }
  }
  PrototypeState residuals;
  residuals.res_text = Matrix(C, d);
  residuals.res_visual = Matrix(C, d);
  in.span(residuals.res_text.data());
  in.span(residuals.res_visual.data());
  OptimizerState opt(C, d, adam_config(config_.hp));
  opt.step = in.u64();
  opt.skipped_nonfinite = in.u64();
  for (Matrix* m : {&opt.m_text, &opt.v_text, &opt.m_visual, &opt.v_visual}) in.span(m->data());
  if (is.peek() != std::char_traits<char>::eof())
    throw DataError("snapshot: trailing bytes at byte offset " + std::to_string(in.offset()));

  bank_ = std::move(bank);
  opt_ = std::move(opt);
  samples_ = samples;
  state_ = build_prototypes(text_, bank_, config_.hp.w, &residuals);
}

void Engine::load_snapshot(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open snapshot '" + path + "'");
  load_snapshot(is);
}

}  // namespace mcp
