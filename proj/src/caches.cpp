#include "mcp/caches.hpp"

#include <algorithm>
#include <cmath>

namespace mcp {

const char* to_string(CacheKind k) {
  switch (k) {
    case CacheKind::kEntropy: return "entropy";
    case CacheKind::kAlign: return "align";
    case CacheKind::kNegative: return "negative";
  }
  return "?";
}

const char* to_string(Route r) {
  switch (r) {
    case Route::kNegativeStore: return "negative";
    case Route::kReconsider: return "reconsider";
    case Route::kDiscard: return "discard";
  }
  return "?";
}

bool CacheToggles::enabled(CacheKind k) const {
  switch (k) {
    case CacheKind::kEntropy: return entropy;
    case CacheKind::kAlign: return align;
    case CacheKind::kNegative: return negative;
  }
  return false;
}

std::size_t ClassCache::max_entropy_index() const {
  std::size_t best = 0;
  for (std::size_t i = 1; i < slots.size(); ++i) {
    const auto& s = slots[i];
    const auto& b = slots[best];
    if (s.entropy > b.entropy || (s.entropy == b.entropy && s.seq > b.seq)) best = i;
  }
  return best;
}

double ClassCache::max_entropy() const {
  return slots.empty() ? 0.0 : slots[max_entropy_index()].entropy;
}

CacheBank::CacheBank(std::size_t num_classes, std::size_t dim, CacheCapacities capacities,
                     CacheToggles toggles)
    : num_classes_(num_classes), dim_(dim), capacities_(capacities), toggles_(toggles) {
  if (num_classes == 0 || dim == 0) throw InvalidArgument("CacheBank: C and d must be >= 1");
  if (capacities.entropy == 0 || capacities.align == 0 || capacities.negative == 0)
    throw InvalidArgument("CacheBank: cache sizes must be >= 1");
  const std::array<std::size_t, 3> caps = {capacities.entropy, capacities.align, capacities.negative};
  for (std::size_t k = 0; k < 3; ++k) {
    caches_[k].resize(num_classes);
    for (auto& cc : caches_[k]) cc.capacity = caps[k];
  }
}

const ClassCache& CacheBank::cache(CacheKind kind, std::size_t c) const {
  return caches_.at(static_cast<std::size_t>(kind)).at(c);
}

ClassCache& CacheBank::mutable_cache(CacheKind kind, std::size_t c) {
  return caches_.at(static_cast<std::size_t>(kind)).at(c);
}

const CacheCounters& CacheBank::counters(CacheKind kind) const {
  return counters_[static_cast<std::size_t>(kind)];
}

void CacheBank::set_counters(CacheKind kind, const CacheCounters& c) {
  counters_[static_cast<std::size_t>(kind)] = c;
}

std::size_t CacheBank::occupancy(CacheKind kind) const {
  std::size_t n = 0;
  for (const auto& cc : caches_[static_cast<std::size_t>(kind)]) n += cc.slots.size();
  return n;
}

AdmissionDecision CacheBank::admit(CacheKind kind, CacheSlot slot, std::optional<double> victim_dist) {
  auto& counters = counters_[static_cast<std::size_t>(kind)];
  AdmissionDecision d;
  d.label = slot.pseudo_label;
  if (!toggles_.enabled(kind)) {
    ++counters.rejected;
    return d;
  }
  auto& cc = caches_[static_cast<std::size_t>(kind)][slot.pseudo_label];
  if (!cc.full()) {
    slot.seq = next_seq_++;
    cc.slots.push_back(std::move(slot));
    d.outcome = AdmissionDecision::Outcome::kAdmitted;
    ++counters.admitted;
    return d;
  }
  const std::size_t victim = cc.max_entropy_index();
  auto& v = cc.slots[victim];
  bool replace = slot.entropy < v.entropy;
  if (replace && victim_dist) replace = *slot.dist_to_center < *victim_dist;
  if (!replace) {
    ++counters.rejected;
    return d;
  }
  d.outcome = AdmissionDecision::Outcome::kReplaced;
  d.victim_seq = v.seq;
  slot.seq = next_seq_++;
  v = std::move(slot);
  ++counters.replaced;
  return d;
}

namespace {

CacheSlot make_slot(ConstRow feature, ConstRow probs, double h, std::size_t dim, std::size_t classes) {
  check_dims(feature.size(), dim, "cache update feature");
  check_dims(probs.size(), classes, "cache update probs");
  CacheSlot s;
  s.feature.assign(feature.begin(), feature.end());
  s.probs.assign(probs.begin(), probs.end());
  s.entropy = h;
  s.pseudo_label = argmax(probs);
  return s;
}

}  // namespace

AdmissionDecision CacheBank::entropy_cache_update(ConstRow feature, ConstRow probs) {
  return admit(CacheKind::kEntropy, make_slot(feature, probs, entropy(probs), dim_, num_classes_),
               std::nullopt);
}

AdmissionDecision CacheBank::align_cache_update(ConstRow feature, ConstRow probs, ConstRow center) {
  check_dims(center.size(), dim_, "align cache center");
  CacheSlot s = make_slot(feature, probs, entropy(probs), dim_, num_classes_);
  s.dist_to_center = distance(feature, center);
  std::optional<double> victim_dist;
  const auto& cc = cache(CacheKind::kAlign, s.pseudo_label);
  // Below capacity admission is unconditional; the distance gate only applies on replacement.
  if (cc.full()) victim_dist = distance(cc.slots[cc.max_entropy_index()].feature, center);
  return admit(CacheKind::kAlign, std::move(s), victim_dist);
}

double negative_band_low(const HyperParams& hp, std::size_t num_classes) {
  return hp.h_low_frac * std::log(static_cast<double>(num_classes));
}

double negative_band_high(const HyperParams& hp, std::size_t num_classes) {
  return hp.h_high_frac * std::log(static_cast<double>(num_classes));
}

RoutingDecision CacheBank::negative_cache_update(ConstRow feature, ConstRow calibrated_probs,
                                                 double calibrated_entropy, const HyperParams& hp) {
  RoutingDecision r;
  const double lo = negative_band_low(hp, num_classes_);
  const double hi = negative_band_high(hp, num_classes_);
  if (calibrated_entropy < lo) {
    r.route = Route::kReconsider;
    return r;
  }
  if (calibrated_entropy > hi) {
    r.route = Route::kDiscard;
    return r;
  }
  r.route = Route::kNegativeStore;
  r.negative = admit(CacheKind::kNegative,
                     make_slot(feature, calibrated_probs, calibrated_entropy, dim_, num_classes_),
                     std::nullopt);
  return r;
}

CacheMatrices CacheBank::cache_matrices(CacheKind kind, double p_mask) const {
  CacheMatrices m{Matrix(0, dim_), Matrix(0, num_classes_)};
  if (!toggles_.enabled(kind)) return m;
  Vec label_row(num_classes_);
  for (std::size_t c = 0; c < num_classes_; ++c) {
    std::vector<const CacheSlot*> slots;
    for (const auto& s : cache(kind, c).slots) slots.push_back(&s);
    std::sort(slots.begin(), slots.end(), [](auto* a, auto* b) { return a->seq < b->seq; });
    for (const CacheSlot* s : slots) {
      m.features.append_row(s->feature);
      if (kind == CacheKind::kNegative) {
        for (std::size_t j = 0; j < num_classes_; ++j) label_row[j] = s->probs[j] > p_mask ? 1.0 : 0.0;
      } else {
        std::fill(label_row.begin(), label_row.end(), 0.0);
        label_row[c] = 1.0;
      }
      m.labels.append_row(label_row);
    }
  }
  return m;
}

std::vector<const CacheSlot*> CacheBank::positive_slots(std::size_t c) const {
  std::vector<const CacheSlot*> out;
  for (CacheKind kind : {CacheKind::kEntropy, CacheKind::kAlign}) {
    if (!toggles_.enabled(kind)) continue;
    const std::size_t start = out.size();
    for (const auto& s : cache(kind, c).slots) out.push_back(&s);
    std::sort(out.begin() + static_cast<std::ptrdiff_t>(start), out.end(),
              [](auto* a, auto* b) { return a->seq < b->seq; });
  }
  return out;
}

bool operator==(const CacheBank& a, const CacheBank& b) {
  return a.num_classes_ == b.num_classes_ && a.dim_ == b.dim_ && a.toggles_ == b.toggles_ &&
         a.caches_ == b.caches_ && a.next_seq_ == b.next_seq_;
}

ReflectResult reflect(ConstRow feature, const CacheBank& bank, const Matrix& text_protos,
                      const HyperParams& hp) {
  check_dims(feature.size(), bank.dim(), "reflect");
  check_dims(text_protos.rows(), bank.num_classes(), "reflect text prototypes");
  Vec logits = matvec(text_protos, feature);
  for (std::size_t c = 0; c < bank.num_classes(); ++c) {
    double score = 0.0;
    for (const CacheSlot* s : bank.positive_slots(c))
      score += affinity(cosine(feature, s->feature), hp.alpha, hp.beta);
    // softmax(z + tau*s, tau) == softmax(z/tau + s, 1)
    logits[c] += hp.tau * score;
  }
  ReflectResult r;
  r.probs = softmax(logits, hp.tau);
  r.entropy = entropy_unchecked(r.probs);
  return r;
}

}  // namespace mcp
