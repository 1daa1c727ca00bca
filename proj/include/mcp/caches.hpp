#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "mcp/core.hpp"

namespace mcp {

enum class CacheKind : std::uint8_t { kEntropy = 0, kAlign = 1, kNegative = 2 };
inline constexpr std::array<CacheKind, 3> kAllCacheKinds = {CacheKind::kEntropy, CacheKind::kAlign,
                                                            CacheKind::kNegative};
const char* to_string(CacheKind k);

struct CacheSlot {
  Vec feature;  // unit
  double entropy = 0.0;  // nats; calibrated entropy H' for negative slots
  std::size_t pseudo_label = 0;
  Vec probs;
  std::optional<double> dist_to_center;  // align cache only
  std::uint64_t seq = 0;

  friend bool operator==(const CacheSlot&, const CacheSlot&) = default;
};

struct ClassCache {
  std::size_t capacity = 0;
  std::vector<CacheSlot> slots;

  bool full() const { return slots.size() >= capacity; }
  /// Index of the highest-entropy slot; among equal entropies the newest
  /// slot is the victim so the older one is kept.
  std::size_t max_entropy_index() const;
  double max_entropy() const;

  friend bool operator==(const ClassCache&, const ClassCache&) = default;
};

struct AdmissionDecision {
  enum class Outcome : std::uint8_t { kAdmitted, kReplaced, kRejected };
  Outcome outcome = Outcome::kRejected;
  std::size_t label = 0;
  std::optional<std::uint64_t> victim_seq;

  bool stored() const { return outcome != Outcome::kRejected; }
};

enum class Route : std::uint8_t { kNegativeStore, kReconsider, kDiscard };
const char* to_string(Route r);

struct RoutingDecision {
  Route route = Route::kDiscard;
  AdmissionDecision negative;  // meaningful only for kNegativeStore
};

struct CacheCounters {
  std::uint64_t admitted = 0;
  std::uint64_t replaced = 0;
  std::uint64_t rejected = 0;

  friend bool operator==(const CacheCounters&, const CacheCounters&) = default;
};

struct CacheCapacities {
  std::size_t entropy = 10;
  std::size_t align = 10;
  std::size_t negative = 3;
};

struct CacheToggles {
  bool entropy = true;
  bool align = true;
  bool negative = true;

  bool enabled(CacheKind k) const;
  friend bool operator==(const CacheToggles&, const CacheToggles&) = default;
};

/// Feature / label matrices of one cache kind. Rows ordered by (class, seq).
struct CacheMatrices {
  Matrix features;  // K x d
  Matrix labels;    // K x C; one-hot (positive kinds) or the L_n mask (negative)
};

struct ReflectResult {
  Vec probs;
  double entropy = 0.0;
};

/// Per-class entropy / align / negative caches. Single writer; copies are
/// independent snapshots.
class CacheBank {
 public:
  CacheBank(std::size_t num_classes, std::size_t dim, CacheCapacities capacities = {},
            CacheToggles toggles = {});

  std::size_t num_classes() const { return num_classes_; }
  std::size_t dim() const { return dim_; }
  const CacheToggles& toggles() const { return toggles_; }
  const CacheCapacities& capacities() const { return capacities_; }

  const ClassCache& cache(CacheKind kind, std::size_t c) const;
  ClassCache& mutable_cache(CacheKind kind, std::size_t c);
  const CacheCounters& counters(CacheKind kind) const;
  void set_counters(CacheKind kind, const CacheCounters& c);
  std::size_t occupancy(CacheKind kind) const;

  std::uint64_t next_seq() const { return next_seq_; }
  void set_next_seq(std::uint64_t s) { next_seq_ = s; }

  /// Admit when not full, else replace the max-entropy slot iff H(x) < H_max.
  AdmissionDecision entropy_cache_update(ConstRow feature, ConstRow probs);

  /// Admit when not full; when full replace the max-entropy slot iff
  /// H(x) < H_max and d(f, center) < d(f_max, center).
  AdmissionDecision align_cache_update(ConstRow feature, ConstRow probs, ConstRow center);

  /// Routes a reflected sample by its calibrated entropy into the negative
  /// cache (H_low <= H' <= H_high), back to the low-entropy path (H' < H_low),
  /// or discards it.
  RoutingDecision negative_cache_update(ConstRow feature, ConstRow calibrated_probs,
                                        double calibrated_entropy, const HyperParams& hp);

  CacheMatrices cache_matrices(CacheKind kind, double p_mask = 0.03) const;

  /// Entropy + align slots of class c, in (kind, seq) order.
  std::vector<const CacheSlot*> positive_slots(std::size_t c) const;

  friend bool operator==(const CacheBank&, const CacheBank&);

 private:
  AdmissionDecision admit(CacheKind kind, CacheSlot slot, std::optional<double> victim_dist);

  std::size_t num_classes_;
  std::size_t dim_;
  CacheCapacities capacities_;
  CacheToggles toggles_;
  std::array<std::vector<ClassCache>, 3> caches_;
  std::array<CacheCounters, 3> counters_{};
  std::uint64_t next_seq_ = 0;
};

/// Negative-band thresholds as absolute entropies for C classes.
double negative_band_low(const HyperParams& hp, std::size_t num_classes);
double negative_band_high(const HyperParams& hp, std::size_t num_classes);

/// Recalibrates a high-entropy sample against the entropy + align caches:
/// logits_c = f.t_c / tau + sum_{i in M_c} A(cos(f, f_ci)), softmax at T=1.
/// With all positive caches empty the result equals the zero-shot softmax
/// bit for bit.
ReflectResult reflect(ConstRow feature, const CacheBank& bank, const Matrix& text_protos,
                      const HyperParams& hp);

}  // namespace mcp
