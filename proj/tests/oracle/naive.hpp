#pragma once

// Naive reference implementations used as test oracles. Nothing here calls
// into the library; every formula is spelled out as plain loops.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

namespace naive {

using V = std::vector<double>;
using M = std::vector<V>;

inline double dot(const V& a, const V& b) {
  long double s = 0.0L;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<long double>(a[i]) * b[i];
  return static_cast<double>(s);
}

inline double len(const V& a) { return std::sqrt(dot(a, a)); }

inline V unit(const V& a) {
  const double n = len(a);
  V out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] / n;
  return out;
}

inline double cos(const V& a, const V& b) {
  const double c = dot(a, b) / (len(a) * len(b));
  return std::max(-1.0, std::min(1.0, c));
}

inline double dist(const V& a, const V& b) {
  long double s = 0.0L;
  for (std::size_t i = 0; i < a.size(); ++i) s += (static_cast<long double>(a[i]) - b[i]) * (a[i] - b[i]);
  return static_cast<double>(std::sqrt(s));
}

inline double aff(double x, double alpha, double beta) { return alpha * std::exp(-beta * (1.0 - x)); }

inline V softmax(const V& z, double tau) {
  long double mx = -std::numeric_limits<long double>::infinity();
  for (double v : z) mx = std::max<long double>(mx, v / static_cast<long double>(tau));
  long double sum = 0.0L;
  std::vector<long double> e(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    e[i] = std::exp(z[i] / static_cast<long double>(tau) - mx);
    sum += e[i];
  }
  V out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = static_cast<double>(e[i] / sum);
  return out;
}

inline double entropy(const V& p) {
  long double h = 0.0L;
  for (double x : p)
    if (x > 0) h -= static_cast<long double>(x) * std::log(static_cast<long double>(x));
  return static_cast<double>(h);
}

inline std::size_t argmax(const V& v) {
  std::size_t b = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[b]) b = i;
  return b;
}

// Adaptive cache retrieval: f_r[c] = sum_i A(cos(f, f_ci)) f_ci.
inline M retrieval(const V& f, const std::vector<M>& slots_per_class, double alpha, double beta) {
  M out(slots_per_class.size(), V(f.size(), 0.0));
  for (std::size_t c = 0; c < slots_per_class.size(); ++c)
    for (const V& s : slots_per_class[c]) {
      const double a = aff(cos(f, s), alpha, beta);
      for (std::size_t i = 0; i < f.size(); ++i) out[c][i] += a * s[i];
    }
  return out;
}

// Visual-negative score: A(f v_c) on classes with a visual prototype, minus
// sum over negative slots of A(f q_i) mask_i[c].
inline V visual_negative(const V& f, const M& visual, const std::vector<bool>& valid, const M& neg_feats,
                         const M& neg_masks, double alpha, double beta) {
  V p(visual.size(), 0.0);
  for (std::size_t c = 0; c < visual.size(); ++c) {
    if (valid[c]) p[c] += aff(dot(f, visual[c]), alpha, beta);
    for (std::size_t i = 0; i < neg_feats.size(); ++i) p[c] -= aff(dot(f, neg_feats[i]), alpha, beta) * neg_masks[i][c];
  }
  return p;
}

inline V standardize(const V& x) {
  long double m = 0.0L;
  for (double v : x) m += v;
  m /= static_cast<long double>(x.size());
  long double s = 0.0L;
  for (double v : x) s += (v - m) * (v - m);
  s = std::sqrt(s / static_cast<long double>(x.size()));
  V y(x.size(), 0.0);
  if (s < 1e-12L) return y;
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = static_cast<double>((x[i] - m) / s);
  return y;
}

inline V fused(const V& text, const V& vis, const V& cache, double a1, double a2, double a3) {
  const V t = standardize(text), p = standardize(vis), c = standardize(cache);
  V out(text.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a1 * t[i] + a2 * p[i] + a3 * c[i];
  return out;
}

// Symmetric InfoNCE over the valid classes: mean over c of
// -ln softmax_row(S)[c,c] - ln softmax_col(S)[c,c], S = T' V'^T.
inline double align_loss(const M& t, const M& v, const std::vector<bool>& valid) {
  std::vector<std::size_t> idx;
  for (std::size_t c = 0; c < valid.size(); ++c)
    if (valid[c]) idx.push_back(c);
  if (idx.empty()) return 0.0;
  long double total = 0.0L;
  for (std::size_t a : idx) {
    long double row = 0.0L, col = 0.0L;
    for (std::size_t b : idx) {
      row += std::exp(static_cast<long double>(dot(t[a], v[b])));
      col += std::exp(static_cast<long double>(dot(t[b], v[a])));
    }
    const long double s = dot(t[a], v[a]);
    total += -std::log(std::exp(s) / row) - std::log(std::exp(s) / col);
  }
  return static_cast<double>(total / static_cast<long double>(idx.size()));
}

// -ln(1 - mean_c cos(v'_c, vneg_c) + eps) over classes with both.
inline std::optional<double> contrast_loss(const M& v, const std::vector<bool>& valid, const M& neg_means,
                                           const std::vector<bool>& has_neg, double eps) {
  long double sum = 0.0L;
  std::size_t n = 0;
  for (std::size_t c = 0; c < v.size(); ++c) {
    if (!valid[c] || !has_neg[c] || len(neg_means[c]) == 0.0) continue;
    sum += cos(v[c], neg_means[c]);
    ++n;
  }
  if (n == 0) return 0.0;
  const long double arg = 1.0L - sum / static_cast<long double>(n) + eps;
  if (arg < eps) return std::nullopt;
  return static_cast<double>(-std::log(arg));
}

// Entropy of the mean of the k = max(1, floor(rho N)) lowest-entropy views.
inline double entropy_loss(const M& probs, double rho) {
  std::vector<std::pair<double, std::size_t>> h;
  for (std::size_t n = 0; n < probs.size(); ++n) h.push_back({entropy(probs[n]), n});
  std::stable_sort(h.begin(), h.end(), [](auto& a, auto& b) { return a.first < b.first; });
  std::size_t k = static_cast<std::size_t>(std::floor(rho * static_cast<double>(probs.size()) + 1e-9));
  k = std::max<std::size_t>(1, std::min(k, probs.size()));
  V mean(probs.front().size(), 0.0);
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += probs[h[j].second][c] / static_cast<double>(k);
  return entropy(mean);
}

// Reflect: logits_c = f.t_c / tau + sum over positive slots of class c of
// A(cos(f, s)); softmax at temperature 1.
inline V reflect(const V& f, const M& text, const std::vector<M>& positives, double tau, double alpha,
                 double beta) {
  V z(text.size());
  for (std::size_t c = 0; c < text.size(); ++c) {
    z[c] = dot(f, text[c]) / tau;
    for (const V& s : positives[c]) z[c] += aff(cos(f, s), alpha, beta);
  }
  return softmax(z, 1.0);
}

// ---- cache simulator ----

struct Slot {
  std::uint64_t seq = 0;
  V feature;
  V probs;
  double entropy = 0.0;
  std::optional<double> dist;
};

// One class cache applying the admission rules literally: admit below
// capacity; when full the victim is the highest-entropy slot (newest on ties)
// and is replaced only if the newcomer has strictly lower entropy and, when a
// center is given, is strictly closer to it than the victim.
struct SimCache {
  std::size_t capacity = 0;
  std::vector<Slot> slots;

  int offer(Slot s, const V* center) {
    if (slots.size() < capacity) {
      slots.push_back(std::move(s));
      return 0;
    }
    std::size_t victim = 0;
    for (std::size_t i = 0; i < slots.size(); ++i) {
      const bool higher = slots[i].entropy > slots[victim].entropy;
      const bool tie_newer = slots[i].entropy == slots[victim].entropy && slots[i].seq > slots[victim].seq;
      if (higher || tie_newer) victim = i;
    }
    if (!(s.entropy < slots[victim].entropy)) return 2;
    if (center && !(dist(s.feature, *center) < dist(slots[victim].feature, *center))) return 2;
    slots[victim] = std::move(s);
    return 1;
  }
};

// ---- independent replay of the MCP pipeline (no residual tuning) ----

struct ReplayParams {
  double tau = 0.01, alpha = 1.0, beta = 5.5, w = 0.8;
  double a1 = 1.0, a2 = 1.0, a3 = 1.0;
  double h_low = 0.2, h_high = 0.5, e_gate = 0.1, p_mask = 0.03;
  std::size_t m_entropy = 10, m_align = 10, m_negative = 3;
};

class Replay {
 public:
  Replay(M text, ReplayParams p) : text_(std::move(text)), p_(p) {
    const std::size_t C = text_.size();
    ent_.assign(C, SimCache{p_.m_entropy, {}});
    ali_.assign(C, SimCache{p_.m_align, {}});
    neg_.assign(C, SimCache{p_.m_negative, {}});
  }

  std::size_t predict(const V& raw) {
    const V f = unit(raw);
    const std::size_t C = text_.size();
    const double lnC = std::log(static_cast<double>(C));
    V z(C);
    for (std::size_t c = 0; c < C; ++c) z[c] = dot(f, text_[c]);
    const V p0 = softmax(z, p_.tau);
    const double h0 = entropy(p0);
    const bool low = h0 <= p_.e_gate * lnC;
    bool stored = false;
    if (low) {
      stored = offer_positive(ent_, f, p0, nullptr);
      const V mu = center(argmax(p0));
      offer_positive(ali_, f, p0, &mu);
    }
    if (!low || !stored) {
      const V pc = reflect(f, text_, positives(), p_.tau, p_.alpha, p_.beta);
      const double hc = entropy(pc);
      if (hc < p_.h_low * lnC) {
        offer_positive(ent_, f, pc, nullptr);
        if (!low) {
          const V mu = center(argmax(pc));
          offer_positive(ali_, f, pc, &mu);
        }
      } else if (hc <= p_.h_high * lnC) {
        Slot s{seq_++, f, pc, hc, std::nullopt};
        if (neg_[argmax(pc)].offer(s, nullptr) == 2) --seq_;
      }
    }

    const auto pos = positives();
    V text_term(C), vis(C, 0.0), cache(C, 0.0);
    for (std::size_t c = 0; c < C; ++c) text_term[c] = dot(f, text_[c]);
    for (std::size_t c = 0; c < C; ++c) {
      if (!pos[c].empty()) vis[c] += aff(dot(f, visual(pos[c])), p_.alpha, p_.beta);
      for (const V& s : pos[c]) cache[c] += aff(cos(f, s), p_.alpha, p_.beta) * dot(f, s);
    }
    for (const auto& nc : neg_)
      for (const Slot& s : nc.slots) {
        const double a = aff(dot(f, s.feature), p_.alpha, p_.beta);
        for (std::size_t c = 0; c < C; ++c) vis[c] -= s.probs[c] > p_.p_mask ? a : 0.0;
      }
    return argmax(fused(text_term, vis, cache, p_.a1, p_.a2, p_.a3));
  }

 private:
  bool offer_positive(std::vector<SimCache>& caches, const V& f, const V& probs, const V* mu) {
    Slot s{seq_++, f, probs, entropy(probs), std::nullopt};
    if (mu) s.dist = dist(f, *mu);
    const int r = caches[argmax(probs)].offer(s, mu);
    if (r == 2) --seq_;
    return r != 2;
  }

  std::vector<M> positives() const {
    std::vector<M> out(text_.size());
    for (std::size_t c = 0; c < text_.size(); ++c) {
      for (const Slot& s : ent_[c].slots) out[c].push_back(s.feature);
      for (const Slot& s : ali_[c].slots) out[c].push_back(s.feature);
    }
    return out;
  }

  static V visual(const M& feats) {
    V m(feats.front().size(), 0.0);
    for (const V& s : feats)
      for (std::size_t i = 0; i < m.size(); ++i) m[i] += s[i];
    return unit(m);
  }

  V center(std::size_t c) const {
    const auto pos = positives();
    if (pos[c].empty()) return text_[c];
    const V v = visual(pos[c]);
    V mu(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) mu[i] = p_.w * v[i] + (1.0 - p_.w) * text_[c][i];
    return unit(mu);
  }

  M text_;
  ReplayParams p_;
  std::vector<SimCache> ent_, ali_, neg_;
  std::uint64_t seq_ = 0;
};

}  // namespace naive
