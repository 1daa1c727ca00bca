#include "mcp/inference.hpp"

#include <cmath>

namespace mcp {

namespace {
constexpr double kZeroScale = 1e-12;
}

Matrix retrieve_adaptive(ConstRow feature, const CacheBank& bank, const HyperParams& hp) {
  check_dims(feature.size(), bank.dim(), "retrieve_adaptive");
  Matrix fr(bank.num_classes(), bank.dim());
  for (std::size_t c = 0; c < bank.num_classes(); ++c) {
    Row row = fr.row(c);
    for (const CacheSlot* s : bank.positive_slots(c)) {
      const double a = affinity(cosine(feature, s->feature), hp.alpha, hp.beta);
      for (std::size_t i = 0; i < row.size(); ++i) row[i] += a * s->feature[i];
    }
  }
  return fr;
}

Vec cache_scores(ConstRow feature, const Matrix& adaptive) { return matvec(adaptive, feature); }

Vec negative_scores(ConstRow feature, const Matrix& negative_features, const Matrix& negative_mask,
                    const HyperParams& hp) {
  Vec out(negative_mask.cols(), 0.0);
  if (negative_features.empty()) return out;
  check_dims(negative_features.cols(), feature.size(), "negative_scores features");
  check_dims(negative_mask.rows(), negative_features.rows(), "negative_scores mask rows");
  for (std::size_t i = 0; i < negative_features.rows(); ++i) {
    const double a = affinity(dot(feature, negative_features.row(i)), hp.alpha, hp.beta);
    ConstRow mask = negative_mask.row(i);
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += a * mask[c];
  }
  return out;
}

Vec visual_negative_score(ConstRow feature, const Matrix& visual, const std::vector<bool>& valid,
                          const Matrix& negative_features, const Matrix& negative_mask,
                          const HyperParams& hp) {
  check_dims(visual.cols(), feature.size(), "visual_negative_score");
  check_dims(valid.size(), visual.rows(), "visual_negative_score valid mask");
  if (!negative_features.empty()) check_dims(negative_mask.cols(), visual.rows(), "visual_negative_score L_n");
  Vec p(visual.rows(), 0.0);
  for (std::size_t c = 0; c < visual.rows(); ++c)
    if (valid[c]) p[c] = affinity(dot(feature, visual.row(c)), hp.alpha, hp.beta);
  if (!negative_features.empty()) {
    const Vec neg = negative_scores(feature, negative_features, negative_mask, hp);
    for (std::size_t c = 0; c < p.size(); ++c) p[c] -= neg[c];
  }
  return p;
}

Vec normalize_term(ConstRow x, Normalization mode, double tau) {
  const std::size_t n = x.size();
  Vec y(n, 0.0);
  switch (mode) {
    case Normalization::kStandardize: {
      double mean = 0.0;
      for (double v : x) mean += v;
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (double v : x) var += (v - mean) * (v - mean);
      const double sd = std::sqrt(var / static_cast<double>(n));
      if (sd < kZeroScale) return y;
      for (std::size_t i = 0; i < n; ++i) y[i] = (x[i] - mean) / sd;
      return y;
    }
    case Normalization::kL2: {
      const double nn = norm(x);
      if (nn < kZeroScale) return y;
      for (std::size_t i = 0; i < n; ++i) y[i] = x[i] / nn;
      return y;
    }
    case Normalization::kSoftmax:
      return softmax(x, tau);
  }
  return y;
}

Vec normalize_term_backward(ConstRow x, ConstRow g, Normalization mode, double tau) {
  const std::size_t n = x.size();
  Vec dx(n, 0.0);
  switch (mode) {
    case Normalization::kStandardize: {
      double mean = 0.0;
      for (double v : x) mean += v;
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (double v : x) var += (v - mean) * (v - mean);
      const double sd = std::sqrt(var / static_cast<double>(n));
      if (sd < kZeroScale) return dx;
      double gmean = 0.0, gy = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double y = (x[i] - mean) / sd;
        gmean += g[i];
        gy += g[i] * y;
      }
      gmean /= static_cast<double>(n);
      gy /= static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double y = (x[i] - mean) / sd;
        dx[i] = (g[i] - gmean - y * gy) / sd;
      }
      return dx;
    }
    case Normalization::kL2: {
      const double nn = norm(x);
      if (nn < kZeroScale) return dx;
      double gy = 0.0;
      for (std::size_t i = 0; i < n; ++i) gy += g[i] * x[i] / nn;
      for (std::size_t i = 0; i < n; ++i) dx[i] = (g[i] - (x[i] / nn) * gy) / nn;
      return dx;
    }
    case Normalization::kSoftmax: {
      const Vec p = softmax(x, tau);
      double pg = 0.0;
      for (std::size_t i = 0; i < n; ++i) pg += p[i] * g[i];
      for (std::size_t i = 0; i < n; ++i) dx[i] = p[i] * (g[i] - pg) / tau;
      return dx;
    }
  }
  return dx;
}

LogitsBreakdown fuse_terms(Vec text_term, Vec visual_neg_term, Vec cache_term, const HyperParams& hp,
                           const TermToggles& terms) {
  const std::size_t c = text_term.size();
  check_dims(visual_neg_term.size(), c, "fuse visual term");
  check_dims(cache_term.size(), c, "fuse cache term");
  LogitsBreakdown b;
  b.fused.assign(c, 0.0);
  auto add = [&](const Vec& term, double weight, bool on) {
    if (!on || weight == 0.0) return;
    const Vec n = normalize_term(term, hp.normalization, hp.tau);
    for (std::size_t i = 0; i < c; ++i) b.fused[i] += weight * n[i];
  };
  add(text_term, hp.alpha1, terms.text);
  add(visual_neg_term, hp.alpha2, terms.visual);
  add(cache_term, hp.alpha3, terms.cache);
  b.text_term = std::move(text_term);
  b.visual_neg_term = std::move(visual_neg_term);
  b.cache_term = std::move(cache_term);
  b.probs = softmax(b.fused, 1.0);
  b.pred = argmax(b.fused);
  return b;
}

LogitsBreakdown fuse_logits(ConstRow feature, const Matrix& refined_text, ConstRow visual_neg,
                            const Matrix& adaptive, const HyperParams& hp, const TermToggles& terms) {
  return fuse_terms(matvec(refined_text, feature), Vec(visual_neg.begin(), visual_neg.end()),
                    cache_scores(feature, adaptive), hp, terms);
}

Vec zero_shot_probs(ConstRow feature, const Matrix& text, double tau) {
  return softmax(matvec(text, feature), tau);
}

}  // namespace mcp
