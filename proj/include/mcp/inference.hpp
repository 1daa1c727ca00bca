#pragma once

#include "mcp/caches.hpp"
#include "mcp/core.hpp"
#include "mcp/prototypes.hpp"

namespace mcp {

/// Which fusion terms participate (retrieval-strategy ablation).
struct TermToggles {
  bool text = true;
  bool visual = true;
  bool cache = true;
};

/// The three fusion terms kept separately for audit.
struct LogitsBreakdown {
  Vec text_term;        // f . T'
  Vec visual_neg_term;  // A(f V'^T) L_p - A(f Q_n^T) L_n
  Vec cache_term;       // f . f_r
  Vec fused;
  Vec probs;
  std::size_t pred = 0;
};

/// f_r^c = sum over entropy+align slots of class c of A(cos(f, f_ci)) f_ci.
/// Zero rows for classes with no cached samples.
Matrix retrieve_adaptive(ConstRow feature, const CacheBank& bank, const HyperParams& hp);

/// Row-vector product f . f_r^T.
Vec cache_scores(ConstRow feature, const Matrix& adaptive);

/// A(f Q_n^T) L_n, the subtracted half of the negative-calibrated score.
Vec negative_scores(ConstRow feature, const Matrix& negative_features, const Matrix& negative_mask,
                    const HyperParams& hp);

/// P = A(f V'^T) L_p - A(f Q_n^T) L_n with L_p the identity masked by `valid`.
Vec visual_negative_score(ConstRow feature, const Matrix& visual, const std::vector<bool>& valid,
                          const Matrix& negative_features, const Matrix& negative_mask,
                          const HyperParams& hp);

/// Class-axis normalization applied to each term before fusion.
Vec normalize_term(ConstRow term, Normalization mode, double tau);

/// Vector-Jacobian product of normalize_term at `term` (gradient of the
/// normalized output `upstream` pulled back to the raw term).
Vec normalize_term_backward(ConstRow term, ConstRow upstream, Normalization mode, double tau);

/// alpha1 N(text) + alpha2 N(P) + alpha3 N(cache); softmax at temperature 1.
LogitsBreakdown fuse_terms(Vec text_term, Vec visual_neg_term, Vec cache_term, const HyperParams& hp,
                           const TermToggles& terms = {});

LogitsBreakdown fuse_logits(ConstRow feature, const Matrix& refined_text, ConstRow visual_neg,
                            const Matrix& adaptive, const HyperParams& hp,
                            const TermToggles& terms = {});

/// Zero-shot probabilities softmax(f T^T, tau).
Vec zero_shot_probs(ConstRow feature, const Matrix& text, double tau);

}  // namespace mcp
