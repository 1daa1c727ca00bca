#pragma once

#include <vector>

#include "mcp/caches.hpp"
#include "mcp/core.hpp"

namespace mcp {

/// Text prototypes, cache-derived visual prototypes, residuals and centers.
/// A pure function of (bank, prompts, w, residuals).
struct PrototypeState {
  Matrix text;      // C x d, unit rows
  Matrix visual;    // C x d, unit rows where valid_visual, zero rows elsewhere
  Matrix res_text;  // C x d
  Matrix res_visual;
  Matrix centers;  // C x d
  std::vector<bool> valid_visual;

  std::size_t num_classes() const { return text.rows(); }
  std::size_t dim() const { return text.cols(); }
  bool any_valid_visual() const;
};

struct RefinedPrototypes {
  Matrix text;    // T'
  Matrix visual;  // V'; zero rows for classes without cached visuals
};

/// t_c = normalize(mean of the class's prompt embeddings).
Matrix text_prototypes(const std::vector<std::vector<Vec>>& prompt_embeddings);

struct VisualPrototypes {
  Matrix visual;
  std::vector<bool> valid;
};

/// v_c = normalize(mean of entropy-cache and align-cache features of class c).
VisualPrototypes visual_prototypes(const CacheBank& bank);

/// mu_c = normalize(w v_c + (1-w) t_c) for classes with cached visuals, t_c otherwise.
Matrix prototype_center(const Matrix& text, const Matrix& visual, const std::vector<bool>& valid,
                        double w);

/// t'_c = normalize(t_c + R_t[c]), v'_c = normalize(v_c + R_v[c]). Rows whose
/// residual is exactly zero are copied unchanged.
RefinedPrototypes apply_residuals(const PrototypeState& state);

/// Builds the full state from a bank; residuals are taken from `residuals_from`
/// when given (persisted residuals), zero otherwise.
PrototypeState build_prototypes(const Matrix& text, const CacheBank& bank, double w,
                                const PrototypeState* residuals_from = nullptr);

/// Center of one class under the current residuals, used for align admission.
Vec class_center(const PrototypeState& state, std::size_t c, double w);

}  // namespace mcp
