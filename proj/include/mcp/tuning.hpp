#pragma once

#include <cstdint>
#include <vector>

#include "mcp/caches.hpp"
#include "mcp/core.hpp"
#include "mcp/inference.hpp"
#include "mcp/prototypes.hpp"

namespace mcp {

struct LossToggles {
  bool align = true;
  bool contrast = true;
};

/// Everything a view contributes that does not depend on the residuals.
struct ViewContext {
  Vec feature;        // unit
  Vec negative_term;  // A(f Q_n^T) L_n
  Vec cache_term;     // f . f_r
};

/// One residual-tuning objective: base prototypes, per-view constants and
/// per-class negative means. Residuals are passed separately.
struct TuningProblem {
  Matrix text;    // base T (unit rows)
  Matrix visual;  // base V (unit rows where valid)
  std::vector<bool> valid;
  std::vector<ViewContext> views;
  Matrix negative_means;  // C x d, mean of negative-cache features per class
  std::vector<bool> has_negative;
  HyperParams hp;
  TermToggles terms;
  double weight_entropy = 1.0;
  double weight_align = 0.5;     // lambda
  double weight_contrast = 0.2;  // gamma

  std::size_t num_classes() const { return text.rows(); }
  std::size_t dim() const { return text.cols(); }
};

struct LossValue {
  double entropy = 0.0;
  double align = 0.0;
  double contrast = 0.0;
  double total = 0.0;
  std::vector<std::size_t> selected_views;
  bool contrast_clamped = false;
};

struct ResidualGradients {
  Matrix text;
  Matrix visual;
  LossValue loss;
};

/// Number of views kept by the confidence filter: max(1, floor(rho N)).
std::size_t confident_view_count(std::size_t num_views, double rho);

/// Indices of the most confident (lowest-entropy) views, ascending entropy,
/// ties broken by index.
std::vector<std::size_t> select_confident_views(const std::vector<Vec>& view_probs, double rho);

/// Entropy of the mean probability vector over the confident views.
double loss_entropy(const std::vector<Vec>& view_probs, double rho);

/// Symmetric InfoNCE between refined text and visual prototypes over the
/// classes with cached visuals, temperature 1. Zero when no class is valid.
double loss_align(const Matrix& refined_text, const Matrix& refined_visual,
                  const std::vector<bool>& valid);

/// -ln(1 - mean_c cos(v'_c, vneg_c) + eps) over classes having both a visual
/// prototype and negative samples. Zero when no class qualifies.
double loss_contrast(const Matrix& refined_visual, const std::vector<bool>& valid,
                     const Matrix& negative_means, const std::vector<bool>& has_negative, double eps,
                     bool* clamped = nullptr);

TuningProblem make_tuning_problem(const Matrix& views, const CacheBank& bank,
                                  const PrototypeState& state, const HyperParams& hp,
                                  const TermToggles& terms, const LossToggles& losses);

/// Per-view fused probabilities under residuals (res_text, res_visual).
std::vector<Vec> view_probabilities(const TuningProblem& p, const Matrix& res_text,
                                    const Matrix& res_visual);

LossValue total_loss(const TuningProblem& p, const Matrix& res_text, const Matrix& res_visual);

/// Analytic gradient of total_loss. The confident-view selection is held
/// fixed (its dependence on the residuals is piecewise constant).
ResidualGradients grad_residuals(const TuningProblem& p, const Matrix& res_text,
                                 const Matrix& res_visual);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Adam with decoupled weight decay over the two residual matrices.
struct OptimizerState {
  AdamConfig config;
  Matrix m_text, v_text, m_visual, v_visual;
  std::uint64_t step = 0;
  std::uint64_t skipped_nonfinite = 0;

  OptimizerState() = default;
  OptimizerState(std::size_t classes, std::size_t dim, AdamConfig cfg);
  void reset();
};

/// One update. Returns false (and counts it) when any gradient is non-finite.
bool optimizer_step(OptimizerState& opt, const Matrix& grad_text, const Matrix& grad_visual,
                    Matrix& res_text, Matrix& res_visual);

struct GradcheckTermReport {
  const char* name = "";
  double max_rel_error = 0.0;
};

struct GradcheckReport {
  std::vector<GradcheckTermReport> terms;  // entropy, align, contrast, total
  std::size_t instances = 0;
  double seconds = 0.0;
  double max_rel_error() const;
};

/// Random small problem for gradient verification. C, d, N drawn from the
/// given sets; residuals are small random perturbations.
struct GradcheckInstance {
  TuningProblem problem;
  Matrix res_text;
  Matrix res_visual;
};

GradcheckInstance random_gradcheck_instance(std::uint64_t seed, std::size_t classes, std::size_t dim,
                                            std::size_t views);

/// |a - n| / max(|a|, |n|, floor) over every residual coordinate, where n is
/// the central difference with step h.
double gradient_relative_error(const TuningProblem& p, const Matrix& res_text,
                               const Matrix& res_visual, double h = 1e-5);

GradcheckReport run_gradcheck(std::size_t instances, std::uint64_t seed, double h = 1e-5);

}  // namespace mcp
