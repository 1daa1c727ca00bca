#include "mcp/tuning.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

namespace mcp {

std::size_t confident_view_count(std::size_t num_views, double rho) {
  const auto k = static_cast<std::size_t>(std::floor(rho * static_cast<double>(num_views) + 1e-9));
  return std::clamp<std::size_t>(k, 1, std::max<std::size_t>(num_views, 1));
}

std::vector<std::size_t> select_confident_views(const std::vector<Vec>& view_probs, double rho) {
  if (view_probs.empty()) throw InvalidArgument("select_confident_views: no views");
  std::vector<double> h(view_probs.size());
  for (std::size_t n = 0; n < view_probs.size(); ++n) h[n] = entropy_unchecked(view_probs[n]);
  std::vector<std::size_t> idx(view_probs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return h[a] < h[b]; });
  idx.resize(confident_view_count(view_probs.size(), rho));
  return idx;
}

namespace {

Vec mean_of(const std::vector<Vec>& probs, const std::vector<std::size_t>& idx) {
  Vec m(probs[idx.front()].size(), 0.0);
  for (std::size_t n : idx)
    for (std::size_t c = 0; c < m.size(); ++c) m[c] += probs[n][c];
  for (double& x : m) x /= static_cast<double>(idx.size());
  return m;
}

std::vector<std::size_t> valid_indices(const std::vector<bool>& valid) {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < valid.size(); ++c)
    if (valid[c]) out.push_back(c);
  return out;
}

double log_sum_exp(ConstRow z) {
  const double mx = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - mx);
  return mx + std::log(s);
}

// Similarity matrix over the valid classes and its align-loss gradient.
struct AlignTerms {
  double loss = 0.0;
  Matrix grad;  // dL/dS, C' x C'
};

AlignTerms align_terms(const Matrix& t, const Matrix& v, const std::vector<std::size_t>& idx) {
  const std::size_t k = idx.size();
  AlignTerms out{0.0, Matrix(k, k)};
  if (k == 0) return out;
  Matrix s(k, k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) s(i, j) = dot(t.row(idx[i]), v.row(idx[j]));
  Vec row_lse(k), col_lse(k), col(k);
  for (std::size_t i = 0; i < k; ++i) row_lse[i] = log_sum_exp(s.row(i));
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t i = 0; i < k; ++i) col[i] = s(i, j);
    col_lse[j] = log_sum_exp(col);
  }
  const double inv = 1.0 / static_cast<double>(k);
  for (std::size_t c = 0; c < k; ++c) out.loss += (row_lse[c] - s(c, c)) + (col_lse[c] - s(c, c));
  out.loss *= inv;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j)
      out.grad(i, j) = inv * (std::exp(s(i, j) - row_lse[i]) + std::exp(s(i, j) - col_lse[j]) -
                              (i == j ? 2.0 : 0.0));
  return out;
}

struct ContrastTerms {
  double loss = 0.0;
  bool clamped = false;
  double dloss_dmean = 0.0;
  std::vector<std::size_t> classes;
};

ContrastTerms contrast_terms(const Matrix& v, const std::vector<bool>& valid, const Matrix& neg_means,
                             const std::vector<bool>& has_neg, double eps) {
  ContrastTerms out;
  for (std::size_t c = 0; c < valid.size(); ++c)
    if (valid[c] && has_neg[c] && norm(neg_means.row(c)) > 0.0) out.classes.push_back(c);
  if (out.classes.empty()) return out;
  double m = 0.0;
  for (std::size_t c : out.classes) m += cosine(v.row(c), neg_means.row(c));
  m /= static_cast<double>(out.classes.size());
  double arg = 1.0 - m + eps;
  if (arg < eps) {
    arg = eps;
    out.clamped = true;
  }
  out.loss = -std::log(arg);
  out.dloss_dmean = out.clamped ? 0.0 : 1.0 / arg;
  return out;
}

RefinedPrototypes refine(const TuningProblem& p, const Matrix& rt, const Matrix& rv) {
  PrototypeState s;
  s.text = p.text;
  s.visual = p.visual;
  s.res_text = rt;
  s.res_visual = rv;
  s.valid_visual = p.valid;
  return apply_residuals(s);
}

struct ViewForward {
  Vec text;
  Vec visual;
  Vec probs;
};

ViewForward view_forward(const TuningProblem& p, const RefinedPrototypes& r, const ViewContext& view) {
  ViewForward f;
  f.text = matvec(r.text, view.feature);
  f.visual.assign(p.num_classes(), 0.0);
  for (std::size_t c = 0; c < p.num_classes(); ++c) {
    if (p.valid[c]) f.visual[c] = affinity(dot(view.feature, r.visual.row(c)), p.hp.alpha, p.hp.beta);
    f.visual[c] -= view.negative_term[c];
  }
  f.probs = fuse_terms(f.text, f.visual, view.cache_term, p.hp, p.terms).probs;
  return f;
}

void normalize_backward_row(ConstRow base, ConstRow res, ConstRow unit, ConstRow grad_unit, Row out) {
  Vec raw(base.size());
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = base[i] + res[i];
  const double n = norm(raw);
  const double ug = dot(unit, grad_unit);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (grad_unit[i] - unit[i] * ug) / n;
}

}  // namespace

double loss_entropy(const std::vector<Vec>& view_probs, double rho) {
  const auto idx = select_confident_views(view_probs, rho);
  return entropy_unchecked(mean_of(view_probs, idx));
}

double loss_align(const Matrix& t, const Matrix& v, const std::vector<bool>& valid) {
  return align_terms(t, v, valid_indices(valid)).loss;
}

double loss_contrast(const Matrix& v, const std::vector<bool>& valid, const Matrix& neg_means,
                     const std::vector<bool>& has_neg, double eps, bool* clamped) {
  const auto ct = contrast_terms(v, valid, neg_means, has_neg, eps);
  if (clamped) *clamped = ct.clamped;
  return ct.loss;
}

TuningProblem make_tuning_problem(const Matrix& views, const CacheBank& bank,
                                  const PrototypeState& state, const HyperParams& hp,
                                  const TermToggles& terms, const LossToggles& losses) {
  TuningProblem p;
  p.text = state.text;
  p.visual = state.visual;
  p.valid = state.valid_visual;
  p.hp = hp;
  p.terms = terms;
  p.weight_align = losses.align ? hp.lambda : 0.0;
  p.weight_contrast = losses.contrast ? hp.gamma : 0.0;

  const auto neg = bank.cache_matrices(CacheKind::kNegative, hp.p_mask);
  for (std::size_t n = 0; n < views.rows(); ++n) {
    ViewContext vc;
    vc.feature.assign(views.row(n).begin(), views.row(n).end());
    vc.negative_term = negative_scores(vc.feature, neg.features, neg.labels, hp);
    vc.cache_term = cache_scores(vc.feature, retrieve_adaptive(vc.feature, bank, hp));
    p.views.push_back(std::move(vc));
  }

  const std::size_t classes = bank.num_classes();
  p.negative_means = Matrix(classes, bank.dim());
  p.has_negative.assign(classes, false);
  if (bank.toggles().negative) {
    for (std::size_t c = 0; c < classes; ++c) {
      const auto& slots = bank.cache(CacheKind::kNegative, c).slots;
      if (slots.empty()) continue;
      Row row = p.negative_means.row(c);
      for (const auto& s : slots)
        for (std::size_t i = 0; i < row.size(); ++i) row[i] += s.feature[i];
      for (double& x : row) x /= static_cast<double>(slots.size());
      p.has_negative[c] = true;
    }
  }
  return p;
}

std::vector<Vec> view_probabilities(const TuningProblem& p, const Matrix& rt, const Matrix& rv) {
  const auto r = refine(p, rt, rv);
  std::vector<Vec> out;
  out.reserve(p.views.size());
  for (const auto& view : p.views) out.push_back(view_forward(p, r, view).probs);
  return out;
}

LossValue total_loss(const TuningProblem& p, const Matrix& rt, const Matrix& rv) {
  const auto r = refine(p, rt, rv);
  LossValue lv;
  std::vector<Vec> probs;
  for (const auto& view : p.views) probs.push_back(view_forward(p, r, view).probs);
  lv.selected_views = select_confident_views(probs, p.hp.rho);
  lv.entropy = entropy_unchecked(mean_of(probs, lv.selected_views));
  lv.align = loss_align(r.text, r.visual, p.valid);
  const auto ct = contrast_terms(r.visual, p.valid, p.negative_means, p.has_negative, p.hp.eps);
  lv.contrast = ct.loss;
  lv.contrast_clamped = ct.clamped;
  lv.total = p.weight_entropy * lv.entropy + p.weight_align * lv.align + p.weight_contrast * lv.contrast;
  return lv;
}

ResidualGradients grad_residuals(const TuningProblem& p, const Matrix& rt, const Matrix& rv) {
  const std::size_t C = p.num_classes();
  const std::size_t d = p.dim();
  const auto r = refine(p, rt, rv);
  const HyperParams& hp = p.hp;

  ResidualGradients g{Matrix(C, d), Matrix(C, d), {}};
  Matrix d_text(C, d), d_visual(C, d);  // w.r.t. refined prototypes

  std::vector<ViewForward> fw;
  std::vector<Vec> probs;
  for (const auto& view : p.views) {
    fw.push_back(view_forward(p, r, view));
    probs.push_back(fw.back().probs);
  }
  auto& lv = g.loss;
  lv.selected_views = select_confident_views(probs, hp.rho);
  const Vec mean = mean_of(probs, lv.selected_views);
  lv.entropy = entropy_unchecked(mean);

  if (p.weight_entropy != 0.0) {
    Vec dmean(C);
    const double scale = p.weight_entropy / static_cast<double>(lv.selected_views.size());
    for (std::size_t c = 0; c < C; ++c) dmean[c] = -(std::log(std::max(mean[c], 1e-300)) + 1.0) * scale;
    for (std::size_t n : lv.selected_views) {
      const ViewForward& f = fw[n];
      const Vec& pn = f.probs;
      double pg = 0.0;
      for (std::size_t c = 0; c < C; ++c) pg += pn[c] * dmean[c];
      Vec dz(C);
      for (std::size_t c = 0; c < C; ++c) dz[c] = pn[c] * (dmean[c] - pg);
      ConstRow feat = p.views[n].feature;
      if (p.terms.text && hp.alpha1 != 0.0) {
        const Vec dt = normalize_term_backward(f.text, dz, hp.normalization, hp.tau);
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t i = 0; i < d; ++i) d_text(c, i) += hp.alpha1 * dt[c] * feat[i];
      }
      if (p.terms.visual && hp.alpha2 != 0.0) {
        const Vec dp = normalize_term_backward(f.visual, dz, hp.normalization, hp.tau);
        for (std::size_t c = 0; c < C; ++c) {
          if (!p.valid[c]) continue;
          const double a = affinity(dot(feat, r.visual.row(c)), hp.alpha, hp.beta);
          const double coef = hp.alpha2 * dp[c] * hp.beta * a;
          for (std::size_t i = 0; i < d; ++i) d_visual(c, i) += coef * feat[i];
        }
      }
    }
  }

  const auto idx = valid_indices(p.valid);
  const auto at = align_terms(r.text, r.visual, idx);
  lv.align = at.loss;
  if (p.weight_align != 0.0) {
    for (std::size_t a = 0; a < idx.size(); ++a)
      for (std::size_t b = 0; b < idx.size(); ++b) {
        const double gab = p.weight_align * at.grad(a, b);
        for (std::size_t i = 0; i < d; ++i) {
          d_text(idx[a], i) += gab * r.visual(idx[b], i);
          d_visual(idx[b], i) += gab * r.text(idx[a], i);
        }
      }
  }

  const auto ct = contrast_terms(r.visual, p.valid, p.negative_means, p.has_negative, hp.eps);
  lv.contrast = ct.loss;
  lv.contrast_clamped = ct.clamped;
  if (p.weight_contrast != 0.0 && !ct.classes.empty()) {
    const double coef =
        p.weight_contrast * ct.dloss_dmean / static_cast<double>(ct.classes.size());
    for (std::size_t c : ct.classes) {
      ConstRow v = r.visual.row(c);
      ConstRow n = p.negative_means.row(c);
      const double nn = norm(n);
      const double vn = norm(v);
      const double raw = dot(v, n) / (vn * nn);
      if (std::abs(raw) > 1.0) continue;  // clamped cosine is flat
      for (std::size_t i = 0; i < d; ++i)
        d_visual(c, i) += coef * (n[i] / nn - raw * v[i] / vn) / vn;
    }
  }
  lv.total = p.weight_entropy * lv.entropy + p.weight_align * lv.align + p.weight_contrast * lv.contrast;

  for (std::size_t c = 0; c < C; ++c) {
    normalize_backward_row(p.text.row(c), rt.row(c), r.text.row(c), d_text.row(c), g.text.row(c));
    if (p.valid[c])
      normalize_backward_row(p.visual.row(c), rv.row(c), r.visual.row(c), d_visual.row(c), g.visual.row(c));
  }
  return g;
}

OptimizerState::OptimizerState(std::size_t classes, std::size_t dim, AdamConfig cfg)
    : config(cfg),
      m_text(classes, dim),
      v_text(classes, dim),
      m_visual(classes, dim),
      v_visual(classes, dim) {}

void OptimizerState::reset() {
  m_text.fill(0.0);
  v_text.fill(0.0);
  m_visual.fill(0.0);
  v_visual.fill(0.0);
  step = 0;
}

namespace {

void adam_update(const AdamConfig& cfg, std::uint64_t t, std::span<const double> grad,
                 std::span<double> m, std::span<double> v, std::span<double> param) {
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    if (cfg.weight_decay != 0.0) param[i] *= 1.0 - cfg.lr * cfg.weight_decay;
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    param[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

bool all_finite(std::span<const double> xs) {
  return std::all_of(xs.begin(), xs.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

bool optimizer_step(OptimizerState& opt, const Matrix& gt, const Matrix& gv, Matrix& rt, Matrix& rv) {
  check_dims(gt.data().size(), rt.data().size(), "optimizer_step text");
  check_dims(gv.data().size(), rv.data().size(), "optimizer_step visual");
  check_dims(opt.m_text.data().size(), rt.data().size(), "optimizer_step state");
  if (!all_finite(gt.data()) || !all_finite(gv.data())) {
    ++opt.skipped_nonfinite;
    return false;
  }
  ++opt.step;
  adam_update(opt.config, opt.step, gt.data(), opt.m_text.data(), opt.v_text.data(), rt.data());
  adam_update(opt.config, opt.step, gv.data(), opt.m_visual.data(), opt.v_visual.data(), rv.data());
  return true;
}

double GradcheckReport::max_rel_error() const {
  double m = 0.0;
  for (const auto& t : terms) m = std::max(m, t.max_rel_error);
  return m;
}

namespace {

Vec random_unit(std::mt19937_64& rng, std::size_t d) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec v(d);
  for (double& x : v) x = n(rng);
  l2_normalize_inplace(v);
  return v;
}

// Smallest entropy gap around the confident-view cut; zero-width gaps make
// the selection flip under finite-difference perturbation.
double selection_margin(const std::vector<Vec>& probs, double rho) {
  const std::size_t k = confident_view_count(probs.size(), rho);
  if (k >= probs.size()) return 1.0;
  std::vector<double> h;
  for (const auto& p : probs) h.push_back(entropy_unchecked(p));
  std::sort(h.begin(), h.end());
  return h[k] - h[k - 1];
}

}  // namespace

GradcheckInstance random_gradcheck_instance(std::uint64_t seed, std::size_t C, std::size_t d,
                                            std::size_t N) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n(0.0, 1.0);
  for (;;) {
    GradcheckInstance inst;
    TuningProblem& p = inst.problem;
    p.hp.rho = 0.25;  // keeps a proper subset selected at N = 4 and 8
    p.text = Matrix(C, d);
    p.visual = Matrix(C, d);
    p.valid.assign(C, false);
    for (std::size_t c = 0; c < C; ++c) {
      p.text.set_row(c, random_unit(rng, d));
      if (u(rng) < 0.8 || c < 1) {
        p.visual.set_row(c, random_unit(rng, d));
        p.valid[c] = true;
      }
    }
    for (std::size_t v = 0; v < N; ++v) {
      ViewContext vc;
      vc.feature = random_unit(rng, d);
      vc.negative_term.assign(C, 0.0);
      vc.cache_term.assign(C, 0.0);
      for (std::size_t c = 0; c < C; ++c) {
        if (u(rng) < 0.5) vc.negative_term[c] = 0.3 * u(rng);
        vc.cache_term[c] = 0.5 * n(rng);
      }
      p.views.push_back(std::move(vc));
    }
    p.negative_means = Matrix(C, d);
    p.has_negative.assign(C, false);
    for (std::size_t c = 0; c < C; ++c) {
      if (u(rng) < 0.6 || c == 0) {
        Vec m = random_unit(rng, d);
        for (double& x : m) x *= 0.5 + 0.5 * u(rng);
        p.negative_means.set_row(c, m);
        p.has_negative[c] = true;
      }
    }
    inst.res_text = Matrix(C, d);
    inst.res_visual = Matrix(C, d);
    for (double& x : inst.res_text.data()) x = 0.05 * n(rng);
    for (std::size_t c = 0; c < C; ++c)
      if (p.valid[c])
        for (double& x : inst.res_visual.row(c)) x = 0.05 * n(rng);

    const auto probs = view_probabilities(p, inst.res_text, inst.res_visual);
    bool clamped = false;
    const auto r = refine(p, inst.res_text, inst.res_visual);
    const double lc = loss_contrast(r.visual, p.valid, p.negative_means, p.has_negative, p.hp.eps, &clamped);
    if (selection_margin(probs, p.hp.rho) > 1e-3 && !clamped && lc < 2.0) return inst;
  }
}

double gradient_relative_error(const TuningProblem& p, const Matrix& rt, const Matrix& rv, double h) {
  const auto g = grad_residuals(p, rt, rv);
  const auto selected = g.loss.selected_views;
  double worst = 0.0;
  Matrix t = rt, v = rv;
  for (int which = 0; which < 2; ++which) {
    Matrix& param = which == 0 ? t : v;
    const Matrix& analytic = which == 0 ? g.text : g.visual;
    for (std::size_t i = 0; i < param.data().size(); ++i) {
      const double orig = param.data()[i];
      param.data()[i] = orig + h;
      const auto plus = total_loss(p, t, v);
      param.data()[i] = orig - h;
      const auto minus = total_loss(p, t, v);
      param.data()[i] = orig;
      if (plus.selected_views != selected || minus.selected_views != selected)
        throw DegenerateInput("gradient check: confident-view selection changed under perturbation");
      const double numeric = (plus.total - minus.total) / (2.0 * h);
      const double a = analytic.data()[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

GradcheckReport run_gradcheck(std::size_t instances, std::uint64_t seed, double h) {
  const auto t0 = std::chrono::steady_clock::now();
  constexpr std::size_t kClasses[] = {2, 3, 5};
  constexpr std::size_t kDims[] = {4, 8, 16};
  constexpr std::size_t kViews[] = {1, 4, 8};
  GradcheckReport rep;
  rep.terms = {{"entropy", 0.0}, {"align", 0.0}, {"contrast", 0.0}, {"total", 0.0}};
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < instances; ++i) {
    const std::size_t C = kClasses[i % 3];
    const std::size_t d = kDims[(i / 3) % 3];
    const std::size_t N = kViews[(i / 9) % 3];
    auto inst = random_gradcheck_instance(rng(), C, d, N);
    const std::array<std::array<double, 3>, 4> weights = {{{1.0, 0.0, 0.0},
                                                           {0.0, 1.0, 0.0},
                                                           {0.0, 0.0, 1.0},
                                                           {1.0, inst.problem.hp.lambda, inst.problem.hp.gamma}}};
    for (std::size_t t = 0; t < weights.size(); ++t) {
      TuningProblem p = inst.problem;
      p.weight_entropy = weights[t][0];
      p.weight_align = weights[t][1];
      p.weight_contrast = weights[t][2];
      const double err = gradient_relative_error(p, inst.res_text, inst.res_visual, h);
      rep.terms[t].max_rel_error = std::max(rep.terms[t].max_rel_error, err);
    }
    ++rep.instances;
  }
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

}  // namespace mcp
