#include "mcp/prototypes.hpp"

#include <algorithm>

namespace mcp {

bool PrototypeState::any_valid_visual() const {
  return std::any_of(valid_visual.begin(), valid_visual.end(), [](bool b) { return b; });
}

Matrix text_prototypes(const std::vector<std::vector<Vec>>& prompt_embeddings) {
  if (prompt_embeddings.empty()) throw InvalidArgument("text_prototypes: no classes");
  const std::size_t d = prompt_embeddings.front().empty() ? 0 : prompt_embeddings.front().front().size();
  Matrix out(prompt_embeddings.size(), d);
  for (std::size_t c = 0; c < prompt_embeddings.size(); ++c) {
    const auto& prompts = prompt_embeddings[c];
    if (prompts.empty()) throw InvalidArgument("text_prototypes: class " + std::to_string(c) + " has no prompts");
    Row row = out.row(c);
    for (const Vec& p : prompts) {
      check_dims(p.size(), d, "text_prototypes");
      for (std::size_t i = 0; i < d; ++i) row[i] += p[i];
    }
    for (double& x : row) x /= static_cast<double>(prompts.size());
    l2_normalize_inplace(row);
  }
  return out;
}

VisualPrototypes visual_prototypes(const CacheBank& bank) {
  VisualPrototypes vp{Matrix(bank.num_classes(), bank.dim()), std::vector<bool>(bank.num_classes(), false)};
  for (std::size_t c = 0; c < bank.num_classes(); ++c) {
    const auto slots = bank.positive_slots(c);
    if (slots.empty()) continue;
    Row row = vp.visual.row(c);
    for (const CacheSlot* s : slots)
      for (std::size_t i = 0; i < row.size(); ++i) row[i] += s->feature[i];
    for (double& x : row) x /= static_cast<double>(slots.size());
    if (norm(row) > 1e-12) {
      l2_normalize_inplace(row);
      vp.valid[c] = true;
    } else {
      std::fill(row.begin(), row.end(), 0.0);
    }
  }
  return vp;
}

namespace {

void center_row(ConstRow t, ConstRow v, bool valid, double w, Row out) {
  if (!valid) {
    std::copy(t.begin(), t.end(), out.begin());
    return;
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = w * v[i] + (1.0 - w) * t[i];
  if (norm(out) > 1e-12) l2_normalize_inplace(out);
  else std::copy(t.begin(), t.end(), out.begin());
}

bool all_zero(ConstRow r) {
  return std::all_of(r.begin(), r.end(), [](double x) { return x == 0.0; });
}

void refine_row(ConstRow base, ConstRow res, Row out) {
  if (all_zero(res)) {
    std::copy(base.begin(), base.end(), out.begin());
    return;
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = base[i] + res[i];
  l2_normalize_inplace(out);
}

}  // namespace

Matrix prototype_center(const Matrix& text, const Matrix& visual, const std::vector<bool>& valid,
                        double w) {
  if (!(w >= 0.0 && w <= 1.0)) throw InvalidArgument("prototype_center: w outside [0,1]");
  check_dims(visual.rows(), text.rows(), "prototype_center");
  Matrix mu(text.rows(), text.cols());
  for (std::size_t c = 0; c < text.rows(); ++c) center_row(text.row(c), visual.row(c), valid[c], w, mu.row(c));
  return mu;
}

RefinedPrototypes apply_residuals(const PrototypeState& s) {
  RefinedPrototypes r{Matrix(s.num_classes(), s.dim()), Matrix(s.num_classes(), s.dim())};
  for (std::size_t c = 0; c < s.num_classes(); ++c) {
    refine_row(s.text.row(c), s.res_text.row(c), r.text.row(c));
    if (s.valid_visual[c]) refine_row(s.visual.row(c), s.res_visual.row(c), r.visual.row(c));
  }
  return r;
}

PrototypeState build_prototypes(const Matrix& text, const CacheBank& bank, double w,
                                const PrototypeState* residuals_from) {
  check_dims(text.rows(), bank.num_classes(), "build_prototypes classes");
  check_dims(text.cols(), bank.dim(), "build_prototypes dim");
  PrototypeState s;
  s.text = text;
  auto vp = visual_prototypes(bank);
  s.visual = std::move(vp.visual);
  s.valid_visual = std::move(vp.valid);
  if (residuals_from) {
    s.res_text = residuals_from->res_text;
    s.res_visual = residuals_from->res_visual;
  } else {
    s.res_text = Matrix(text.rows(), text.cols());
    s.res_visual = Matrix(text.rows(), text.cols());
  }
  const auto refined = apply_residuals(s);
  s.centers = prototype_center(refined.text, refined.visual, s.valid_visual, w);
  return s;
}

Vec class_center(const PrototypeState& s, std::size_t c, double w) {
  Vec t(s.dim()), v(s.dim()), mu(s.dim());
  refine_row(s.text.row(c), s.res_text.row(c), t);
  if (s.valid_visual[c]) refine_row(s.visual.row(c), s.res_visual.row(c), v);
  center_row(t, v, s.valid_visual[c], w, mu);
  return mu;
}

}  // namespace mcp
