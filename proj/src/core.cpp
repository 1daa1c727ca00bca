#include "mcp/core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mcp {

void Matrix::append_row(ConstRow values) {
  if (rows_ == 0 && cols_ == 0) cols_ = values.size();
  check_dims(values.size(), cols_, "Matrix::append_row");
  data_.insert(data_.end(), values.begin(), values.end());
  ++rows_;
}

void Matrix::set_row(std::size_t r, ConstRow values) {
  check_dims(values.size(), cols_, "Matrix::set_row");
  std::copy(values.begin(), values.end(), row(r).begin());
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string to_string(Normalization n) {
  switch (n) {
    case Normalization::kStandardize: return "standardize";
    case Normalization::kL2: return "l2";
    case Normalization::kSoftmax: return "softmax";
  }
  return "?";
}

Normalization parse_normalization(const std::string& s) {
  if (s == "standardize") return Normalization::kStandardize;
  if (s == "l2") return Normalization::kL2;
  if (s == "softmax") return Normalization::kSoftmax;
  throw InvalidArgument("unknown normalization '" + s + "'");
}

void HyperParams::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw InvalidArgument(std::string("hyperparameter constraint violated: ") + what);
  };
  need(tau > 0, "tau > 0");
  need(alpha > 0 && beta > 0, "alpha, beta > 0");
  need(w >= 0 && w <= 1, "w in [0,1]");
  need(rho >= 0 && rho <= 1, "rho in [0,1]");
  need(alpha1 >= 0 && alpha2 >= 0 && alpha3 >= 0, "fusion weights >= 0");
  need(lambda >= 0 && gamma >= 0, "loss weights >= 0");
  need(eps > 0, "eps > 0");
  need(lr >= 0, "lr >= 0");
  need(h_low_frac >= 0 && h_low_frac < h_high_frac && h_high_frac <= 1,
       "0 <= h_low_frac < h_high_frac <= 1");
  need(e_gate_frac >= 0 && e_gate_frac <= 1, "e_gate_frac in [0,1]");
  need(p_mask >= 0 && p_mask < 1, "p_mask in [0,1)");
  need(m_entropy >= 1 && m_align >= 1 && m_negative >= 1, "cache sizes >= 1");
  need(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1,
       "adam betas in [0,1)");
}

void check_dims(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    std::ostringstream os;
    os << what << ": dimension mismatch (got " << got << ", expected " << want << ")";
    throw InvalidArgument(os.str());
  }
}

double dot(ConstRow a, ConstRow b) {
  check_dims(b.size(), a.size(), "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(ConstRow a) {
  double s = 0.0;
  for (double x : a) s += x * x;
  return std::sqrt(s);
}

Vec softmax(ConstRow logits, double tau) {
  if (!(tau > 0) || !std::isfinite(tau)) throw InvalidArgument("softmax: tau must be finite and > 0");
  if (logits.empty()) throw InvalidArgument("softmax: empty logits");
  double mx = logits[0];
  for (double z : logits) {
    if (!std::isfinite(z)) throw InvalidArgument("softmax: non-finite logit");
    mx = std::max(mx, z);
  }
  Vec out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp((logits[i] - mx) / tau);
    sum += out[i];
  }
  for (double& p : out) p /= sum;
  return out;
}

double entropy_unchecked(ConstRow probs) {
  double h = 0.0;
  for (double p : probs)
    if (p > 0) h -= p * std::log(p);
  return std::max(h, 0.0);
}

double entropy(ConstRow probs) {
  if (probs.empty()) throw InvalidArgument("entropy: empty distribution");
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("entropy: probability outside [0,1]");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw InvalidArgument("entropy: probabilities do not sum to 1");
  return entropy_unchecked(probs);
}

double cosine(ConstRow a, ConstRow b) {
  check_dims(b.size(), a.size(), "cosine");
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) throw InvalidArgument("cosine: zero vector");
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

double affinity(double x, double alpha, double beta) { return alpha * std::exp(-beta * (1.0 - x)); }

void l2_normalize_inplace(Row v) {
  const double n = norm(v);
  if (!(n > 1e-12)) throw DegenerateInput("l2_normalize: near-zero norm");
  for (double& x : v) x /= n;
}

Vec l2_normalize(ConstRow v) {
  Vec out(v.begin(), v.end());
  l2_normalize_inplace(out);
  return out;
}

std::size_t argmax(ConstRow v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

double distance(ConstRow a, ConstRow b) {
  check_dims(b.size(), a.size(), "distance");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double t = a[i] - b[i];
    s += t * t;
  }
  return std::sqrt(s);
}

Vec matvec(const Matrix& m, ConstRow f) {
  check_dims(f.size(), m.cols(), "matvec");
  Vec out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) out[r] = dot(m.row(r), f);
  return out;
}

}  // namespace mcp
