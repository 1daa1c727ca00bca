#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mcp {

// Error idiom: exceptions. Callers at the CLI boundary map these to exit codes.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DegenerateInput : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Vec = std::vector<double>;
using ConstRow = std::span<const double>;
using Row = std::span<double>;

/// Dense row-major matrix. Only the shapes this project needs (C x d, K x d,
/// K x C); no broadcasting or expression templates.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return rows_ == 0; }

  Row row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  ConstRow row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  void append_row(ConstRow values);
  void set_row(std::size_t r, ConstRow values);
  void fill(double v);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

enum class Normalization { kStandardize, kL2, kSoftmax };

std::string to_string(Normalization n);
Normalization parse_normalization(const std::string& s);

struct HyperParams {
  double tau = 0.01;  // zero-shot softmax temperature
  double alpha = 1.0;
  double beta = 5.5;
  double w = 0.8;
  double alpha1 = 1.0;
  double alpha2 = 1.0;
  double alpha3 = 1.0;
  double lambda = 0.5;
  double gamma = 0.2;
  double rho = 0.1;  // kept fraction of confident views
  double eps = 1e-6;
  double lr = 1e-4;
  double weight_decay = 0.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double h_low_frac = 0.2;
  double h_high_frac = 0.5;
  double e_gate_frac = 0.1;
  double p_mask = 0.03;
  std::size_t m_entropy = 10;
  std::size_t m_align = 10;
  std::size_t m_negative = 3;
  Normalization normalization = Normalization::kStandardize;

  /// Throws InvalidArgument naming the first violated constraint.
  void validate() const;
};

// ---- scalar / vector functions ----

double dot(ConstRow a, ConstRow b);
double norm(ConstRow a);

/// exp(z/tau) / sum exp(z/tau) with max subtraction.
Vec softmax(ConstRow logits, double tau);

/// Shannon entropy in nats; 0 ln 0 := 0. Validates the input distribution.
double entropy(ConstRow probs);

/// Entropy without validation, for hot loops on softmax output.
double entropy_unchecked(ConstRow probs);

/// Cosine similarity clamped to [-1, 1].
double cosine(ConstRow a, ConstRow b);

/// alpha * exp(-beta * (1 - x))
double affinity(double x, double alpha, double beta);

Vec l2_normalize(ConstRow v);
void l2_normalize_inplace(Row v);

std::size_t argmax(ConstRow v);

/// Euclidean distance.
double distance(ConstRow a, ConstRow b);

void check_dims(std::size_t got, std::size_t want, const char* what);

/// M * f, one entry per row of M.
Vec matvec(const Matrix& m, ConstRow f);

}  // namespace mcp
