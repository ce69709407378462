#pragma once

// Soft-margin binary kernel SVM trained by sequential minimal optimization.
//
// The solver works on the dual
//
//   min_a  1/2 a'Qa - e'a    s.t.  0 <= a_i <= C,  y'a = 0,   Q_ij = y_i y_j K(x_i, x_j)
//
// and maintains the gradient G = Qa - e. Each step picks the maximal violating
// pair (i from I_up maximizing -y_i G_i, j from I_low minimizing it), solves the
// two-variable subproblem in closed form and clips it to the box. It stops when
// max_{I_up} -yG - min_{I_low} -yG <= tol, which puts every training point within
// tol of its KKT condition once the bias is taken from that interval.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <list>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "persona/features.hpp"
#include "persona/matrix.hpp"

namespace persona::svm {

struct KernelSpec {
  enum class Kind { kLinear, kRbf };
  Kind kind = Kind::kRbf;
  double gamma = 0.0;  // rbf only; 0 means "auto" until training resolves it

  static KernelSpec linear() { return {Kind::kLinear, 0.0}; }
  static KernelSpec rbf(double gamma) { return {Kind::kRbf, gamma}; }
  static KernelSpec rbf_auto() { return {Kind::kRbf, 0.0}; }

  bool is_auto() const { return kind == Kind::kRbf && gamma == 0.0; }
  std::string kind_name() const { return kind == Kind::kLinear ? "linear" : "rbf"; }
  friend bool operator==(const KernelSpec&, const KernelSpec&) = default;
};

// "linear", "rbf" (auto gamma) or "rbf:<gamma>".
KernelSpec parse_kernel(std::string_view text);

// linear: <x,z>; rbf: exp(-gamma |x - z|^2). Throws UsageError on a length
// mismatch or an unresolved auto gamma.
double kernel_eval(const KernelSpec& k, std::span<const double> x, std::span<const double> z);

// gamma = 1 / (d * mean per-feature variance); 1/d when every feature is constant.
double auto_gamma(const Matrix& x);

struct SvmConfig {
  KernelSpec kernel = KernelSpec::rbf_auto();
  double C = 1.0;
  double tol = 1e-3;
  std::uint64_t max_iter = 10'000'000;
  double cache_mb = 256.0;
  bool scale = true;
};

// Row access to Q. Implementations may compute rows lazily.
class QMatrix {
 public:
  virtual ~QMatrix() = default;
  virtual std::size_t size() const = 0;
  virtual double diag(std::size_t i) const = 0;
  virtual std::span<const double> row(std::size_t i) = 0;
};

// Q built from kernel evaluations over the rows of x, with an LRU row cache.
class KernelQMatrix final : public QMatrix {
 public:
  KernelQMatrix(const Matrix& x, std::span<const int> y, KernelSpec kernel, double cache_mb);
  std::size_t size() const override { return y_.size(); }
  double diag(std::size_t i) const override { return diag_[i]; }
  std::span<const double> row(std::size_t i) override;

  std::uint64_t rows_computed() const noexcept { return rows_computed_; }
  std::uint64_t cache_hits() const noexcept { return cache_hits_; }

 private:
  void compute_row(std::size_t i, std::vector<double>& out) const;

  const Matrix& x_;
  std::vector<int> y_;
  KernelSpec kernel_;
  std::vector<double> diag_;
  std::size_t capacity_;
  std::vector<std::vector<double>> rows_;  // empty when not cached
  std::list<std::size_t> lru_;             // most recent first
  std::vector<std::list<std::size_t>::iterator> lru_pos_;
  std::uint64_t rows_computed_ = 0;
  std::uint64_t cache_hits_ = 0;
};

struct SolverOptions {
  double C = 1.0;
  double tol = 1e-3;
  std::uint64_t max_iter = 10'000'000;
  std::uint64_t seed = 0;
  // Called after every pair update with (iteration, dual objective). Costs O(n)
  // per call; meant for tests.
  std::function<void(std::uint64_t, double)> on_iteration;
};

struct DualSolution {
  std::vector<double> alpha;
  std::vector<double> gradient;  // Qa - e
  double bias = 0.0;
  double objective = 0.0;  // 1/2 a'Qa - e'a
  std::uint64_t iterations = 0;
  bool converged = false;
  double final_gap = 0.0;  // max violation at exit
};

// Throws UsageError if y is not in {-1,+1}, has one class, or C <= 0.
DualSolution solve_dual(QMatrix& q, std::span<const int> y, const SolverOptions& opt);

class SvmModel {
 public:
  // Validates 0 < |alpha_y_i| <= C, matching dimensions and finiteness; throws
  // IngestError otherwise. An empty support set is rejected.
  SvmModel(Matrix support_vectors, std::vector<double> alpha_y, double bias, KernelSpec kernel,
           features::Scaler scaler, double C);

  std::size_t input_dim() const noexcept { return scaler_.dim(); }
  std::size_t support_count() const noexcept { return alpha_y_.size(); }
  const Matrix& support_vectors() const noexcept { return sv_; }
  const std::vector<double>& alpha_y() const noexcept { return alpha_y_; }
  double bias() const noexcept { return bias_; }
  double C() const noexcept { return C_; }
  const KernelSpec& kernel() const noexcept { return kernel_; }
  const features::Scaler& scaler() const noexcept { return scaler_; }

  // f(x) = sum_i alpha_y_i k(sv_i, scale(x)) + b; x is in unscaled input space.
  double decision_function(std::span<const double> x) const;
  // sign(f) with sign(0) = +1
  int predict(std::span<const double> x) const;

 private:
  Matrix sv_;
  std::vector<double> alpha_y_;
  double bias_;
  KernelSpec kernel_;
  features::Scaler scaler_;
  double C_;
  std::vector<double> w_;  // linear kernel only: sum_i alpha_y_i sv_i
};

struct TrainResult {
  SvmModel model;
  DualSolution solution;  // over all training rows, in scaled space
  double gamma = 0.0;     // resolved gamma (rbf)
};

// Fits the scaler (if cfg.scale), resolves auto gamma on the scaled data and
// runs SMO. Non-convergence is reported through solution.converged.
TrainResult train_smo(const Matrix& x, std::span<const int> y, const SvmConfig& cfg, std::uint64_t seed);

inline int sign_label(double f) { return f >= 0.0 ? 1 : -1; }

std::string model_to_json(const SvmModel& m);
SvmModel model_from_json(std::string_view text, std::string_view source_name = "<memory>");
void save_model(const std::string& path, const SvmModel& m);
SvmModel load_model(const std::string& path);

}  // namespace persona::svm
