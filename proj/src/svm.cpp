#include "persona/svm.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "persona/error.hpp"
#include "persona/rng.hpp"
#include "persona/simd/kernels.hpp"

namespace persona::svm {

namespace {
constexpr double kTau = 1e-12;  // floor for a non-positive second derivative
constexpr int kModelSchemaVersion = 1;
}  // namespace

KernelSpec parse_kernel(std::string_view text) {
  if (text == "linear") return KernelSpec::linear();
  if (text == "rbf" || text == "rbf:auto") return KernelSpec::rbf_auto();
  if (text.starts_with("rbf:")) {
    const std::string g(text.substr(4));
    double gamma = 0.0;
    auto [ptr, ec] = std::from_chars(g.data(), g.data() + g.size(), gamma);
    if (ec == std::errc() && ptr == g.data() + g.size() && gamma > 0.0 && std::isfinite(gamma)) {
      return KernelSpec::rbf(gamma);
    }
  }
  throw UsageError("bad kernel '" + std::string(text) + "' (valid: linear, rbf, rbf:<gamma>)");
}

double kernel_eval(const KernelSpec& k, std::span<const double> x, std::span<const double> z) {
  if (x.size() != z.size()) {
    throw UsageError("kernel dimension mismatch: " + std::to_string(x.size()) + " vs " + std::to_string(z.size()));
  }
  if (k.kind == KernelSpec::Kind::kLinear) return simd::dot(x, z);
  if (!(k.gamma > 0.0)) throw UsageError("rbf kernel evaluated with unresolved gamma");
  return std::exp(-k.gamma * simd::squared_distance(x, z));
}

double auto_gamma(const Matrix& x) {
  const std::size_t d = x.cols();
  if (d == 0 || x.rows() == 0) return 1.0;
  const double n = static_cast<double>(x.rows());
  double total_var = 0.0;
  for (std::size_t c = 0; c < d; ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) mean += x(r, c);
    mean /= n;
    double var = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) {
      const double diff = x(r, c) - mean;
      var += diff * diff;
    }
    total_var += var / n;
  }
  const double mean_var = total_var / static_cast<double>(d);
  if (!(mean_var > 0.0)) return 1.0 / static_cast<double>(d);
  return 1.0 / (static_cast<double>(d) * mean_var);
}

// ---------------------------------------------------------------------------
// KernelQMatrix

KernelQMatrix::KernelQMatrix(const Matrix& x, std::span<const int> y, KernelSpec kernel, double cache_mb)
    : x_(x), y_(y.begin(), y.end()), kernel_(kernel), diag_(y.size()), rows_(y.size()), lru_pos_(y.size()) {
  if (x.rows() != y.size()) throw UsageError("KernelQMatrix: x has " + std::to_string(x.rows()) + " rows, y has " +
                                             std::to_string(y.size()));
  const double row_bytes = std::max<double>(1.0, static_cast<double>(y.size()) * sizeof(double));
  capacity_ = std::max<std::size_t>(2, static_cast<std::size_t>(cache_mb * 1024.0 * 1024.0 / row_bytes));
  for (std::size_t i = 0; i < y.size(); ++i) diag_[i] = kernel_eval(kernel_, x.row(i), x.row(i));
}

void KernelQMatrix::compute_row(std::size_t i, std::vector<double>& out) const {
  const std::size_t n = y_.size();
  out.resize(n);
  const auto xi = x_.row(i);
  const auto& ops = simd::active();
  const std::size_t d = x_.cols();
  if (kernel_.kind == KernelSpec::Kind::kLinear) {
    for (std::size_t j = 0; j < n; ++j) out[j] = y_[i] * y_[j] * ops.dot(xi.data(), x_.row(j).data(), d);
  } else {
    const double g = kernel_.gamma;
    for (std::size_t j = 0; j < n; ++j) {
      out[j] = y_[i] * y_[j] * std::exp(-g * ops.squared_distance(xi.data(), x_.row(j).data(), d));
    }
  }
}

std::span<const double> KernelQMatrix::row(std::size_t i) {
  if (!rows_[i].empty()) {
    ++cache_hits_;
    lru_.splice(lru_.begin(), lru_, lru_pos_[i]);
    return rows_[i];
  }
  std::vector<double> storage;
  if (lru_.size() >= capacity_) {
    const std::size_t victim = lru_.back();
    lru_.pop_back();
    storage = std::move(rows_[victim]);
    rows_[victim].clear();
    rows_[victim].shrink_to_fit();
  }
  compute_row(i, storage);
  ++rows_computed_;
  rows_[i] = std::move(storage);
  lru_.push_front(i);
  lru_pos_[i] = lru_.begin();
  return rows_[i];
}

// ---------------------------------------------------------------------------
// SMO

namespace {

double dual_objective(std::span<const double> alpha, std::span<const double> grad) {
  // 1/2 a'Qa - e'a = 1/2 sum a_i (G_i - 1) since G = Qa - e
  double s = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) s += alpha[i] * (grad[i] - 1.0);
  return 0.5 * s;
}

}  // namespace

DualSolution solve_dual(QMatrix& q, std::span<const int> y, const SolverOptions& opt) {
  const std::size_t n = q.size();
  if (y.size() != n) throw UsageError("solve_dual: label count does not match Q");
  if (!(opt.C > 0.0) || !std::isfinite(opt.C)) throw UsageError("SVM box constraint C must be positive");
  if (!(opt.tol > 0.0)) throw UsageError("SVM tolerance must be positive");
  bool has_pos = false, has_neg = false;
  for (int v : y) {
    if (v == 1) {
      has_pos = true;
    } else if (v == -1) {
      has_neg = true;
    } else {
      throw UsageError("SVM labels must be -1 or +1");
    }
  }
  if (!has_pos || !has_neg) throw UsageError("SVM training set contains a single class");

  const double C = opt.C;
  // Seeded tie-breaking: among equally violating indices the one with the
  // lowest priority wins. Priorities do not depend on labels.
  const std::vector<std::size_t> priority = rng::permutation(n, opt.seed, 0x5350u);

  DualSolution sol;
  sol.alpha.assign(n, 0.0);
  sol.gradient.assign(n, -1.0);
  auto& alpha = sol.alpha;
  auto& G = sol.gradient;
  const auto& ops = simd::active();

  auto in_up = [&](std::size_t t) { return y[t] == 1 ? alpha[t] < C : alpha[t] > 0.0; };
  auto in_low = [&](std::size_t t) { return y[t] == 1 ? alpha[t] > 0.0 : alpha[t] < C; };

  std::uint64_t iter = 0;
  for (;;) {
    double gmax = -std::numeric_limits<double>::infinity();
    double gmin = std::numeric_limits<double>::infinity();
    std::ptrdiff_t i = -1, j = -1;
    for (std::size_t t = 0; t < n; ++t) {
      const double v = -y[t] * G[t];
      if (in_up(t) && (v > gmax || (v == gmax && priority[t] < priority[static_cast<std::size_t>(i)]))) {
        gmax = v;
        i = static_cast<std::ptrdiff_t>(t);
      }
      if (in_low(t) && (v < gmin || (v == gmin && priority[t] < priority[static_cast<std::size_t>(j)]))) {
        gmin = v;
        j = static_cast<std::ptrdiff_t>(t);
      }
    }
    sol.final_gap = gmax - gmin;
    if (i < 0 || j < 0 || gmax - gmin <= opt.tol) {
      sol.converged = true;
      break;
    }
    if (iter >= opt.max_iter) break;

    const auto ii = static_cast<std::size_t>(i);
    const auto jj = static_cast<std::size_t>(j);
    const auto Qi = q.row(ii);
    const auto Qj = q.row(jj);
    const double old_ai = alpha[ii];
    const double old_aj = alpha[jj];
    double ai = old_ai, aj = old_aj;

    if (y[ii] != y[jj]) {
      double quad = q.diag(ii) + q.diag(jj) + 2.0 * Qi[jj];
      if (quad <= 0.0) quad = kTau;
      const double delta = (-G[ii] - G[jj]) / quad;
      const double diff = ai - aj;
      ai += delta;
      aj += delta;
      if (diff > 0.0) {
        if (aj < 0.0) {
          aj = 0.0;
          ai = diff;
        }
      } else if (ai < 0.0) {
        ai = 0.0;
        aj = -diff;
      }
      if (diff > 0.0) {
        if (ai > C) {
          ai = C;
          aj = C - diff;
        }
      } else if (aj > C) {
        aj = C;
        ai = C + diff;
      }
    } else {
      double quad = q.diag(ii) + q.diag(jj) - 2.0 * Qi[jj];
      if (quad <= 0.0) quad = kTau;
      const double delta = (G[ii] - G[jj]) / quad;
      const double sum = ai + aj;
      ai -= delta;
      aj += delta;
      if (sum > C) {
        if (ai > C) {
          ai = C;
          aj = sum - C;
        }
      } else if (aj < 0.0) {
        aj = 0.0;
        ai = sum;
      }
      if (sum > C) {
        if (aj > C) {
          aj = C;
          ai = sum - C;
        }
      } else if (ai < 0.0) {
        ai = 0.0;
        aj = sum;
      }
    }
    alpha[ii] = ai;
    alpha[jj] = aj;
    ops.axpy2(ai - old_ai, Qi.data(), aj - old_aj, Qj.data(), G.data(), n);
    ++iter;
    if (opt.on_iteration) opt.on_iteration(iter, dual_objective(alpha, G));
  }
  sol.iterations = iter;
  sol.objective = dual_objective(alpha, G);

  // Bias: mean of -y_i G_i over free vectors, else the midpoint of the
  // feasible interval.
  double free_sum = 0.0;
  std::size_t free_count = 0;
  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < n; ++t) {
    const double v = -y[t] * G[t];
    if (alpha[t] > 0.0 && alpha[t] < C) {
      free_sum += v;
      ++free_count;
    } else if (in_up(t)) {
      lb = std::max(lb, v);
    } else {
      ub = std::min(ub, v);
    }
  }
  if (free_count > 0) {
    sol.bias = free_sum / static_cast<double>(free_count);
  } else if (std::isfinite(ub) && std::isfinite(lb)) {
    sol.bias = 0.5 * (ub + lb);
  } else {
    sol.bias = std::isfinite(ub) ? ub : lb;
  }
  return sol;
}

// ---------------------------------------------------------------------------
// SvmModel

SvmModel::SvmModel(Matrix support_vectors, std::vector<double> alpha_y, double bias, KernelSpec kernel,
                   features::Scaler scaler, double C)
    : sv_(std::move(support_vectors)),
      alpha_y_(std::move(alpha_y)),
      bias_(bias),
      kernel_(kernel),
      scaler_(std::move(scaler)),
      C_(C) {
  if (alpha_y_.empty()) throw IngestError("SVM model has no support vectors");
  if (sv_.rows() != alpha_y_.size()) throw IngestError("SVM model: support vector count does not match alpha_y");
  if (sv_.cols() != scaler_.dim()) {
    throw IngestError("SVM model: support vectors have dimension " + std::to_string(sv_.cols()) +
                      ", scaler has " + std::to_string(scaler_.dim()));
  }
  if (!(C_ > 0.0) || !std::isfinite(C_)) throw IngestError("SVM model: C must be positive and finite");
  if (!std::isfinite(bias_)) throw IngestError("SVM model: bias is not finite");
  if (kernel_.kind == KernelSpec::Kind::kRbf && !(kernel_.gamma > 0.0 && std::isfinite(kernel_.gamma))) {
    throw IngestError("SVM model: rbf gamma must be positive and finite");
  }
  for (std::size_t i = 0; i < alpha_y_.size(); ++i) {
    const double a = std::fabs(alpha_y_[i]);
    if (!std::isfinite(alpha_y_[i]) || !(a > 0.0) || a > C_ * (1.0 + 1e-12)) {
      throw IngestError("SVM model: alpha_y[" + std::to_string(i) + "] = " + std::to_string(alpha_y_[i]) +
                        " outside (0, C]");
    }
  }
  for (double v : sv_.data()) {
    if (!std::isfinite(v)) throw IngestError("SVM model: support vector contains a non-finite value");
  }
  if (kernel_.kind == KernelSpec::Kind::kLinear) {
    w_.assign(sv_.cols(), 0.0);
    for (std::size_t i = 0; i < sv_.rows(); ++i) {
      const auto r = sv_.row(i);
      for (std::size_t c = 0; c < w_.size(); ++c) w_[c] += alpha_y_[i] * r[c];
    }
  }
}

double SvmModel::decision_function(std::span<const double> x) const {
  if (x.size() != input_dim()) {
    throw UsageError("decision_function: input has dimension " + std::to_string(x.size()) + ", model expects " +
                     std::to_string(input_dim()));
  }
  const std::vector<double> z = scaler_.apply(x);
  const auto& ops = simd::active();
  if (kernel_.kind == KernelSpec::Kind::kLinear) return ops.dot(w_.data(), z.data(), z.size()) + bias_;
  double f = 0.0;
  for (std::size_t i = 0; i < sv_.rows(); ++i) {
    f += alpha_y_[i] * std::exp(-kernel_.gamma * ops.squared_distance(sv_.row(i).data(), z.data(), z.size()));
  }
  return f + bias_;
}

int SvmModel::predict(std::span<const double> x) const { return sign_label(decision_function(x)); }

// ---------------------------------------------------------------------------
// Training

TrainResult train_smo(const Matrix& x, std::span<const int> y, const SvmConfig& cfg, std::uint64_t seed) {
  if (x.rows() < 2) throw UsageError("SVM training needs at least 2 rows");
  if (x.rows() != y.size()) throw UsageError("SVM training: row count does not match label count");
  for (double v : x.data()) {
    if (!std::isfinite(v)) throw IntegrityError("SVM training data contains a non-finite value");
  }
  features::Scaler scaler = cfg.scale ? features::Scaler::fit(x) : features::Scaler::identity(x.cols());
  const Matrix scaled = cfg.scale ? scaler.apply(x) : x;

  KernelSpec kernel = cfg.kernel;
  if (kernel.is_auto()) kernel.gamma = auto_gamma(scaled);

  KernelQMatrix q(scaled, y, kernel, cfg.cache_mb);
  SolverOptions opt;
  opt.C = cfg.C;
  opt.tol = cfg.tol;
  opt.max_iter = cfg.max_iter;
  opt.seed = seed;
  DualSolution sol = solve_dual(q, y, opt);

  double balance = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) balance += sol.alpha[i] * y[i];
  if (std::fabs(balance) > 1e-8 * static_cast<double>(y.size()) * cfg.C) {
    throw IntegrityError("SMO equality constraint drifted: sum alpha_i y_i = " + std::to_string(balance));
  }

  Matrix sv;
  std::vector<double> alpha_y;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (sol.alpha[i] > 0.0) {
      sv.push_row(scaled.row(i));
      alpha_y.push_back(sol.alpha[i] * y[i]);
    }
  }
  SvmModel model(std::move(sv), std::move(alpha_y), sol.bias, kernel, std::move(scaler), cfg.C);
  return TrainResult{std::move(model), std::move(sol), kernel.gamma};
}

// ---------------------------------------------------------------------------
// Persistence

std::string model_to_json(const SvmModel& m) {
  nlohmann::ordered_json j;
  j["version"] = kModelSchemaVersion;
  j["kernel"] = {{"kind", m.kernel().kind_name()}, {"gamma", m.kernel().gamma}};
  j["C"] = m.C();
  j["scaler"] = {{"means", m.scaler().means()}, {"stds", m.scaler().stds()}};
  auto sv = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < m.support_vectors().rows(); ++i) {
    const auto r = m.support_vectors().row(i);
    sv.push_back(std::vector<double>(r.begin(), r.end()));
  }
  j["sv"] = std::move(sv);
  j["alpha_y"] = m.alpha_y();
  j["bias"] = m.bias();
  return j.dump();
}

SvmModel model_from_json(std::string_view text, std::string_view source_name) {
  const std::string where(source_name);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IngestError(where + ": invalid model JSON: " + e.what());
  }
  auto require = [&](const char* key) -> const nlohmann::json& {
    if (!j.is_object() || !j.contains(key)) throw IngestError(where + ": model schema mismatch, missing field '" + key + "'");
    return j.at(key);
  };
  try {
    if (require("version").get<int>() != kModelSchemaVersion) {
      throw IngestError(where + ": unsupported model schema version " + j.at("version").dump());
    }
    const auto& jk = require("kernel");
    KernelSpec kernel;
    const std::string kind = jk.at("kind").get<std::string>();
    if (kind == "linear") {
      kernel = KernelSpec::linear();
    } else if (kind == "rbf") {
      kernel = KernelSpec::rbf(jk.at("gamma").get<double>());
    } else {
      throw IngestError(where + ": unknown kernel kind '" + kind + "'");
    }
    const auto& js = require("scaler");
    features::Scaler scaler;
    try {
      scaler = features::Scaler(js.at("means").get<std::vector<double>>(), js.at("stds").get<std::vector<double>>());
    } catch (const std::invalid_argument& e) {
      throw IngestError(where + ": invalid scaler: " + e.what());
    }
    Matrix sv;
    for (const auto& row : require("sv")) {
      const auto r = row.get<std::vector<double>>();
      if (!sv.empty() && r.size() != sv.cols()) throw IngestError(where + ": ragged support vector matrix");
      sv.push_row(r);
    }
    auto alpha_y = require("alpha_y").get<std::vector<double>>();
    const double bias = require("bias").get<double>();
    const double C = require("C").get<double>();
    return SvmModel(std::move(sv), std::move(alpha_y), bias, kernel, std::move(scaler), C);
  } catch (const nlohmann::json::exception& e) {
    throw IngestError(where + ": model schema mismatch: " + e.what());
  } catch (const IngestError& e) {
    const std::string msg = e.what();
    if (msg.rfind(where, 0) == 0) throw;
    throw IngestError(where + ": " + msg);
  }
}

void save_model(const std::string& path, const SvmModel& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IngestError("cannot write model file '" + path + "'");
  out << model_to_json(m) << '\n';
  if (!out) throw IngestError("write failure on '" + path + "'");
}

SvmModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open model file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return model_from_json(buf.str(), path);
}

}  // namespace persona::svm
