#include "persona/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "persona/error.hpp"
#include "persona/parallel.hpp"
#include "persona/rng.hpp"

namespace persona::ensemble {

namespace fs = std::filesystem;

namespace {
constexpr std::size_t kMaxResampleRetries = 10;
constexpr int kSpecSchemaVersion = 1;

std::string member_file(std::size_t i) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "member_%02zu.json", i);
  return buf;
}
}  // namespace

void BaggingSpec::validate() const {
  if (n_estimators < 1) throw UsageError("bagging needs at least one estimator");
  if (!(sample_fraction > 0.0) || sample_fraction > 1.0) {
    throw UsageError("bagging sample_fraction must be in (0, 1]");
  }
}

std::vector<std::size_t> bootstrap_indices(std::size_t n, std::size_t bag_id, std::uint64_t master_seed,
                                           std::uint64_t attempt) {
  if (n == 0) throw UsageError("bootstrap over an empty stack");
  rng::CounterRng g(master_seed, (static_cast<std::uint64_t>(bag_id) << 8) | attempt);
  std::vector<std::size_t> idx(n);
  for (auto& v : idx) v = static_cast<std::size_t>(g.uniform(n));
  return idx;
}

std::uint64_t member_seed(std::uint64_t master_seed, std::size_t bag_id) {
  return rng::mix64(master_seed ^ rng::mix64(static_cast<std::uint64_t>(bag_id) + 1));
}

int majority_with_tiebreak(std::span<const int> labels, double mean_margin) {
  long balance = 0;
  for (int l : labels) balance += l > 0 ? 1 : -1;
  if (balance > 0) return 1;
  if (balance < 0) return -1;
  return svm::sign_label(mean_margin);
}

BaggedTraitModel::BaggedTraitModel(Trait trait, BaggingSpec spec, std::vector<svm::SvmModel> members)
    : trait_(trait), spec_(spec), members_(std::move(members)) {
  spec_.validate();
  if (members_.size() != spec_.n_estimators) {
    throw IngestError("bagged model for " + std::string(trait_name(trait)) + " has " +
                      std::to_string(members_.size()) + " members, spec says " + std::to_string(spec_.n_estimators));
  }
  for (const auto& m : members_) {
    if (m.input_dim() != members_.front().input_dim()) {
      throw IngestError("bagged model members disagree on the feature dimension");
    }
  }
}

ChunkVote BaggedTraitModel::vote_chunk(std::span<const double> x) const {
  std::vector<int> labels;
  labels.reserve(members_.size());
  double sum = 0.0;
  for (const auto& m : members_) {
    const double f = m.decision_function(x);
    sum += f;
    labels.push_back(svm::sign_label(f));
  }
  const double mean = sum / static_cast<double>(members_.size());
  return {majority_with_tiebreak(labels, mean), mean};
}

int BaggedTraitModel::vote_document(const Matrix& chunks) const {
  if (chunks.rows() == 0) throw UsageError("vote_document: essay has no chunks");
  std::vector<int> labels;
  double sum = 0.0;
  for (std::size_t r = 0; r < chunks.rows(); ++r) {
    const ChunkVote v = vote_chunk(chunks.row(r));
    labels.push_back(v.label);
    sum += v.margin;
  }
  return majority_with_tiebreak(labels, sum / static_cast<double>(chunks.rows()));
}

BaggedTraitModel train_bagged(Trait trait, const Matrix& x, std::span<const int> y, const BaggingSpec& spec,
                              const svm::SvmConfig& svm_config, std::size_t threads, TrainStats* stats) {
  spec.validate();
  if (x.rows() != y.size()) throw UsageError("train_bagged: row count does not match label count");
  bool has_pos = false, has_neg = false;
  for (int v : y) (v > 0 ? has_pos : has_neg) = true;
  if (!has_pos || !has_neg) {
    throw UsageError("training stack for " + std::string(trait_name(trait)) + " contains a single class");
  }
  const std::size_t n = x.rows();
  const auto sample_n = std::max<std::size_t>(
      2, static_cast<std::size_t>(std::llround(spec.sample_fraction * static_cast<double>(n))));

  struct MemberOut {
    std::optional<svm::TrainResult> result;
    std::size_t retries = 0;
  };
  std::vector<MemberOut> outs(spec.n_estimators);

  parallel_for(spec.n_estimators, threads, [&](std::size_t bag) {
    Matrix sample_x;
    std::vector<int> sample_y;
    if (!spec.bootstrap) {
      sample_x = x;
      sample_y.assign(y.begin(), y.end());
    } else {
      std::size_t attempt = 0;
      for (;; ++attempt) {
        if (attempt > kMaxResampleRetries) {
          throw IntegrityError("bag " + std::to_string(bag) + " for " + std::string(trait_name(trait)) +
                               ": bootstrap stayed single-class after " + std::to_string(kMaxResampleRetries) +
                               " retries");
        }
        auto idx = bootstrap_indices(n, bag, spec.master_seed, attempt);
        idx.resize(std::min(sample_n, n));
        bool pos = false, neg = false;
        for (auto i : idx) (y[i] > 0 ? pos : neg) = true;
        if (!(pos && neg)) continue;
        sample_x = Matrix(idx.size(), x.cols());
        sample_y.resize(idx.size());
        for (std::size_t r = 0; r < idx.size(); ++r) {
          const auto src = x.row(idx[r]);
          std::copy(src.begin(), src.end(), sample_x.row(r).begin());
          sample_y[r] = y[idx[r]];
        }
        break;
      }
      outs[bag].retries = attempt;
    }
    outs[bag].result.emplace(svm::train_smo(sample_x, sample_y, svm_config, member_seed(spec.master_seed, bag)));
  });

  std::vector<svm::SvmModel> members;
  TrainStats local;
  for (auto& o : outs) {
    local.total_iterations += o.result->solution.iterations;
    local.non_converged_members += o.result->solution.converged ? 0 : 1;
    local.resample_retries += o.retries;
    members.push_back(std::move(o.result->model));
  }
  if (stats) *stats = local;
  return BaggedTraitModel(trait, spec, std::move(members));
}

void save_bagged(const std::string& dir, const BaggedTraitModel& model) {
  fs::create_directories(dir);
  nlohmann::ordered_json j;
  j["version"] = kSpecSchemaVersion;
  j["trait"] = std::string(trait_name(model.trait()));
  j["n_estimators"] = model.spec().n_estimators;
  j["master_seed"] = model.spec().master_seed;
  j["sample_fraction"] = model.spec().sample_fraction;
  j["bootstrap"] = model.spec().bootstrap;
  {
    std::ofstream out(fs::path(dir) / "spec.json", std::ios::binary | std::ios::trunc);
    if (!out) throw IngestError("cannot write '" + (fs::path(dir) / "spec.json").string() + "'");
    out << j.dump(2) << '\n';
  }
  for (std::size_t i = 0; i < model.members().size(); ++i) {
    svm::save_model((fs::path(dir) / member_file(i)).string(), model.members()[i]);
  }
}

BaggedTraitModel load_bagged(const std::string& dir) {
  const fs::path spec_path = fs::path(dir) / "spec.json";
  std::ifstream in(spec_path, std::ios::binary);
  if (!in) throw IngestError("missing bagged model spec '" + spec_path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  BaggingSpec spec;
  Trait trait{};
  try {
    const auto j = nlohmann::json::parse(buf.str());
    if (j.at("version").get<int>() != kSpecSchemaVersion) throw IngestError(spec_path.string() + ": unsupported version");
    trait = trait_from_string(j.at("trait").get<std::string>());
    spec.n_estimators = j.at("n_estimators").get<std::size_t>();
    spec.master_seed = j.at("master_seed").get<std::uint64_t>();
    spec.sample_fraction = j.at("sample_fraction").get<double>();
    spec.bootstrap = j.value("bootstrap", true);
  } catch (const nlohmann::json::exception& e) {
    throw IngestError(spec_path.string() + ": schema mismatch: " + e.what());
  }
  std::vector<svm::SvmModel> members;
  for (std::size_t i = 0; i < spec.n_estimators; ++i) {
    members.push_back(svm::load_model((fs::path(dir) / member_file(i)).string()));
  }
  return BaggedTraitModel(trait, spec, std::move(members));
}

}  // namespace persona::ensemble
