#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "persona/matrix.hpp"
#include "persona/svm.hpp"
#include "persona/traits.hpp"

namespace persona::ensemble {

struct BaggingSpec {
  std::size_t n_estimators = 10;
  std::uint64_t master_seed = 0;
  double sample_fraction = 1.0;  // bootstrap size = fraction * stack size
  // When false every member sees the whole stack in order (no resampling).
  bool bootstrap = true;

  void validate() const;
};

// n indices drawn uniformly with replacement from [0, n); a pure function of
// (n, bag_id, master_seed, attempt).
std::vector<std::size_t> bootstrap_indices(std::size_t n, std::size_t bag_id, std::uint64_t master_seed,
                                           std::uint64_t attempt = 0);

// Seed handed to member bag_id's SMO solver (tie-breaking only).
std::uint64_t member_seed(std::uint64_t master_seed, std::size_t bag_id);

struct ChunkVote {
  int label = 1;
  double margin = 0.0;  // mean member decision value
};

class BaggedTraitModel {
 public:
  BaggedTraitModel(Trait trait, BaggingSpec spec, std::vector<svm::SvmModel> members);

  Trait trait() const noexcept { return trait_; }
  const BaggingSpec& spec() const noexcept { return spec_; }
  const std::vector<svm::SvmModel>& members() const noexcept { return members_; }
  std::size_t input_dim() const { return members_.front().input_dim(); }

  // Majority of member labels; ties go to sign(mean decision value), sign(0) = +1.
  ChunkVote vote_chunk(std::span<const double> x) const;
  // Majority of chunk labels; ties go to sign(mean chunk margin).
  int vote_document(const Matrix& chunks) const;

 private:
  Trait trait_;
  BaggingSpec spec_;
  std::vector<svm::SvmModel> members_;
};

struct TrainStats {
  std::uint64_t total_iterations = 0;
  std::size_t non_converged_members = 0;
  std::size_t resample_retries = 0;
};

// Member i trains on bootstrap sample i (its own scaler is fitted inside
// train_smo). A single-class bootstrap is redrawn with attempt+1, at most 10
// times. Members run on up to `threads` workers; results do not depend on it.
BaggedTraitModel train_bagged(Trait trait, const Matrix& x, std::span<const int> y, const BaggingSpec& spec,
                              const svm::SvmConfig& svm_config, std::size_t threads = 1,
                              TrainStats* stats = nullptr);

// Directory layout: spec.json + member_00.json ... member_NN.json
void save_bagged(const std::string& dir, const BaggedTraitModel& model);
BaggedTraitModel load_bagged(const std::string& dir);

int majority_with_tiebreak(std::span<const int> labels, double mean_margin);

}  // namespace persona::ensemble
