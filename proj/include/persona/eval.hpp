#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "persona/corpus.hpp"
#include "persona/embed_store.hpp"
#include "persona/ensemble.hpp"
#include "persona/features.hpp"
#include "persona/svm.hpp"
#include "persona/textprep.hpp"

namespace persona::eval {

// ---------------------------------------------------------------------------
// Folds

struct FoldPlan {
  std::size_t k = 10;
  std::uint64_t seed = 0;
  std::map<std::string, std::size_t> assignments;  // author_id -> fold
  bool stratification_waived = false;
  std::vector<std::string> warnings;

  std::size_t fold_of(const std::string& author_id) const { return assignments.at(author_id); }
};

// Shuffles essays with `seed`, then deals each label class round-robin over
// the folds (negatives continue where positives stopped). Throws UsageError
// when k < 2, k > essays, or the trait has a single class.
FoldPlan make_folds(const Corpus& corpus, Trait trait, std::size_t k, std::uint64_t seed);

// True when every fold's positive count is within 2 essays of
// fold_size * global positive rate.
bool is_stratified(const FoldPlan& plan, const Corpus& corpus, Trait trait);

// ---------------------------------------------------------------------------
// Significance

struct SignificanceResult {
  std::string variant_a;
  std::string variant_b;
  double mean_difference = 0.0;
  double t_statistic = 0.0;  // +-inf when degenerate
  double p_value = 1.0;
  std::size_t df = 0;
  bool degenerate = false;  // zero-variance, nonzero-mean differences
};

// Two-sided paired t-test on a - b. Throws UsageError on a length mismatch or k < 2.
SignificanceResult paired_t_test(std::span<const double> a, std::span<const double> b, std::string name_a = "a",
                                 std::string name_b = "b");

// ---------------------------------------------------------------------------
// Variants and configuration

enum class ClassifierKind { kMajorityBaseline, kSingleSvm, kBaggedSvm, kOracle, kAntiOracle };

struct Variant {
  std::string name;
  ClassifierKind classifier = ClassifierKind::kBaggedSvm;
  features::PipelineConfig pipeline;
  bool static_embeddings = false;  // read the word-vector file instead of the transformer file
  std::string description;
};

// majority-baseline, bb-svm, m3, m8, m9, m13, m14, layer-0 .. layer-12,
// oracle-stub, anti-oracle-stub. Throws UsageError listing valid names.
Variant variant_by_name(std::string_view name);
std::vector<std::string> variant_names();

struct EvalConfig {
  svm::SvmConfig svm;
  ensemble::BaggingSpec bagging;
  std::size_t k = 10;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  std::vector<Trait> traits{kAllTraits.begin(), kAllTraits.end()};
  // Overrides applied on top of the variant's pipeline.
  std::optional<bool> psycho;
  std::optional<bool> scaling;
};

// Inputs shared by every variant. Pointers may be null when a variant does not
// need them (the majority baseline needs neither chunks nor embeddings).
struct EvalData {
  const Corpus* corpus = nullptr;
  const std::vector<textprep::Chunk>* chunks = nullptr;
  const embed::EmbeddingCollection* embeddings = nullptr;
  const embed::EmbeddingCollection* static_embeddings = nullptr;
};

// ---------------------------------------------------------------------------
// Reports

struct TraitResult {
  Trait trait{};
  std::vector<double> fold_accuracies;
  std::vector<std::size_t> fold_sizes;
  std::size_t correct = 0;
  std::size_t total = 0;
  // Pooled essay-level accuracy: correct / total over all held-out essays.
  double mean_accuracy = 0.0;
};

struct EvalReport {
  std::string variant;
  std::vector<TraitResult> per_trait;  // in kAllTraits order, requested traits only
  double average_accuracy = 0.0;       // unweighted mean of per-trait mean_accuracy
  std::size_t vector_dim = 0;          // SVM input dimension (0 for the baseline)
  std::size_t chunk_count = 0;
  std::size_t non_converged_members = 0;
  std::string config_fingerprint;
  double runtime_seconds = 0.0;

  const TraitResult* find(Trait t) const;
  // Per-fold mean over traits; the pairing unit for significance tests.
  std::vector<double> fold_average_accuracies() const;
};

// Canonical description of everything that influences a run's numbers.
std::string describe_config(const Variant& v, const EvalConfig& cfg);
// 16 hex digits, FNV-1a 64 over the canonical description.
std::string fingerprint(std::string_view canonical);

// Cross-validates one variant. Asserts per fold that no author appears on both
// sides (IntegrityError otherwise) and checks chunk/embedding coverage first.
EvalReport run_cv(const EvalData& data, const Variant& variant, const EvalConfig& cfg);

// Runtime is excluded unless asked for, so repeated runs are byte-identical.
std::string report_to_json(const EvalReport& r, bool include_runtime = false);

// Aligned text table, traits as columns and variants as rows. A '*' marks a
// row whose difference from the reference is significant at p <= 0.05.
std::string render_table(std::span<const EvalReport> reports,
                         std::span<const SignificanceResult> significance = {});

// ---------------------------------------------------------------------------
// Ablation

struct HyperPoint {
  svm::KernelSpec kernel;
  double C = 1.0;
};

struct AblationGrid {
  std::vector<std::string> variants;  // may include "layer-sweep"
  std::vector<HyperPoint> bb_svm_grid;  // extra bb-svm runs
  std::string reference = "bb-svm";
  double target_average = 59.03;
  double target_tolerance = 0.5;

  static AblationGrid from_json(std::string_view text);
  static AblationGrid defaults();
};

struct OrderingCheck {
  std::string better;
  std::string worse;
  bool holds = false;
};

struct AblationResult {
  std::vector<EvalReport> reports;
  std::vector<std::string> skipped;  // "name: reason" for variants lacking inputs
  std::vector<OrderingCheck> orderings;  // bb-svm vs m13 / m9 / m8 where available
  std::vector<SignificanceResult> significance;  // each row vs the reference
  bool target_reached = false;
  std::string closest_variant;
  double closest_average = 0.0;  // percent
};

AblationResult ablate(const EvalData& data, const AblationGrid& grid, const EvalConfig& cfg);
std::string ablation_to_json(const AblationResult& r);

}  // namespace persona::eval
