#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "persona/corpus.hpp"
#include "persona/embed_store.hpp"
#include "persona/matrix.hpp"

namespace persona::features {

struct LayerSelector {
  enum class Mode { kSingle, kLastFour, kAllMean };
  Mode mode = Mode::kLastFour;
  std::size_t layer = 0;  // kSingle only, 0-based row of the stored matrix

  static LayerSelector single(std::size_t layer) { return {Mode::kSingle, layer}; }
  static LayerSelector last_four() { return {Mode::kLastFour, 0}; }
  static LayerSelector all_mean() { return {Mode::kAllMean, 0}; }

  // Throws UsageError when the selector cannot be served by n_layers rows.
  void check(std::size_t n_layers) const;
  std::size_t output_dim(std::size_t dim) const { return mode == Mode::kLastFour ? 4 * dim : dim; }

  // "last_four", "all_mean", "single:<i>" (or a bare index).
  static LayerSelector parse(std::string_view text);
  std::string to_string() const;

  friend bool operator==(const LayerSelector&, const LayerSelector&) = default;
};

// single(i): row i; last_four: rows L-4..L-1 concatenated in ascending order;
// all_mean: element-wise mean over rows.
std::vector<double> select_layers(std::span<const float> matrix, std::size_t n_layers, std::size_t dim,
                                  const LayerSelector& sel);
std::vector<double> select_layers(const embed::ChunkEmbeddingSet& rec, const LayerSelector& sel);

// select_layers on each sentence matrix, then an unweighted mean over sentences.
std::vector<double> sentence_then_chunk_mean(const embed::ChunkEmbeddingSet& rec, const LayerSelector& sel);

struct FusedVector {
  std::string author_id;
  std::size_t chunk_index = 0;
  std::vector<double> values;
};

// chunk_vec followed by the essay's 84 psycholinguistic values (if given).
FusedVector fuse(std::string author_id, std::size_t chunk_index, std::vector<double> chunk_vec,
                 const PsychoFeatures* psycho);

// Per-feature z-scoring. Features whose standard deviation is below 1e-12
// map to 0.
class Scaler {
 public:
  static constexpr double kMinStd = 1e-12;

  Scaler() = default;
  Scaler(std::vector<double> means, std::vector<double> stds);
  static Scaler identity(std::size_t dim);

  // Population statistics over the rows; throws std::invalid_argument when empty.
  static Scaler fit(const Matrix& rows);
  static Scaler fit(std::span<const FusedVector> train);

  std::size_t dim() const noexcept { return means_.size(); }
  const std::vector<double>& means() const noexcept { return means_; }
  const std::vector<double>& stds() const noexcept { return stds_; }

  std::vector<double> apply(std::span<const double> v) const;
  void apply_in_place(std::span<double> v) const;
  Matrix apply(const Matrix& rows) const;

  friend bool operator==(const Scaler&, const Scaler&) = default;

 private:
  std::vector<double> means_;
  std::vector<double> stds_;
};

enum class Pooling { kTokenMean, kSentenceMean };
Pooling parse_pooling(std::string_view s);
std::string_view pooling_name(Pooling p);

// How a chunk's embedding record turns into an SVM input vector.
struct PipelineConfig {
  LayerSelector layers = LayerSelector::last_four();
  Pooling pooling = Pooling::kTokenMean;
  bool psycho = true;
  bool scaling = true;

  std::size_t vector_dim(std::size_t embedding_dim) const {
    return layers.output_dim(embedding_dim) + (psycho ? kPsychoFeatureCount : 0);
  }
};

// Throws UsageError if psycho fusion is on but psycho is null.
FusedVector build_vector(const embed::ChunkEmbeddingSet& rec, const PsychoFeatures* psycho,
                         const PipelineConfig& cfg);

}  // namespace persona::features
