#include "persona/features.hpp"

#include <charconv>
#include <cmath>
#include <stdexcept>

#include "persona/error.hpp"

namespace persona::features {

void LayerSelector::check(std::size_t n_layers) const {
  switch (mode) {
    case Mode::kSingle:
      if (layer >= n_layers) {
        throw UsageError("layer index " + std::to_string(layer) + " out of range for " +
                         std::to_string(n_layers) + " stored layers");
      }
      break;
    case Mode::kLastFour:
      if (n_layers < 4) {
        throw UsageError("last_four needs at least 4 stored layers, file has " + std::to_string(n_layers));
      }
      break;
    case Mode::kAllMean:
      if (n_layers == 0) throw UsageError("all_mean needs at least one stored layer");
      break;
  }
}

LayerSelector LayerSelector::parse(std::string_view text) {
  if (text == "last_four" || text == "last4") return last_four();
  if (text == "all_mean" || text == "mean") return all_mean();
  std::string_view digits = text;
  if (digits.starts_with("single:")) digits.remove_prefix(7);
  std::size_t idx = 0;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), idx);
  if (ec != std::errc() || ptr != digits.data() + digits.size() || digits.empty()) {
    throw UsageError("bad layer selector '" + std::string(text) +
                     "' (valid: last_four, all_mean, single:<index>)");
  }
  return single(idx);
}

std::string LayerSelector::to_string() const {
  switch (mode) {
    case Mode::kSingle:
      return "single:" + std::to_string(layer);
    case Mode::kLastFour:
      return "last_four";
    case Mode::kAllMean:
      return "all_mean";
  }
  return "?";
}

std::vector<double> select_layers(std::span<const float> matrix, std::size_t n_layers, std::size_t dim,
                                  const LayerSelector& sel) {
  sel.check(n_layers);
  std::vector<double> out;
  switch (sel.mode) {
    case LayerSelector::Mode::kSingle: {
      const auto row = matrix.subspan(sel.layer * dim, dim);
      out.assign(row.begin(), row.end());
      break;
    }
    case LayerSelector::Mode::kLastFour: {
      const auto tail = matrix.subspan((n_layers - 4) * dim, 4 * dim);
      out.assign(tail.begin(), tail.end());
      break;
    }
    case LayerSelector::Mode::kAllMean: {
      out.assign(dim, 0.0);
      for (std::size_t l = 0; l < n_layers; ++l) {
        for (std::size_t c = 0; c < dim; ++c) out[c] += matrix[l * dim + c];
      }
      for (double& v : out) v /= static_cast<double>(n_layers);
      break;
    }
  }
  return out;
}

std::vector<double> select_layers(const embed::ChunkEmbeddingSet& rec, const LayerSelector& sel) {
  return select_layers(rec.layers, rec.n_layers, rec.dim, sel);
}

std::vector<double> sentence_then_chunk_mean(const embed::ChunkEmbeddingSet& rec, const LayerSelector& sel) {
  if (!rec.per_sentence || rec.per_sentence->empty()) {
    throw IntegrityError("record " + embed::format_key({rec.author_id, rec.chunk_index}) +
                         " has no per-sentence embeddings");
  }
  std::vector<double> acc;
  for (const auto& s : *rec.per_sentence) {
    auto v = select_layers(s.values, rec.n_layers, rec.dim, sel);
    if (acc.empty()) {
      acc = std::move(v);
    } else {
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i];
    }
  }
  const double n = static_cast<double>(rec.per_sentence->size());
  for (double& v : acc) v /= n;
  return acc;
}

FusedVector fuse(std::string author_id, std::size_t chunk_index, std::vector<double> chunk_vec,
                 const PsychoFeatures* psycho) {
  FusedVector f{std::move(author_id), chunk_index, std::move(chunk_vec)};
  if (psycho) f.values.insert(f.values.end(), psycho->values.begin(), psycho->values.end());
  return f;
}

Scaler::Scaler(std::vector<double> means, std::vector<double> stds) : means_(std::move(means)), stds_(std::move(stds)) {
  if (means_.size() != stds_.size()) throw std::invalid_argument("Scaler: means/stds length mismatch");
  for (double s : stds_) {
    if (!(s >= 0.0) || !std::isfinite(s)) throw std::invalid_argument("Scaler: std must be finite and >= 0");
  }
  for (double m : means_) {
    if (!std::isfinite(m)) throw std::invalid_argument("Scaler: mean must be finite");
  }
}

Scaler Scaler::identity(std::size_t dim) { return Scaler(std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)); }

Scaler Scaler::fit(const Matrix& rows) {
  if (rows.rows() == 0) throw std::invalid_argument("Scaler::fit: empty training set");
  const std::size_t d = rows.cols();
  const double n = static_cast<double>(rows.rows());
  std::vector<double> means(d, 0.0);
  for (std::size_t r = 0; r < rows.rows(); ++r) {
    const auto row = rows.row(r);
    for (std::size_t c = 0; c < d; ++c) means[c] += row[c];
  }
  for (double& m : means) m /= n;
  std::vector<double> var(d, 0.0);
  for (std::size_t r = 0; r < rows.rows(); ++r) {
    const auto row = rows.row(r);
    for (std::size_t c = 0; c < d; ++c) {
      const double diff = row[c] - means[c];
      var[c] += diff * diff;
    }
  }
  for (double& v : var) v = std::sqrt(v / n);
  return Scaler(std::move(means), std::move(var));
}

Scaler Scaler::fit(std::span<const FusedVector> train) {
  Matrix m;
  for (const auto& f : train) m.push_row(f.values);
  return fit(m);
}

void Scaler::apply_in_place(std::span<double> v) const {
  if (v.size() != dim()) {
    throw UsageError("scaler dimension mismatch: vector has " + std::to_string(v.size()) + ", scaler expects " +
                     std::to_string(dim()));
  }
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = stds_[i] < kMinStd ? 0.0 : (v[i] - means_[i]) / stds_[i];
}

std::vector<double> Scaler::apply(std::span<const double> v) const {
  std::vector<double> out(v.begin(), v.end());
  apply_in_place(out);
  return out;
}

Matrix Scaler::apply(const Matrix& rows) const {
  Matrix out = rows;
  for (std::size_t r = 0; r < out.rows(); ++r) apply_in_place(out.row(r));
  return out;
}

Pooling parse_pooling(std::string_view s) {
  if (s == "token_mean" || s == "token") return Pooling::kTokenMean;
  if (s == "sentence_mean" || s == "sentence") return Pooling::kSentenceMean;
  throw UsageError("unknown pooling '" + std::string(s) + "' (valid: token_mean, sentence_mean)");
}

std::string_view pooling_name(Pooling p) { return p == Pooling::kTokenMean ? "token_mean" : "sentence_mean"; }

FusedVector build_vector(const embed::ChunkEmbeddingSet& rec, const PsychoFeatures* psycho,
                         const PipelineConfig& cfg) {
  auto v = cfg.pooling == Pooling::kTokenMean ? select_layers(rec, cfg.layers)
                                              : sentence_then_chunk_mean(rec, cfg.layers);
  if (cfg.psycho && !psycho) {
    throw UsageError("psycholinguistic fusion enabled but no feature row for '" + rec.author_id + "'");
  }
  return fuse(rec.author_id, rec.chunk_index, std::move(v), cfg.psycho ? psycho : nullptr);
}

}  // namespace persona::features
