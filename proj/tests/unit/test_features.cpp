#include "doctest.h"
#include "fixture.hpp"
#include "persona/error.hpp"
#include "persona/features.hpp"

#include <cmath>
#include <random>

using namespace persona;
using namespace persona::features;

namespace {

embed::ChunkEmbeddingSet record(std::uint16_t layers, std::uint32_t dim) {
  embed::ChunkEmbeddingSet rec;
  rec.author_id = "a";
  rec.n_layers = layers;
  rec.dim = dim;
  rec.n_tokens_pooled = 1;
  rec.layers.resize(static_cast<std::size_t>(layers) * dim);
  for (std::size_t i = 0; i < rec.layers.size(); ++i) rec.layers[i] = static_cast<float>(i);
  return rec;
}

PsychoFeatures psycho() {
  PsychoFeatures p;
  p.author_id = "a";
  for (std::size_t i = 0; i < kPsychoFeatureCount; ++i) p.values[i] = 1000.0 + i;
  return p;
}

}  // namespace

TEST_CASE("select_layers: shapes") {
  const auto rec = record(13, 768);
  CHECK(select_layers(rec, LayerSelector::last_four()).size() == 3072);
  CHECK(select_layers(rec, LayerSelector::single(11)).size() == 768);
  CHECK(select_layers(rec, LayerSelector::all_mean()).size() == 768);
  CHECK_THROWS_AS(select_layers(record(1, 300), LayerSelector::last_four()), UsageError);
  CHECK_THROWS_AS(select_layers(rec, LayerSelector::single(13)), UsageError);
}

TEST_CASE("select_layers: values") {
  const std::vector<float> m{1, 1, 3, 3};
  CHECK(select_layers(m, 2, 2, LayerSelector::all_mean()) == std::vector<double>{2, 2});
  CHECK(select_layers(m, 2, 2, LayerSelector::single(1)) == std::vector<double>{3, 3});
  const auto rec = record(6, 2);
  // rows 2..5 in ascending order
  CHECK(select_layers(rec, LayerSelector::last_four()) == std::vector<double>{4, 5, 6, 7, 8, 9, 10, 11});
}

TEST_CASE("layer selector parsing") {
  CHECK(LayerSelector::parse("last_four") == LayerSelector::last_four());
  CHECK(LayerSelector::parse("all_mean") == LayerSelector::all_mean());
  CHECK(LayerSelector::parse("single:11") == LayerSelector::single(11));
  CHECK(LayerSelector::parse("0") == LayerSelector::single(0));
  CHECK(LayerSelector::parse(LayerSelector::single(4).to_string()) == LayerSelector::single(4));
  CHECK_THROWS_AS(LayerSelector::parse("first_two"), UsageError);
  CHECK_THROWS_AS(LayerSelector::parse("single:x"), UsageError);
}

TEST_CASE("fuse: dimension law") {
  const auto p = psycho();
  const auto bert = record(13, 768);
  PipelineConfig bb;
  CHECK(bb.vector_dim(768) == 3156);
  const auto v = build_vector(bert, &p, bb);
  CHECK(v.values.size() == 3156);
  CHECK(v.values[3072] == 1000.0);
  CHECK(v.values.back() == 1083.0);

  PipelineConfig m8;
  m8.layers = LayerSelector::single(0);
  CHECK(build_vector(record(1, 300), &p, m8).values.size() == 384);

  PipelineConfig no_psycho;
  no_psycho.layers = LayerSelector::single(12);
  no_psycho.psycho = false;
  CHECK(build_vector(bert, nullptr, no_psycho).values.size() == 768);
  CHECK_THROWS_AS(build_vector(bert, nullptr, bb), UsageError);
  CHECK(fuse("a", 0, std::vector<double>(768, 0.0), nullptr).values.size() == 768);
}

TEST_CASE("sentence mean pooling") {
  embed::ChunkEmbeddingSet rec = record(1, 2);
  rec.per_sentence = std::vector<embed::SentenceEmbedding>{{10, {1.0f, 1.0f}}, {30, {3.0f, 3.0f}}};
  rec.layers = {2.5f, 2.5f};  // token-weighted mean
  rec.n_tokens_pooled = 40;
  CHECK(sentence_then_chunk_mean(rec, LayerSelector::single(0)) == std::vector<double>{2, 2});
  CHECK(select_layers(rec, LayerSelector::single(0)) != sentence_then_chunk_mean(rec, LayerSelector::single(0)));

  embed::ChunkEmbeddingSet one = record(1, 2);
  one.per_sentence = std::vector<embed::SentenceEmbedding>{{5, {7.0f, -1.0f}}};
  CHECK(sentence_then_chunk_mean(one, LayerSelector::single(0)) == std::vector<double>{7, -1});

  PipelineConfig m9;
  m9.pooling = Pooling::kSentenceMean;
  m9.layers = LayerSelector::single(0);
  m9.psycho = false;
  CHECK(build_vector(rec, nullptr, m9).values == std::vector<double>{2, 2});
  CHECK_THROWS_AS(sentence_then_chunk_mean(record(1, 2), LayerSelector::single(0)), IntegrityError);
}

TEST_CASE("scaler: z-scoring") {
  Matrix x;
  x.push_row(std::vector<double>{0.0, 5.0});
  x.push_row(std::vector<double>{2.0, 5.0});
  const auto s = Scaler::fit(x);
  CHECK(s.means() == std::vector<double>{1.0, 5.0});
  CHECK(s.stds()[0] == doctest::Approx(1.0));
  CHECK(s.stds()[1] == 0.0);
  CHECK(s.apply(std::vector<double>{2.0, 9.0}) == std::vector<double>{1.0, 0.0});
  CHECK(s.apply(std::vector<double>{1.0, 5.0}) == std::vector<double>{0.0, 0.0});
  std::vector<double> wrong{1.0};
  CHECK_THROWS_AS(s.apply_in_place(wrong), UsageError);
  CHECK_THROWS_AS(Scaler::fit(Matrix{}), std::invalid_argument);
  CHECK(Scaler::identity(3).apply(std::vector<double>{1, 2, 3}) == std::vector<double>{1, 2, 3});
}

TEST_CASE("scaler: fitted statistics on random data") {
  std::mt19937_64 g(3);
  std::normal_distribution<double> d(4.0, 3.0);
  Matrix x(200, 5);
  for (std::size_t r = 0; r < 200; ++r) {
    for (std::size_t c = 0; c < 5; ++c) x(r, c) = d(g) * (c + 1);
  }
  const auto s = Scaler::fit(x);
  const Matrix z = s.apply(x);
  for (std::size_t c = 0; c < 5; ++c) {
    double mean = 0.0, sq = 0.0;
    for (std::size_t r = 0; r < 200; ++r) mean += z(r, c);
    mean /= 200;
    for (std::size_t r = 0; r < 200; ++r) sq += (z(r, c) - mean) * (z(r, c) - mean);
    CHECK(std::abs(mean) < 1e-12);
    CHECK(std::sqrt(sq / 200) == doctest::Approx(1.0));
  }
}

TEST_CASE("pooling names") {
  CHECK(parse_pooling("token_mean") == Pooling::kTokenMean);
  CHECK(parse_pooling("sentence_mean") == Pooling::kSentenceMean);
  CHECK(pooling_name(Pooling::kSentenceMean) == "sentence_mean");
  CHECK_THROWS_AS(parse_pooling("max"), UsageError);
}
