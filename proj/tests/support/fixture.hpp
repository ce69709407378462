#pragma once

// Synthetic corpus + embedding files for tests. Labels are drawn at random
// and leak into a few embedding dimensions and psycholinguistic columns, so a
// working classifier beats the majority rate on them.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "persona/corpus.hpp"
#include "persona/embed_store.hpp"
#include "persona/textprep.hpp"

namespace persona::testing {

struct FixtureOptions {
  std::size_t essays = 50;
  std::uint64_t seed = 7;
  std::uint16_t n_layers = 13;
  std::uint32_t dim = 768;
  std::uint32_t static_dim = 300;
  bool per_sentence = false;
  bool write_static = true;
  double signal = 1.0;
  std::size_t min_words = 180;
  std::size_t max_words = 420;
};

struct Fixture {
  std::string dir;
  std::string essays_csv;
  std::string psycho_csv;
  std::string chunks_jsonl;
  std::string embeddings_ceb;
  std::string static_ceb;

  Corpus corpus;
  std::vector<PsychoFeatures> psycho;
  std::vector<textprep::Chunk> chunks;
  std::vector<embed::ChunkEmbeddingSet> embeddings;
  std::vector<embed::ChunkEmbeddingSet> static_embeddings;
};

// Fresh empty directory under the system temp dir.
std::string scratch_dir(const std::string& name);

std::string random_essay_text(std::uint64_t seed, std::size_t words);

// Writes essays CSV, psycho CSV, chunks JSONL and CEB1 files into dir.
Fixture build_fixture(const std::string& dir, const FixtureOptions& opt = {});

// Embedding record with per-sentence blocks whose token-weighted mean equals
// the chunk matrix.
embed::ChunkEmbeddingSet random_record(std::uint64_t seed, std::string author_id, std::uint32_t chunk_index,
                                       std::uint16_t n_layers, std::uint32_t dim, std::size_t n_sentences);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& text);

}  // namespace persona::testing
