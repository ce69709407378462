#include "fixture.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "persona/csv.hpp"
#include "persona/rng.hpp"
#include <unistd.h>

namespace persona::testing {

namespace fs = std::filesystem;

namespace {

constexpr const char* kVocabulary[] = {
    "i",      "think",  "today",  "class",   "friend", "really", "feel",   "about",  "the",    "music",
    "and",    "my",     "room",   "is",      "cold",   "going",  "home",   "later",  "maybe",  "we",
    "should", "study",  "for",    "test",    "tired",  "happy",  "people", "always", "never",  "want",
    "to",     "sleep",  "dinner", "weekend", "mother", "called", "work",   "it's",   "don't",  "can't",
    "you're", "i'm",    "they've", "we'll",  "she'd",  "won't",  "that's", "Don't",  "isn't",  "coffee"};

constexpr std::size_t kMaxSignalWidth = 16;

double gaussian(std::mt19937_64& g) { return std::normal_distribution<double>(0.0, 1.0)(g); }

// Columns [offset, offset + width) of each layer carry trait t.
std::size_t signal_width(std::uint32_t dim) {
  return std::clamp<std::size_t>(dim / kTraitCount, 1, kMaxSignalWidth);
}
std::size_t signal_offset(std::size_t t, std::uint32_t dim) { return (t * signal_width(dim)) % dim; }

}  // namespace

std::string scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("persona_test_" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

std::string random_essay_text(std::uint64_t seed, std::size_t words) {
  rng::CounterRng g(seed, 0x54455854);
  std::string text;
  std::size_t in_sentence = 0;
  const std::size_t vocab = std::size(kVocabulary);
  for (std::size_t w = 0; w < words; ++w) {
    std::string word = kVocabulary[g.uniform(vocab)];
    if (in_sentence == 0 && !word.empty()) word[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(word[0])));
    if (!text.empty()) text += ' ';
    text += word;
    ++in_sentence;
    const bool end = in_sentence >= 6 && (g.uniform(8) == 0 || in_sentence >= 22);
    if (end || w + 1 == words) {
      text += g.uniform(5) == 0 ? "?" : ".";
      in_sentence = 0;
    } else if (g.uniform(15) == 0) {
      text += ",";
    }
  }
  return text;
}

embed::ChunkEmbeddingSet random_record(std::uint64_t seed, std::string author_id, std::uint32_t chunk_index,
                                       std::uint16_t n_layers, std::uint32_t dim, std::size_t n_sentences) {
  std::mt19937_64 g(seed);
  embed::ChunkEmbeddingSet rec;
  rec.author_id = std::move(author_id);
  rec.chunk_index = chunk_index;
  rec.n_layers = n_layers;
  rec.dim = dim;
  const std::size_t cells = static_cast<std::size_t>(n_layers) * dim;
  if (n_sentences == 0) {
    rec.n_tokens_pooled = 1 + static_cast<std::uint32_t>(g() % 200);
    rec.layers.resize(cells);
    for (auto& v : rec.layers) v = static_cast<float>(gaussian(g));
    return rec;
  }
  std::vector<embed::SentenceEmbedding> sentences(n_sentences);
  std::vector<double> acc(cells, 0.0);
  std::uint32_t total = 0;
  for (auto& s : sentences) {
    s.n_tokens = 1 + static_cast<std::uint32_t>(g() % 30);
    s.values.resize(cells);
    for (std::size_t i = 0; i < cells; ++i) {
      s.values[i] = static_cast<float>(gaussian(g));
      acc[i] += static_cast<double>(s.n_tokens) * s.values[i];
    }
    total += s.n_tokens;
  }
  rec.n_tokens_pooled = total;
  rec.layers.resize(cells);
  for (std::size_t i = 0; i < cells; ++i) rec.layers[i] = static_cast<float>(acc[i] / total);
  rec.per_sentence = std::move(sentences);
  return rec;
}

Fixture build_fixture(const std::string& dir, const FixtureOptions& opt) {
  Fixture fx;
  fx.dir = dir;
  fs::create_directories(dir);
  fx.essays_csv = (fs::path(dir) / "essays.csv").string();
  fx.psycho_csv = (fs::path(dir) / "mairesse.csv").string();
  fx.chunks_jsonl = (fs::path(dir) / "chunks.jsonl").string();
  fx.embeddings_ceb = (fs::path(dir) / "essays.ceb").string();
  fx.static_ceb = (fs::path(dir) / "essays_static.ceb").string();

  std::mt19937_64 g(opt.seed);
  std::vector<Essay> essays;
  for (std::size_t i = 0; i < opt.essays; ++i) {
    Essay e;
    char id[32];
    std::snprintf(id, sizeof id, "1997_%03zu", i);
    e.author_id = id;
    const std::size_t words = opt.min_words + g() % (opt.max_words - opt.min_words + 1);
    e.text = random_essay_text(opt.seed * 1000 + i, words);
    for (auto& l : e.labels) l = (g() & 1) != 0;
    essays.push_back(std::move(e));
  }
  fx.corpus = Corpus(essays);
  write_essays_csv(fx.essays_csv, fx.corpus);

  std::string psycho_csv;
  {
    std::vector<std::string> header{"#AUTHID"};
    for (std::size_t c = 0; c < kPsychoFeatureCount; ++c) header.push_back("f" + std::to_string(c));
    psycho_csv += csv::format_row(header);
  }
  for (const Essay& e : fx.corpus.essays()) {
    PsychoFeatures p;
    p.author_id = e.author_id;
    for (std::size_t c = 0; c < kPsychoFeatureCount; ++c) p.values[c] = gaussian(g);
    for (std::size_t t = 0; t < kTraitCount; ++t) p.values[t] += 0.5 * opt.signal * (e.labels[t] ? 1.0 : -1.0);
    std::ostringstream row;
    row.precision(17);
    row << p.author_id;
    for (double v : p.values) row << ',' << v;
    psycho_csv += row.str() + "\n";
    fx.psycho.push_back(p);
  }
  write_file(fx.psycho_csv, psycho_csv);

  for (const Essay& e : fx.corpus.essays()) {
    auto cs = textprep::chunk_essay(e);
    fx.chunks.insert(fx.chunks.end(), cs.begin(), cs.end());
  }
  textprep::write_chunks_jsonl(fx.chunks_jsonl, fx.chunks);

  std::uint64_t record_seed = opt.seed * 7919;
  for (const auto& c : fx.chunks) {
    const Essay& e = *fx.corpus.find(c.author_id);
    const auto ci = static_cast<std::uint32_t>(c.chunk_index);
    auto add_signal = [&](std::vector<float>& m, std::uint16_t layers, std::uint32_t dim, std::size_t first_layer) {
      for (std::size_t l = first_layer; l < layers; ++l) {
        for (std::size_t t = 0; t < kTraitCount; ++t) {
          const float s = static_cast<float>(opt.signal * (e.labels[t] ? 1.0 : -1.0));
          for (std::size_t k = 0; k < signal_width(dim); ++k) m[l * dim + (signal_offset(t, dim) + k) % dim] += s;
        }
      }
    };
    auto rec = random_record(++record_seed, c.author_id, ci, opt.n_layers, opt.dim,
                             opt.per_sentence ? c.sentences.size() : 0);
    const std::size_t first = opt.n_layers > 4 ? opt.n_layers - 4 : 0;
    add_signal(rec.layers, opt.n_layers, opt.dim, first);
    if (rec.per_sentence) {
      for (auto& s : *rec.per_sentence) add_signal(s.values, opt.n_layers, opt.dim, first);
    }
    fx.embeddings.push_back(std::move(rec));
    if (opt.write_static) {
      auto st = random_record(++record_seed, c.author_id, ci, 1, opt.static_dim, 0);
      add_signal(st.layers, 1, opt.static_dim, 0);
      fx.static_embeddings.push_back(std::move(st));
    }
  }
  embed::write_embeddings(fx.embeddings_ceb, fx.embeddings);
  if (opt.write_static) embed::write_embeddings(fx.static_ceb, fx.static_embeddings);
  return fx;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

}  // namespace persona::testing
