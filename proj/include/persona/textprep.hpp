#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "persona/corpus.hpp"
#include "persona/error.hpp"

namespace persona::textprep {

using Sentence = std::vector<std::string>;

struct Chunk {
  std::string author_id;
  std::size_t chunk_index = 0;
  std::vector<Sentence> sentences;      // after contraction expansion
  std::size_t token_count = 0;          // post-expansion
  std::size_t pre_expansion_tokens = 0;

  friend bool operator==(const Chunk&, const Chunk&) = default;
};

enum class PackMode { kSentence, kWindow };

struct ChunkPlan {
  std::size_t max_pre_expansion_tokens = 200;
  std::size_t max_post_expansion_tokens = 250;
  std::size_t hard_token_cap = 512;
  PackMode pack = PackMode::kSentence;

  // Throws UsageError unless 0 < max_pre <= max_post <= hard cap.
  void validate() const;
};

PackMode parse_pack_mode(std::string_view s);
std::string_view pack_mode_name(PackMode m);

class EmptyEssayError : public IngestError {
 public:
  explicit EmptyEssayError(const std::string& author_id)
      : IngestError("essay '" + author_id + "' is empty after cleaning"), author_id_(author_id) {}
  const std::string& author_id() const noexcept { return author_id_; }

 private:
  std::string author_id_;
};

// Keeps ASCII letters, digits, ' " ! . ? ; every other byte becomes a space,
// whitespace runs collapse to one space, ends are trimmed.
std::string clean_text(std::string_view raw);

// Splits at '.' and '?', drops empty fragments, whitespace-tokenizes each.
std::vector<Sentence> split_sentences(std::string_view cleaned);

// The contraction table compiled into the library (data/contractions_v1.tsv).
class ContractionTable {
 public:
  static const ContractionTable& builtin();
  // Parses the tab-separated table format; throws IngestError on bad lines.
  static ContractionTable parse(std::string_view tsv);

  // Returns the expansion of one token (one or two tokens), or the token unchanged.
  std::vector<std::string> expand(std::string_view token) const;
  std::string_view version() const noexcept { return version_; }

 private:
  struct Rule {
    std::string pattern;  // lowercase
    std::vector<std::string> replacement;
  };
  std::vector<Rule> whole_;
  std::vector<Rule> suffix_;
  std::vector<std::string> s_stems_;
  std::string version_;
};

// Rewrites each token through the contraction table, preserving the case of
// the token's leading character.
Sentence expand_contractions(const Sentence& sentence,
                             const ContractionTable& table = ContractionTable::builtin());

// clean -> split -> pack (<= max_pre tokens) -> expand; chunks that exceed
// max_post after expansion are re-split. Throws EmptyEssayError.
std::vector<Chunk> chunk_essay(const Essay& essay, const ChunkPlan& plan = {},
                               const ContractionTable& table = ContractionTable::builtin());

// JSON-lines: {"author_id":..., "chunk_index":..., "sentences":[[...],...]}
std::string chunk_to_json_line(const Chunk& chunk);
void write_chunks_jsonl(const std::string& path, const std::vector<Chunk>& chunks);
// Validates contiguous chunk_index per author starting at 0.
std::vector<Chunk> read_chunks_jsonl(const std::string& path);
std::vector<Chunk> parse_chunks_jsonl(std::string_view text, std::string_view source_name);

}  // namespace persona::textprep
