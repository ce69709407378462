#pragma once

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace persona::embed {

// CEB1 layout (all integers and floats little-endian):
//   header:  "CEB1" | u16 version | u16 n_layers | u32 dim | u64 record_count | u32 flags
//   record:  u16 id_len | id bytes (UTF-8) | u32 chunk_index | u32 n_tokens_pooled
//            | n_layers*dim f32, row-major (layer-major)
//            [flags bit0] u16 n_sentences, then per sentence: u32 n_tokens | n_layers*dim f32
inline constexpr char kMagic[4] = {'C', 'E', 'B', '1'};
inline constexpr std::uint16_t kFormatVersion = 1;
inline constexpr std::size_t kHeaderSize = 24;
inline constexpr std::uint32_t kFlagPerSentence = 1u;

struct SentenceEmbedding {
  std::uint32_t n_tokens = 0;
  std::vector<float> values;  // n_layers * dim
  friend bool operator==(const SentenceEmbedding&, const SentenceEmbedding&) = default;
};

struct ChunkEmbeddingSet {
  std::string author_id;
  std::uint32_t chunk_index = 0;
  std::uint32_t n_tokens_pooled = 0;
  std::uint16_t n_layers = 0;
  std::uint32_t dim = 0;
  std::vector<float> layers;  // n_layers * dim, row-major
  std::optional<std::vector<SentenceEmbedding>> per_sentence;

  std::span<const float> layer(std::size_t l) const { return {layers.data() + l * dim, dim}; }
  friend bool operator==(const ChunkEmbeddingSet&, const ChunkEmbeddingSet&) = default;
};

struct FileHeader {
  std::uint16_t version = kFormatVersion;
  std::uint16_t n_layers = 0;
  std::uint32_t dim = 0;
  std::uint64_t record_count = 0;
  std::uint32_t flags = 0;
  bool per_sentence() const { return (flags & kFlagPerSentence) != 0; }
};

using Key = std::pair<std::string, std::uint32_t>;

// Throws IntegrityError when values are non-finite, the shape is inconsistent,
// or the token-weighted per-sentence mean deviates from the chunk matrix by more
// than 1e-5 relative to the matrix's largest magnitude.
void validate_record(const ChunkEmbeddingSet& rec);

// Streaming writer; the header's record_count is patched by finish().
class EmbeddingWriter {
 public:
  EmbeddingWriter(const std::string& path, std::uint16_t n_layers, std::uint32_t dim, bool per_sentence);
  ~EmbeddingWriter();
  EmbeddingWriter(const EmbeddingWriter&) = delete;
  EmbeddingWriter& operator=(const EmbeddingWriter&) = delete;

  void append(const ChunkEmbeddingSet& rec);
  std::uint64_t finish();

 private:
  std::string path_;
  std::ofstream out_;
  FileHeader header_;
  bool finished_ = false;
};

// Writes records; shape is taken from the first record (or the given
// defaults for an empty set). Per-sentence blocks are written when every
// record carries them. Returns the number of records written.
std::uint64_t write_embeddings(const std::string& path, std::span<const ChunkEmbeddingSet> records,
                               std::uint16_t empty_n_layers = 0, std::uint32_t empty_dim = 0);

class EmbeddingCollection {
 public:
  EmbeddingCollection() = default;
  EmbeddingCollection(FileHeader header, std::vector<ChunkEmbeddingSet> records);

  const FileHeader& header() const noexcept { return header_; }
  const std::vector<ChunkEmbeddingSet>& records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }
  const ChunkEmbeddingSet* find(const std::string& author_id, std::uint32_t chunk_index) const;
  std::vector<Key> keys() const;

 private:
  FileHeader header_;
  std::vector<ChunkEmbeddingSet> records_;
  std::map<Key, std::size_t> index_;
};

// Reads and fully validates a CEB1 file.
EmbeddingCollection read_embeddings(const std::string& path);
EmbeddingCollection parse_embeddings(std::span<const std::byte> bytes, std::string_view source_name);
FileHeader read_header(const std::string& path);

struct CoverageReport {
  std::vector<Key> missing;  // chunk without an embedding record
  std::vector<Key> orphans;  // record without a chunk
  bool ok() const { return missing.empty() && orphans.empty(); }
};

CoverageReport coverage_check(const EmbeddingCollection& embeddings, std::span<const Key> chunk_keys);

std::string format_key(const Key& k);

}  // namespace persona::embed
