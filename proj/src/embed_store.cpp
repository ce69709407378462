#include "persona/embed_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <set>

#include "persona/error.hpp"

namespace persona::embed {

namespace {

class ByteSink {
 public:
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f32s(std::span<const float> vs) {
    for (float f : vs) u32(std::bit_cast<std::uint32_t>(f));
  }
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  const std::vector<char>& data() const { return buf_; }
  void clear() { buf_.clear(); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  std::vector<char> buf_;
};

class ByteSource {
 public:
  ByteSource(std::span<const std::byte> bytes, std::string_view source) : bytes_(bytes), source_(source) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void f32s(std::vector<float>& out, std::size_t n) {
    need(n * 4);
    out.resize(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = std::bit_cast<float>(static_cast<std::uint32_t>(get(4)));
  }
  void need(std::size_t n) const {
    if (remaining() < n) {
      throw IntegrityError(std::string(source_) + ": truncated file at byte offset " + std::to_string(pos_) +
                           " (needed " + std::to_string(n) + " more bytes, " +
                           std::to_string(remaining()) + " available)");
    }
  }

 private:
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(std::to_integer<unsigned>(bytes_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::span<const std::byte> bytes_;
  std::string_view source_;
  std::size_t pos_ = 0;
};

void encode_header(ByteSink& sink, const FileHeader& h) {
  sink.bytes(std::string_view(kMagic, 4));
  sink.u16(h.version);
  sink.u16(h.n_layers);
  sink.u32(h.dim);
  sink.u64(h.record_count);
  sink.u32(h.flags);
}

void encode_record(ByteSink& sink, const ChunkEmbeddingSet& rec, bool per_sentence) {
  sink.u16(static_cast<std::uint16_t>(rec.author_id.size()));
  sink.bytes(rec.author_id);
  sink.u32(rec.chunk_index);
  sink.u32(rec.n_tokens_pooled);
  sink.f32s(rec.layers);
  if (per_sentence) {
    sink.u16(static_cast<std::uint16_t>(rec.per_sentence->size()));
    for (const auto& s : *rec.per_sentence) {
      sink.u32(s.n_tokens);
      sink.f32s(s.values);
    }
  }
}

bool all_finite(std::span<const float> vs) {
  return std::all_of(vs.begin(), vs.end(), [](float f) { return std::isfinite(f); });
}

}  // namespace

std::string format_key(const Key& k) { return "(" + k.first + ", " + std::to_string(k.second) + ")"; }

void validate_record(const ChunkEmbeddingSet& rec) {
  const std::string key = format_key({rec.author_id, rec.chunk_index});
  if (rec.author_id.empty()) throw IntegrityError("embedding record with empty author_id");
  if (rec.author_id.size() > 0xFFFF) throw IntegrityError("author_id too long for record " + key);
  if (rec.n_layers == 0 || rec.dim == 0) throw IntegrityError("record " + key + " has an empty shape");
  const std::size_t cells = static_cast<std::size_t>(rec.n_layers) * rec.dim;
  if (rec.layers.size() != cells) {
    throw IntegrityError("record " + key + " holds " + std::to_string(rec.layers.size()) +
                         " values, shape requires " + std::to_string(cells));
  }
  if (!all_finite(rec.layers)) throw IntegrityError("record " + key + " contains a non-finite value");
  if (!rec.per_sentence) return;

  const auto& sentences = *rec.per_sentence;
  if (sentences.empty() || sentences.size() > 0xFFFF) {
    throw IntegrityError("record " + key + " has an invalid per-sentence block");
  }
  double total_tokens = 0.0;
  for (const auto& s : sentences) {
    if (s.values.size() != cells) throw IntegrityError("record " + key + " has a mis-shaped sentence matrix");
    if (!all_finite(s.values)) throw IntegrityError("record " + key + " sentence block contains a non-finite value");
    total_tokens += s.n_tokens;
  }
  if (total_tokens <= 0.0) throw IntegrityError("record " + key + " sentence token counts sum to zero");
  double scale = 0.0;
  for (float v : rec.layers) scale = std::max(scale, static_cast<double>(std::fabs(v)));
  double worst = 0.0;
  for (std::size_t c = 0; c < cells; ++c) {
    double acc = 0.0;
    for (const auto& s : sentences) acc += static_cast<double>(s.n_tokens) * s.values[c];
    worst = std::max(worst, std::fabs(acc / total_tokens - rec.layers[c]));
  }
  if (worst > 1e-5 * std::max(scale, 1e-30)) {
    throw IntegrityError("record " + key + ": token-weighted sentence mean deviates from the chunk matrix by " +
                         std::to_string(worst));
  }
}

EmbeddingWriter::EmbeddingWriter(const std::string& path, std::uint16_t n_layers, std::uint32_t dim,
                                 bool per_sentence)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
  if (!out_) throw IntegrityError("cannot open '" + path + "' for writing");
  header_.n_layers = n_layers;
  header_.dim = dim;
  header_.flags = per_sentence ? kFlagPerSentence : 0u;
  ByteSink sink;
  encode_header(sink, header_);
  out_.write(sink.data().data(), static_cast<std::streamsize>(sink.data().size()));
}

EmbeddingWriter::~EmbeddingWriter() {
  if (!finished_) {
    try {
      finish();
    } catch (...) {
    }
  }
}

void EmbeddingWriter::append(const ChunkEmbeddingSet& rec) {
  if (finished_) throw IntegrityError("append after finish on '" + path_ + "'");
  if (rec.n_layers != header_.n_layers || rec.dim != header_.dim) {
    throw IntegrityError("dimension mismatch: record " + format_key({rec.author_id, rec.chunk_index}) + " is " +
                         std::to_string(rec.n_layers) + "x" + std::to_string(rec.dim) + ", file is " +
                         std::to_string(header_.n_layers) + "x" + std::to_string(header_.dim));
  }
  if (header_.per_sentence() != rec.per_sentence.has_value()) {
    throw IntegrityError("record " + format_key({rec.author_id, rec.chunk_index}) +
                         (header_.per_sentence() ? " lacks" : " carries") + " a per-sentence block");
  }
  validate_record(rec);
  ByteSink sink;
  encode_record(sink, rec, header_.per_sentence());
  out_.write(sink.data().data(), static_cast<std::streamsize>(sink.data().size()));
  if (!out_) throw IntegrityError("write failure on '" + path_ + "'");
  ++header_.record_count;
}

std::uint64_t EmbeddingWriter::finish() {
  if (finished_) return header_.record_count;
  finished_ = true;
  ByteSink sink;
  sink.u64(header_.record_count);
  out_.seekp(12);
  out_.write(sink.data().data(), 8);
  out_.close();
  if (!out_) throw IntegrityError("write failure on '" + path_ + "'");
  return header_.record_count;
}

std::uint64_t write_embeddings(const std::string& path, std::span<const ChunkEmbeddingSet> records,
                               std::uint16_t empty_n_layers, std::uint32_t empty_dim) {
  const std::uint16_t layers = records.empty() ? empty_n_layers : records.front().n_layers;
  const std::uint32_t dim = records.empty() ? empty_dim : records.front().dim;
  const bool per_sentence = !records.empty() && records.front().per_sentence.has_value();
  EmbeddingWriter writer(path, layers, dim, per_sentence);
  for (const auto& r : records) writer.append(r);
  return writer.finish();
}

EmbeddingCollection::EmbeddingCollection(FileHeader header, std::vector<ChunkEmbeddingSet> records)
    : header_(header), records_(std::move(records)) {
  for (std::size_t i = 0; i < records_.size(); ++i) {
    Key k{records_[i].author_id, records_[i].chunk_index};
    if (!index_.emplace(k, i).second) throw IntegrityError("duplicate embedding record " + format_key(k));
  }
}

const ChunkEmbeddingSet* EmbeddingCollection::find(const std::string& author_id, std::uint32_t chunk_index) const {
  auto it = index_.find(Key{author_id, chunk_index});
  return it == index_.end() ? nullptr : &records_[it->second];
}

std::vector<Key> EmbeddingCollection::keys() const {
  std::vector<Key> out;
  out.reserve(index_.size());
  for (const auto& [k, _] : index_) out.push_back(k);
  return out;
}

namespace {

FileHeader decode_header(ByteSource& src, std::string_view source) {
  src.need(kHeaderSize);
  const std::string magic = src.str(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) {
    throw IntegrityError(std::string(source) + ": bad magic (not a CEB1 file)");
  }
  FileHeader h;
  h.version = src.u16();
  h.n_layers = src.u16();
  h.dim = src.u32();
  h.record_count = src.u64();
  h.flags = src.u32();
  if (h.version != kFormatVersion) {
    throw IntegrityError(std::string(source) + ": unsupported CEB1 version " + std::to_string(h.version));
  }
  if ((h.flags & ~kFlagPerSentence) != 0) {
    throw IntegrityError(std::string(source) + ": unknown header flags " + std::to_string(h.flags));
  }
  if (h.record_count > 0 && (h.n_layers == 0 || h.dim == 0)) {
    throw IntegrityError(std::string(source) + ": header declares records with an empty shape");
  }
  return h;
}

}  // namespace

EmbeddingCollection parse_embeddings(std::span<const std::byte> bytes, std::string_view source) {
  ByteSource src(bytes, source);
  const FileHeader h = decode_header(src, source);
  const std::size_t cells = static_cast<std::size_t>(h.n_layers) * h.dim;
  std::vector<ChunkEmbeddingSet> records;
  std::set<Key> seen;
  for (std::uint64_t i = 0; i < h.record_count; ++i) {
    ChunkEmbeddingSet rec;
    rec.n_layers = h.n_layers;
    rec.dim = h.dim;
    rec.author_id = src.str(src.u16());
    rec.chunk_index = src.u32();
    rec.n_tokens_pooled = src.u32();
    src.f32s(rec.layers, cells);
    if (h.per_sentence()) {
      const std::uint16_t n = src.u16();
      std::vector<SentenceEmbedding> sentences(n);
      for (auto& s : sentences) {
        s.n_tokens = src.u32();
        src.f32s(s.values, cells);
      }
      rec.per_sentence = std::move(sentences);
    }
    Key key{rec.author_id, rec.chunk_index};
    try {
      validate_record(rec);
    } catch (const IntegrityError& e) {
      throw IntegrityError(std::string(source) + ": integrity failure in record #" + std::to_string(i) + ": " +
                           e.what());
    }
    if (!seen.insert(key).second) {
      throw IntegrityError(std::string(source) + ": duplicate record " + format_key(key));
    }
    records.push_back(std::move(rec));
  }
  if (src.remaining() != 0) {
    throw IntegrityError(std::string(source) + ": record count mismatch, header declares " +
                         std::to_string(h.record_count) + " records but " + std::to_string(src.remaining()) +
                         " bytes remain at offset " + std::to_string(src.offset()));
  }
  return EmbeddingCollection(h, std::move(records));
}

namespace {
std::vector<std::byte> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IntegrityError("cannot open embeddings file '" + path + "'");
  const auto size = static_cast<std::size_t>(in.tellg());
  std::vector<std::byte> buf(size);
  in.seekg(0);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(size));
  if (!in) throw IntegrityError("read failure on '" + path + "'");
  return buf;
}
}  // namespace

EmbeddingCollection read_embeddings(const std::string& path) {
  const auto bytes = slurp(path);
  return parse_embeddings(bytes, path);
}

FileHeader read_header(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IntegrityError("cannot open embeddings file '" + path + "'");
  std::vector<std::byte> buf(kHeaderSize);
  in.read(reinterpret_cast<char*>(buf.data()), kHeaderSize);
  buf.resize(static_cast<std::size_t>(in.gcount()));
  ByteSource src(buf, path);
  return decode_header(src, path);
}

CoverageReport coverage_check(const EmbeddingCollection& embeddings, std::span<const Key> chunk_keys) {
  CoverageReport report;
  std::set<Key> chunks(chunk_keys.begin(), chunk_keys.end());
  for (const Key& k : chunks) {
    if (!embeddings.find(k.first, k.second)) report.missing.push_back(k);
  }
  for (const Key& k : embeddings.keys()) {
    if (!chunks.count(k)) report.orphans.push_back(k);
  }
  return report;
}

}  // namespace persona::embed
