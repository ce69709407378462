#include "persona/textprep.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

namespace persona::textprep {

namespace {

#include "contractions_data.inc"  // defines kBuiltinContractionTable

bool is_kept(unsigned char c) {
  if (c >= 0x80) return false;
  return std::isalnum(c) != 0 || c == '\'' || c == '"' || c == '!' || c == '.' || c == '?';
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && s[i] == ' ') ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ') ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

// A sentence (or a slice of one) with each source token's expansion.
struct Piece {
  std::vector<std::vector<std::string>> expanded;  // one entry per source token
  std::size_t expanded_size() const {
    std::size_t n = 0;
    for (const auto& e : expanded) n += e.size();
    return n;
  }
};

using PreChunk = std::vector<Sentence>;

std::vector<PreChunk> pack_sentences(const std::vector<Sentence>& sentences, std::size_t limit) {
  std::vector<PreChunk> chunks;
  PreChunk cur;
  std::size_t cur_n = 0;
  auto flush = [&] {
    if (!cur.empty()) chunks.push_back(std::move(cur));
    cur.clear();
    cur_n = 0;
  };
  for (const Sentence& s : sentences) {
    if (s.size() <= limit) {
      if (cur_n + s.size() > limit) flush();
      cur.push_back(s);
      cur_n += s.size();
      continue;
    }
    // Oversized sentence: hard-split at the limit, remainder keeps packing.
    flush();
    std::size_t off = 0;
    while (s.size() - off > limit) {
      chunks.push_back({Sentence(s.begin() + off, s.begin() + off + limit)});
      off += limit;
    }
    cur.emplace_back(s.begin() + off, s.end());
    cur_n = s.size() - off;
  }
  flush();
  return chunks;
}

std::vector<PreChunk> pack_window(const std::vector<Sentence>& sentences, std::size_t limit) {
  std::vector<PreChunk> chunks;
  PreChunk cur;
  std::size_t cur_n = 0;
  for (const Sentence& s : sentences) {
    std::size_t off = 0;
    while (off < s.size()) {
      const std::size_t take = std::min(limit - cur_n, s.size() - off);
      cur.emplace_back(s.begin() + off, s.begin() + off + take);
      cur_n += take;
      off += take;
      if (cur_n == limit) {
        chunks.push_back(std::move(cur));
        cur.clear();
        cur_n = 0;
      }
    }
  }
  if (!cur.empty()) chunks.push_back(std::move(cur));
  return chunks;
}

Sentence flatten(const Piece& p) {
  Sentence out;
  for (const auto& e : p.expanded) out.insert(out.end(), e.begin(), e.end());
  return out;
}

// Greedy repacking of expanded pieces so that no group exceeds cap tokens.
std::vector<std::vector<Piece>> resplit(const std::vector<Piece>& pieces, std::size_t cap) {
  std::vector<std::vector<Piece>> groups;
  std::vector<Piece> cur;
  std::size_t cur_n = 0;
  auto flush = [&] {
    if (!cur.empty()) groups.push_back(std::move(cur));
    cur.clear();
    cur_n = 0;
  };
  for (const Piece& p : pieces) {
    const std::size_t n = p.expanded_size();
    if (n <= cap) {
      if (cur_n + n > cap) flush();
      cur.push_back(p);
      cur_n += n;
      continue;
    }
    flush();
    Piece part;
    std::size_t part_n = 0;
    for (const auto& tok : p.expanded) {
      if (part_n + tok.size() > cap) {
        groups.push_back({std::move(part)});
        part = Piece{};
        part_n = 0;
      }
      part.expanded.push_back(tok);
      part_n += tok.size();
    }
    cur.push_back(std::move(part));
    cur_n = part_n;
  }
  flush();
  return groups;
}

}  // namespace

void ChunkPlan::validate() const {
  if (max_pre_expansion_tokens == 0) throw UsageError("chunk plan: max_pre_expansion_tokens must be > 0");
  if (max_post_expansion_tokens < max_pre_expansion_tokens) {
    throw UsageError("chunk plan: post-expansion cap must be >= pre-expansion limit");
  }
  if (max_post_expansion_tokens > hard_token_cap) {
    throw UsageError("chunk plan: post-expansion cap exceeds the hard token cap of " +
                     std::to_string(hard_token_cap));
  }
  if (max_post_expansion_tokens < 2) {
    // a single two-token expansion must always fit
    throw UsageError("chunk plan: post-expansion cap must be >= 2");
  }
}

PackMode parse_pack_mode(std::string_view s) {
  if (s == "sentence") return PackMode::kSentence;
  if (s == "window") return PackMode::kWindow;
  throw UsageError("unknown pack mode '" + std::string(s) + "' (valid: sentence, window)");
}

std::string_view pack_mode_name(PackMode m) { return m == PackMode::kSentence ? "sentence" : "window"; }

std::string clean_text(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  for (char ch : raw) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_kept(c)) {
      if (pending_space && !out.empty()) out.push_back(' ');
      pending_space = false;
      out.push_back(ch);
    } else {
      pending_space = true;
    }
  }
  return out;
}

std::vector<Sentence> split_sentences(std::string_view cleaned) {
  std::vector<Sentence> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= cleaned.size(); ++i) {
    if (i == cleaned.size() || cleaned[i] == '.' || cleaned[i] == '?') {
      auto tokens = split_ws(cleaned.substr(start, i - start));
      if (!tokens.empty()) out.push_back(std::move(tokens));
      start = i + 1;
    }
  }
  return out;
}

const ContractionTable& ContractionTable::builtin() {
  static const ContractionTable table = parse(kBuiltinContractionTable);
  return table;
}

ContractionTable ContractionTable::parse(std::string_view tsv) {
  ContractionTable t;
  std::istringstream in{std::string(tsv)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (t.version_.empty()) {
        if (auto pos = line.find("version"); pos != std::string::npos) {
          t.version_ = line.substr(pos + 7);
          t.version_.erase(0, t.version_.find_first_not_of(' '));
        }
      }
      continue;
    }
    std::vector<std::string> cols;
    std::istringstream ls(line);
    std::string col;
    while (std::getline(ls, col, '\t')) cols.push_back(col);
    auto bad = [&] {
      return IngestError("contraction table line " + std::to_string(lineno) + ": malformed entry");
    };
    if (cols.empty()) throw bad();
    if (cols[0] == "stem_s") {
      if (cols.size() != 2) throw bad();
      t.s_stems_.push_back(to_lower(cols[1]));
    } else if (cols[0] == "whole" || cols[0] == "suffix") {
      if (cols.size() != 3 || cols[1].empty()) throw bad();
      Rule r{to_lower(cols[1]), split_ws(cols[2])};
      if (r.replacement.empty() || r.replacement.size() > 2) throw bad();
      (cols[0] == "whole" ? t.whole_ : t.suffix_).push_back(std::move(r));
    } else {
      throw bad();
    }
  }
  return t;
}

std::vector<std::string> ContractionTable::expand(std::string_view token) const {
  // Quotes and exclamation marks stay attached to the outer tokens.
  std::size_t b = 0;
  while (b < token.size() && token[b] == '"') ++b;
  std::size_t e = token.size();
  while (e > b && (token[e - 1] == '"' || token[e - 1] == '!')) --e;
  const std::string_view prefix = token.substr(0, b);
  const std::string_view core = token.substr(b, e - b);
  const std::string_view trailer = token.substr(e);
  if (core.empty()) return {std::string(token)};

  const std::string lower = to_lower(core);
  std::vector<std::string> out;

  for (const Rule& r : whole_) {
    if (lower == r.pattern) {
      out = r.replacement;
      if (std::isupper(static_cast<unsigned char>(core[0]))) {
        out[0][0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0][0])));
      }
      break;
    }
  }
  if (out.empty()) {
    for (const Rule& r : suffix_) {
      if (lower.size() > r.pattern.size() && lower.ends_with(r.pattern)) {
        out.emplace_back(core.substr(0, core.size() - r.pattern.size()));
        out.insert(out.end(), r.replacement.begin(), r.replacement.end());
        break;
      }
    }
  }
  if (out.empty() && lower.size() > 2 && lower.ends_with("'s")) {
    const std::string stem = lower.substr(0, lower.size() - 2);
    if (std::find(s_stems_.begin(), s_stems_.end(), stem) != s_stems_.end()) {
      out = {std::string(core.substr(0, core.size() - 2)), "is"};
    }
  }
  if (out.empty()) return {std::string(token)};
  out.front().insert(0, prefix);
  out.back().append(trailer);
  return out;
}

Sentence expand_contractions(const Sentence& sentence, const ContractionTable& table) {
  Sentence out;
  out.reserve(sentence.size());
  for (const auto& tok : sentence) {
    auto expanded = table.expand(tok);
    out.insert(out.end(), std::make_move_iterator(expanded.begin()),
               std::make_move_iterator(expanded.end()));
  }
  return out;
}

std::vector<Chunk> chunk_essay(const Essay& essay, const ChunkPlan& plan, const ContractionTable& table) {
  plan.validate();
  const auto sentences = split_sentences(clean_text(essay.text));
  if (sentences.empty()) throw EmptyEssayError(essay.author_id);

  const auto pre_chunks = plan.pack == PackMode::kSentence
                              ? pack_sentences(sentences, plan.max_pre_expansion_tokens)
                              : pack_window(sentences, plan.max_pre_expansion_tokens);

  std::vector<Chunk> chunks;
  auto emit = [&](const std::vector<Piece>& pieces) {
    Chunk c;
    c.author_id = essay.author_id;
    c.chunk_index = chunks.size();
    for (const Piece& p : pieces) {
      c.pre_expansion_tokens += p.expanded.size();
      c.sentences.push_back(flatten(p));
      c.token_count += c.sentences.back().size();
    }
    chunks.push_back(std::move(c));
  };

  for (const PreChunk& pre : pre_chunks) {
    std::vector<Piece> pieces;
    std::size_t total = 0;
    for (const Sentence& s : pre) {
      Piece p;
      for (const auto& tok : s) p.expanded.push_back(table.expand(tok));
      total += p.expanded_size();
      pieces.push_back(std::move(p));
    }
    if (total <= plan.max_post_expansion_tokens) {
      emit(pieces);
    } else {
      for (const auto& group : resplit(pieces, plan.max_post_expansion_tokens)) emit(group);
    }
  }
  return chunks;
}

std::string chunk_to_json_line(const Chunk& chunk) {
  nlohmann::json j;
  j["author_id"] = chunk.author_id;
  j["chunk_index"] = chunk.chunk_index;
  j["sentences"] = chunk.sentences;
  return j.dump();
}

void write_chunks_jsonl(const std::string& path, const std::vector<Chunk>& chunks) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestError("cannot write chunks file '" + path + "'");
  for (const Chunk& c : chunks) out << chunk_to_json_line(c) << '\n';
  if (!out) throw IngestError("write failure on '" + path + "'");
}

std::vector<Chunk> parse_chunks_jsonl(std::string_view text, std::string_view source_name) {
  std::vector<Chunk> chunks;
  std::map<std::string, std::set<std::size_t>> indices;
  std::size_t lineno = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    const std::string where = std::string(source_name) + ":" + std::to_string(lineno);
    Chunk c;
    try {
      const auto j = nlohmann::json::parse(line);
      c.author_id = j.at("author_id").get<std::string>();
      const auto idx = j.at("chunk_index").get<long long>();
      if (idx < 0) throw IngestError(where + ": negative chunk_index");
      c.chunk_index = static_cast<std::size_t>(idx);
      c.sentences = j.at("sentences").get<std::vector<Sentence>>();
    } catch (const nlohmann::json::exception& ex) {
      throw IngestError(where + ": " + ex.what());
    }
    if (c.author_id.empty()) throw IngestError(where + ": empty author_id");
    for (const auto& s : c.sentences) {
      for (const auto& tok : s) {
        if (tok.empty() || tok.find_first_of(" \t\r\n") != std::string::npos) {
          throw IngestError(where + ": token '" + tok + "' is empty or contains whitespace");
        }
      }
      c.token_count += s.size();
    }
    if (!indices[c.author_id].insert(c.chunk_index).second) {
      throw IngestError(where + ": duplicate chunk (" + c.author_id + ", " +
                        std::to_string(c.chunk_index) + ")");
    }
    chunks.push_back(std::move(c));
  }
  for (const auto& [id, set] : indices) {
    if (*set.rbegin() + 1 != set.size()) {
      throw IngestError(std::string(source_name) + ": chunk indices for '" + id +
                        "' are not contiguous from 0");
    }
  }
  return chunks;
}

std::vector<Chunk> read_chunks_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open chunks file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_chunks_jsonl(buf.str(), path);
}

}  // namespace persona::textprep
