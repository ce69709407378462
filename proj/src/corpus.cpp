#include "persona/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "persona/csv.hpp"
#include "persona/error.hpp"

namespace persona {

namespace {

std::string row_context(std::string_view source, std::size_t line) {
  return std::string(source) + ": row at line " + std::to_string(line);
}

bool parse_label(std::string_view cell, bool& out) {
  if (cell.size() != 1) return false;
  const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(cell[0])));
  if (c == 'y') {
    out = true;
    return true;
  }
  if (c == 'n') {
    out = false;
    return true;
  }
  return false;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

bool parse_double(std::string_view cell, double& out) {
  const std::string t = trim(cell);
  if (t.empty()) return false;
  const char* first = t.data();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), out);
  return ec == std::errc() && ptr == t.data() + t.size();
}

}  // namespace

double LabelCounts::majority_rate() const {
  if (total() == 0) return 0.0;
  return static_cast<double>(std::max(positive, negative)) / static_cast<double>(total());
}

Corpus::Corpus(std::vector<Essay> essays) : essays_(std::move(essays)) {
  for (std::size_t i = 0; i < essays_.size(); ++i) {
    const Essay& e = essays_[i];
    if (e.author_id.empty()) throw IngestError("essay #" + std::to_string(i) + " has an empty author id");
    if (e.text.empty()) throw IngestError("essay '" + e.author_id + "' has empty text");
    if (!index_.emplace(e.author_id, i).second) {
      throw IngestError("duplicate author id '" + e.author_id + "'");
    }
  }
}

const Essay* Corpus::find(const std::string& author_id) const {
  auto it = index_.find(author_id);
  return it == index_.end() ? nullptr : &essays_[it->second];
}

const PsychoFeatures* Corpus::features_for(const std::string& author_id) const {
  auto it = features_.find(author_id);
  return it == features_.end() ? nullptr : &it->second;
}

void Corpus::attach_features(std::vector<PsychoFeatures> rows, bool allow_orphans) {
  std::map<std::string, PsychoFeatures> table;
  std::vector<std::string> orphans;
  for (auto& row : rows) {
    if (!index_.count(row.author_id)) orphans.push_back(row.author_id);
    const std::string id = row.author_id;
    if (table.count(id)) throw IngestError("duplicate feature row for author id '" + id + "'");
    table.emplace(id, std::move(row));
  }
  std::vector<std::string> missing;
  for (const Essay& e : essays_) {
    if (!table.count(e.author_id)) missing.push_back(e.author_id);
  }
  auto join = [](const std::vector<std::string>& ids) {
    std::string s;
    for (std::size_t i = 0; i < ids.size(); ++i) s += (i ? ", " : "") + ids[i];
    return s;
  };
  if (!missing.empty()) {
    throw IngestError("feature table lacks rows for " + std::to_string(missing.size()) +
                      " essay(s): " + join(missing));
  }
  if (!orphans.empty() && !allow_orphans) {
    throw IngestError("feature table has " + std::to_string(orphans.size()) +
                      " row(s) without an essay: " + join(orphans));
  }
  for (const auto& id : orphans) table.erase(id);
  features_ = std::move(table);
}

Corpus parse_essays(std::string_view csv_text, std::string_view source_name, bool require_labels) {
  const auto records = csv::parse(csv_text, source_name);
  if (records.empty()) throw IngestError(std::string(source_name) + ": missing header row");

  const auto& header = records.front().fields;
  auto column = [&](std::string_view name) -> std::ptrdiff_t {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (trim(header[i]) == name) return static_cast<std::ptrdiff_t>(i);
    }
    return -1;
  };
  const auto id_col = column("#AUTHID");
  const auto text_col = column("TEXT");
  if (id_col < 0) throw IngestError(std::string(source_name) + ": missing column #AUTHID");
  if (text_col < 0) throw IngestError(std::string(source_name) + ": missing column TEXT");

  std::array<std::ptrdiff_t, kTraitCount> label_cols{};
  bool any_label = false;
  for (Trait t : kAllTraits) {
    const auto col = column("c" + std::string(trait_name(t)));
    label_cols[trait_index(t)] = col;
    any_label |= col >= 0;
  }
  if (require_labels || any_label) {
    for (Trait t : kAllTraits) {
      if (label_cols[trait_index(t)] < 0) {
        throw IngestError(std::string(source_name) + ": missing column c" + std::string(trait_name(t)));
      }
    }
  }

  std::vector<Essay> essays;
  std::map<std::string, std::size_t> seen;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.fields.size() != header.size()) {
      throw IngestError(row_context(source_name, rec.line) + ": expected " +
                        std::to_string(header.size()) + " fields, found " +
                        std::to_string(rec.fields.size()));
    }
    Essay e;
    e.author_id = trim(rec.fields[id_col]);
    e.text = rec.fields[text_col];
    if (e.author_id.empty()) throw IngestError(row_context(source_name, rec.line) + ": empty #AUTHID");
    if (e.text.empty()) throw IngestError(row_context(source_name, rec.line) + ": empty TEXT");
    if (auto [it, fresh] = seen.emplace(e.author_id, rec.line); !fresh) {
      throw IngestError(row_context(source_name, rec.line) + ": duplicate author id '" + e.author_id +
                        "' (first seen at line " + std::to_string(it->second) + ")");
    }
    if (any_label) {
      for (Trait t : kAllTraits) {
        const auto& cell = rec.fields[label_cols[trait_index(t)]];
        bool value = false;
        if (!parse_label(trim(cell), value)) {
          throw IngestError(row_context(source_name, rec.line) + ": label c" +
                            std::string(trait_name(t)) + " must be y or n, got '" + cell + "'");
        }
        e.labels[trait_index(t)] = value;
      }
    }
    essays.push_back(std::move(e));
  }
  return Corpus(std::move(essays));
}

Corpus load_essays(const std::string& path, bool require_labels) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open essays file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_essays(buf.str(), path, require_labels);
}

std::vector<PsychoFeatures> parse_psycho_features(std::string_view csv_text,
                                                  std::string_view source_name) {
  const auto records = csv::parse(csv_text, source_name);
  if (records.empty()) throw IngestError(std::string(source_name) + ": missing header row");
  std::vector<PsychoFeatures> rows;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    const std::size_t numeric = rec.fields.empty() ? 0 : rec.fields.size() - 1;
    if (numeric != kPsychoFeatureCount) {
      throw IngestError(row_context(source_name, rec.line) + ": expected " +
                        std::to_string(kPsychoFeatureCount) + " feature values, found " +
                        std::to_string(numeric));
    }
    PsychoFeatures pf;
    pf.author_id = trim(rec.fields[0]);
    if (pf.author_id.empty()) throw IngestError(row_context(source_name, rec.line) + ": empty author id");
    for (std::size_t k = 0; k < kPsychoFeatureCount; ++k) {
      double v = 0.0;
      if (!parse_double(rec.fields[k + 1], v)) {
        throw IngestError(row_context(source_name, rec.line) + ": feature " + std::to_string(k) +
                          " is not a number: '" + rec.fields[k + 1] + "'");
      }
      if (!std::isfinite(v)) {
        throw IngestError(row_context(source_name, rec.line) + ": feature " + std::to_string(k) +
                          " is not finite");
      }
      pf.values[k] = v;
    }
    rows.push_back(std::move(pf));
  }
  return rows;
}

std::vector<PsychoFeatures> read_psycho_features(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open feature file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_psycho_features(buf.str(), path);
}

void load_psycho_features(const std::string& path, Corpus& corpus, bool allow_orphans) {
  corpus.attach_features(read_psycho_features(path), allow_orphans);
}

std::string essays_to_csv(const Corpus& corpus) {
  std::string out = csv::format_row({"#AUTHID", "TEXT", "cEXT", "cNEU", "cAGR", "cCON", "cOPN"});
  for (const Essay& e : corpus.essays()) {
    std::vector<std::string> row{e.author_id, e.text};
    for (bool l : e.labels) row.emplace_back(l ? "y" : "n");
    out += csv::format_row(row);
  }
  return out;
}

void write_essays_csv(const std::string& path, const Corpus& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestError("cannot write '" + path + "'");
  out << essays_to_csv(corpus);
}

LabelCounts label_distribution(const Corpus& corpus, Trait trait) {
  LabelCounts c;
  for (const Essay& e : corpus.essays()) (e.label(trait) ? c.positive : c.negative)++;
  return c;
}

LabelCounts label_distribution(const Corpus& corpus, std::string_view name) {
  return label_distribution(corpus, trait_from_string(name));
}

}  // namespace persona
