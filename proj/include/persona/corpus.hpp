#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "persona/traits.hpp"

namespace persona {

inline constexpr std::size_t kPsychoFeatureCount = 84;

struct Essay {
  std::string author_id;
  std::string text;
  std::array<bool, kTraitCount> labels{};

  bool label(Trait t) const { return labels[trait_index(t)]; }
  friend bool operator==(const Essay&, const Essay&) = default;
};

struct PsychoFeatures {
  std::string author_id;
  std::array<double, kPsychoFeatureCount> values{};
};

struct LabelCounts {
  std::size_t positive = 0;
  std::size_t negative = 0;
  std::size_t total() const { return positive + negative; }
  double majority_rate() const;
};

class Corpus {
 public:
  Corpus() = default;
  // Validates non-empty, unique ids and non-empty text.
  explicit Corpus(std::vector<Essay> essays);

  const std::vector<Essay>& essays() const noexcept { return essays_; }
  std::size_t size() const noexcept { return essays_.size(); }
  bool has_features() const noexcept { return !features_.empty(); }

  const Essay* find(const std::string& author_id) const;
  // nullptr when no feature table has been attached.
  const PsychoFeatures* features_for(const std::string& author_id) const;

  // Attaches a feature table. Every essay must have a row; rows without an
  // essay are rejected unless allow_orphans is set.
  void attach_features(std::vector<PsychoFeatures> rows, bool allow_orphans = false);

 private:
  std::vector<Essay> essays_;
  std::map<std::string, std::size_t> index_;
  std::map<std::string, PsychoFeatures> features_;
};

// Reads the essays CSV (#AUTHID, TEXT, cEXT, cNEU, cAGR, cCON, cOPN).
// Label cells are y/n, case-insensitive. With require_labels=false the label
// columns may be absent entirely (prediction input); labels are then false.
Corpus load_essays(const std::string& path, bool require_labels = true);
Corpus parse_essays(std::string_view csv_text, std::string_view source_name,
                    bool require_labels = true);

// First column is the author id, followed by exactly 84 numeric columns.
std::vector<PsychoFeatures> read_psycho_features(const std::string& path);
std::vector<PsychoFeatures> parse_psycho_features(std::string_view csv_text,
                                                  std::string_view source_name);
void load_psycho_features(const std::string& path, Corpus& corpus, bool allow_orphans = false);

std::string essays_to_csv(const Corpus& corpus);
void write_essays_csv(const std::string& path, const Corpus& corpus);

LabelCounts label_distribution(const Corpus& corpus, Trait trait);
// Throws UsageError for an unknown trait name.
LabelCounts label_distribution(const Corpus& corpus, std::string_view trait_name);

}  // namespace persona
