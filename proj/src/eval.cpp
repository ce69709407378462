#include "persona/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

#include "json.hpp"
#include "persona/error.hpp"
#include "persona/parallel.hpp"
#include "persona/rng.hpp"

namespace persona::eval {

using nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Folds

FoldPlan make_folds(const Corpus& corpus, Trait trait, std::size_t k, std::uint64_t seed) {
  const std::size_t n = corpus.size();
  if (k < 2) throw UsageError("k must be at least 2");
  if (k > n) throw UsageError("k = " + std::to_string(k) + " exceeds the number of essays (" + std::to_string(n) + ")");
  const LabelCounts counts = label_distribution(corpus, trait);
  if (counts.positive == 0 || counts.negative == 0) {
    throw UsageError("trait " + std::string(trait_name(trait)) + " has a single class; cannot stratify");
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng::CounterRng g(seed, 0x464F4C44u);
  rng::shuffle(order, g);

  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  std::size_t next = 0;
  for (bool positive : {true, false}) {
    for (std::size_t idx : order) {
      const Essay& e = corpus.essays()[idx];
      if (e.label(trait) != positive) continue;
      plan.assignments[e.author_id] = next % k;
      ++next;
    }
  }
  if (k == n) {
    plan.stratification_waived = true;
    plan.warnings.push_back("k equals the number of essays: leave-one-out, stratification check waived");
  } else if (!is_stratified(plan, corpus, trait)) {
    throw IntegrityError("fold plan for " + std::string(trait_name(trait)) + " violates the stratification bound");
  }
  return plan;
}

bool is_stratified(const FoldPlan& plan, const Corpus& corpus, Trait trait) {
  const LabelCounts counts = label_distribution(corpus, trait);
  if (counts.total() == 0) return true;
  const double rate = static_cast<double>(counts.positive) / static_cast<double>(counts.total());
  std::vector<std::size_t> size(plan.k, 0), pos(plan.k, 0);
  for (const Essay& e : corpus.essays()) {
    const std::size_t f = plan.fold_of(e.author_id);
    ++size[f];
    pos[f] += e.label(trait) ? 1 : 0;
  }
  for (std::size_t f = 0; f < plan.k; ++f) {
    if (std::fabs(static_cast<double>(pos[f]) - rate * static_cast<double>(size[f])) > 2.0) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Significance

SignificanceResult paired_t_test(std::span<const double> a, std::span<const double> b, std::string name_a,
                                 std::string name_b) {
  if (a.size() != b.size()) {
    throw UsageError("paired t-test: sample sizes differ (" + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + ")");
  }
  if (a.size() < 2) throw UsageError("paired t-test needs at least 2 pairs");
  const std::size_t k = a.size();
  SignificanceResult r;
  r.variant_a = std::move(name_a);
  r.variant_b = std::move(name_b);
  r.df = k - 1;

  std::vector<double> d(k);
  for (std::size_t i = 0; i < k; ++i) d[i] = a[i] - b[i];
  double mean = 0.0;
  for (double v : d) mean += v;
  mean /= static_cast<double>(k);
  double ss = 0.0;
  for (double v : d) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(k - 1));
  r.mean_difference = mean;

  const bool all_zero = std::all_of(d.begin(), d.end(), [](double v) { return v == 0.0; });
  if (all_zero) {
    r.t_statistic = 0.0;
    r.p_value = 1.0;
    return r;
  }
  if (sd <= 1e-12 * std::max(1.0, std::fabs(mean))) {
    r.degenerate = true;
    r.t_statistic = std::copysign(std::numeric_limits<double>::infinity(), mean);
    r.p_value = 0.0;
    return r;
  }
  r.t_statistic = mean / (sd / std::sqrt(static_cast<double>(k)));
  const boost::math::students_t dist(static_cast<double>(r.df));
  r.p_value = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.t_statistic))));
  return r;
}

// ---------------------------------------------------------------------------
// Variants

namespace {

Variant make_variant(std::string name, ClassifierKind kind, features::LayerSelector layers,
                     features::Pooling pooling, bool static_embeddings, std::string description) {
  Variant v;
  v.name = std::move(name);
  v.classifier = kind;
  v.pipeline.layers = layers;
  v.pipeline.pooling = pooling;
  v.static_embeddings = static_embeddings;
  v.description = std::move(description);
  return v;
}

constexpr std::size_t kLayerCount = 13;
constexpr std::size_t kLayerEleven = 11;

}  // namespace

Variant variant_by_name(std::string_view name) {
  using features::LayerSelector;
  using features::Pooling;
  if (name == "majority-baseline") {
    Variant v = make_variant("majority-baseline", ClassifierKind::kMajorityBaseline, LayerSelector::last_four(),
                             Pooling::kTokenMean, false, "predict the corpus-wide majority class");
    v.pipeline.psycho = false;
    return v;
  }
  if (name == "bb-svm") {
    return make_variant("bb-svm", ClassifierKind::kBaggedSvm, LayerSelector::last_four(), Pooling::kTokenMean, false,
                        "last four layers, token mean, psycholinguistic fusion, 10-bag SVM");
  }
  if (name == "m3") {
    return make_variant("m3", ClassifierKind::kSingleSvm, LayerSelector::single(kLayerEleven), Pooling::kTokenMean,
                        false, "layer 11, token mean, single SVM");
  }
  if (name == "m8") {
    return make_variant("m8", ClassifierKind::kBaggedSvm, LayerSelector::single(0), Pooling::kTokenMean, true,
                        "static word vectors, token mean, bagged SVM");
  }
  if (name == "m9") {
    return make_variant("m9", ClassifierKind::kBaggedSvm, LayerSelector::last_four(), Pooling::kSentenceMean, false,
                        "last four layers, sentence mean then chunk mean, bagged SVM");
  }
  if (name == "m13") {
    return make_variant("m13", ClassifierKind::kSingleSvm, LayerSelector::last_four(), Pooling::kTokenMean, false,
                        "last four layers, token mean, single SVM");
  }
  if (name == "m14") {
    return make_variant("m14", ClassifierKind::kBaggedSvm, LayerSelector::single(kLayerEleven), Pooling::kTokenMean,
                        false, "layer 11, token mean, bagged SVM");
  }
  if (name.starts_with("layer-")) {
    const std::string digits(name.substr(6));
    if (!digits.empty() && digits.size() <= 2 && std::all_of(digits.begin(), digits.end(), ::isdigit)) {
      const std::size_t layer = std::stoul(digits);
      if (layer < kLayerCount) {
        return make_variant("layer-" + digits, ClassifierKind::kBaggedSvm, LayerSelector::single(layer),
                            Pooling::kTokenMean, false, "single stored layer " + digits + ", bagged SVM");
      }
    }
  }
  if (name == "oracle-stub") {
    return make_variant("oracle-stub", ClassifierKind::kOracle, LayerSelector::last_four(), Pooling::kTokenMean,
                        false, "harness check: predicts the true label");
  }
  if (name == "anti-oracle-stub") {
    return make_variant("anti-oracle-stub", ClassifierKind::kAntiOracle, LayerSelector::last_four(),
                        Pooling::kTokenMean, false, "harness check: predicts the wrong label");
  }
  std::string valid;
  for (const auto& n : variant_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw UsageError("unknown variant '" + std::string(name) + "' (valid: " + valid + ")");
}

std::vector<std::string> variant_names() {
  std::vector<std::string> names = {"majority-baseline", "bb-svm", "m3", "m8", "m9", "m13", "m14"};
  for (std::size_t l = 0; l < kLayerCount; ++l) names.push_back("layer-" + std::to_string(l));
  names.push_back("oracle-stub");
  names.push_back("anti-oracle-stub");
  return names;
}

// ---------------------------------------------------------------------------
// Reports

const TraitResult* EvalReport::find(Trait t) const {
  for (const auto& r : per_trait) {
    if (r.trait == t) return &r;
  }
  return nullptr;
}

std::vector<double> EvalReport::fold_average_accuracies() const {
  if (per_trait.empty()) return {};
  std::vector<double> out(per_trait.front().fold_accuracies.size(), 0.0);
  for (const auto& r : per_trait) {
    for (std::size_t f = 0; f < out.size(); ++f) out[f] += r.fold_accuracies[f];
  }
  for (double& v : out) v /= static_cast<double>(per_trait.size());
  return out;
}

namespace {

std::string_view classifier_name(ClassifierKind k) {
  switch (k) {
    case ClassifierKind::kMajorityBaseline:
      return "majority_baseline";
    case ClassifierKind::kSingleSvm:
      return "single_svm";
    case ClassifierKind::kBaggedSvm:
      return "bagged_svm";
    case ClassifierKind::kOracle:
      return "oracle";
    case ClassifierKind::kAntiOracle:
      return "anti_oracle";
  }
  return "?";
}

bool uses_features(ClassifierKind k) { return k == ClassifierKind::kSingleSvm || k == ClassifierKind::kBaggedSvm; }

features::PipelineConfig effective_pipeline(const Variant& v, const EvalConfig& cfg) {
  features::PipelineConfig p = v.pipeline;
  if (cfg.psycho) p.psycho = *cfg.psycho;
  if (cfg.scaling) p.scaling = *cfg.scaling;
  return p;
}

}  // namespace

std::string describe_config(const Variant& v, const EvalConfig& cfg) {
  const auto p = effective_pipeline(v, cfg);
  ordered_json j;
  j["variant"] = v.name;
  j["classifier"] = classifier_name(v.classifier);
  j["static_embeddings"] = v.static_embeddings;
  j["pipeline"] = {{"layers", p.layers.to_string()},
                   {"pooling", features::pooling_name(p.pooling)},
                   {"psycho", p.psycho},
                   {"scaling", p.scaling}};
  j["svm"] = {{"kernel", cfg.svm.kernel.kind_name()},
              {"gamma", cfg.svm.kernel.gamma},
              {"C", cfg.svm.C},
              {"tol", cfg.svm.tol},
              {"max_iter", cfg.svm.max_iter}};
  j["bagging"] = {{"n_estimators", cfg.bagging.n_estimators},
                  {"master_seed", cfg.bagging.master_seed},
                  {"sample_fraction", cfg.bagging.sample_fraction}};
  j["k"] = cfg.k;
  j["seed"] = cfg.seed;
  auto traits = ordered_json::array();
  for (Trait t : cfg.traits) traits.push_back(trait_name(t));
  j["traits"] = traits;
  return j.dump();
}

std::string fingerprint(std::string_view canonical) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

EvalReport run_cv(const EvalData& data, const Variant& variant, const EvalConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  if (!data.corpus) throw UsageError("run_cv: no corpus");
  if (cfg.traits.empty()) throw UsageError("run_cv: no traits requested");
  const Corpus& corpus = *data.corpus;
  const auto pipeline = effective_pipeline(variant, cfg);

  EvalReport report;
  report.variant = variant.name;
  report.config_fingerprint = fingerprint(describe_config(variant, cfg));

  // Chunk vectors grouped per essay, in corpus order.
  std::vector<Matrix> essay_vectors(corpus.size());
  if (uses_features(variant.classifier)) {
    if (!data.chunks) throw UsageError("variant " + variant.name + " needs a chunks file");
    const embed::EmbeddingCollection* emb = variant.static_embeddings ? data.static_embeddings : data.embeddings;
    if (!emb) {
      throw UsageError("variant " + variant.name + " needs " +
                       (variant.static_embeddings ? "a static word-vector embeddings file" : "an embeddings file"));
    }
    pipeline.layers.check(emb->header().n_layers);
    if (pipeline.pooling == features::Pooling::kSentenceMean && !emb->header().per_sentence()) {
      throw UsageError("variant " + variant.name + " needs per-sentence embeddings");
    }
    if (pipeline.psycho && !corpus.has_features()) {
      throw UsageError("variant " + variant.name + " fuses psycholinguistic features but none are loaded");
    }

    std::map<std::string, std::vector<std::uint32_t>> chunk_ids;
    std::vector<embed::Key> keys;
    for (const auto& c : *data.chunks) {
      if (!corpus.find(c.author_id)) {
        throw IntegrityError("chunk (" + c.author_id + ", " + std::to_string(c.chunk_index) +
                             ") belongs to no essay in the corpus");
      }
      chunk_ids[c.author_id].push_back(static_cast<std::uint32_t>(c.chunk_index));
      keys.emplace_back(c.author_id, static_cast<std::uint32_t>(c.chunk_index));
    }
    const auto coverage = embed::coverage_check(*emb, keys);
    if (!coverage.ok()) {
      std::string msg = "coverage check failed:";
      for (std::size_t i = 0; i < std::min<std::size_t>(coverage.missing.size(), 10); ++i) {
        msg += " missing " + embed::format_key(coverage.missing[i]);
      }
      for (std::size_t i = 0; i < std::min<std::size_t>(coverage.orphans.size(), 10); ++i) {
        msg += " orphan " + embed::format_key(coverage.orphans[i]);
      }
      throw IntegrityError(msg);
    }

    parallel_for(corpus.size(), cfg.threads, [&](std::size_t e) {
      const Essay& essay = corpus.essays()[e];
      auto it = chunk_ids.find(essay.author_id);
      if (it == chunk_ids.end()) throw IntegrityError("essay '" + essay.author_id + "' has no chunks");
      auto ids = it->second;
      std::sort(ids.begin(), ids.end());
      const PsychoFeatures* psycho = corpus.features_for(essay.author_id);
      Matrix m;
      for (auto ci : ids) {
        const auto fused = features::build_vector(*emb->find(essay.author_id, ci), psycho, pipeline);
        for (double v : fused.values) {
          if (!std::isfinite(v)) throw IntegrityError("non-finite feature in chunk of '" + essay.author_id + "'");
        }
        m.push_row(fused.values);
      }
      essay_vectors[e] = std::move(m);
    });
    report.vector_dim = essay_vectors.front().cols();
    for (const auto& m : essay_vectors) report.chunk_count += m.rows();
  }

  struct Job {
    std::size_t trait_slot;
    std::size_t fold;
  };
  struct JobResult {
    std::size_t correct = 0;
    std::size_t total = 0;
    std::size_t non_converged = 0;
  };
  std::vector<FoldPlan> plans;
  std::vector<Job> jobs;
  for (std::size_t t = 0; t < cfg.traits.size(); ++t) {
    plans.push_back(make_folds(corpus, cfg.traits[t], cfg.k, cfg.seed));
    for (std::size_t f = 0; f < cfg.k; ++f) jobs.push_back({t, f});
  }
  std::vector<JobResult> results(jobs.size());

  // Inner training runs single-threaded; the outer fold x trait loop is parallel.
  parallel_for(jobs.size(), cfg.threads, [&](std::size_t job_id) {
    const Job job = jobs[job_id];
    const Trait trait = cfg.traits[job.trait_slot];
    const FoldPlan& plan = plans[job.trait_slot];
    std::vector<std::size_t> train, test;
    for (std::size_t e = 0; e < corpus.size(); ++e) {
      (plan.fold_of(corpus.essays()[e].author_id) == job.fold ? test : train).push_back(e);
    }
    {
      std::set<std::string> train_ids;
      for (auto e : train) train_ids.insert(corpus.essays()[e].author_id);
      for (auto e : test) {
        if (train_ids.count(corpus.essays()[e].author_id)) {
          throw IntegrityError("leakage: author '" + corpus.essays()[e].author_id + "' in train and test of fold " +
                               std::to_string(job.fold));
        }
      }
    }

    JobResult& out = results[job_id];
    out.total = test.size();
    auto truth = [&](std::size_t e) { return corpus.essays()[e].label(trait) ? 1 : -1; };

    switch (variant.classifier) {
      case ClassifierKind::kMajorityBaseline: {
        const LabelCounts counts = label_distribution(corpus, trait);
        const int majority = counts.positive >= counts.negative ? 1 : -1;
        for (auto e : test) out.correct += truth(e) == majority ? 1 : 0;
        return;
      }
      case ClassifierKind::kOracle:
        out.correct = test.size();
        return;
      case ClassifierKind::kAntiOracle:
        out.correct = 0;
        return;
      case ClassifierKind::kSingleSvm:
      case ClassifierKind::kBaggedSvm:
        break;
    }

    Matrix x;
    std::vector<int> y;
    for (auto e : train) {
      const Matrix& m = essay_vectors[e];
      for (std::size_t r = 0; r < m.rows(); ++r) {
        x.push_row(m.row(r));
        y.push_back(truth(e));
      }
    }
    ensemble::BaggingSpec spec = cfg.bagging;
    spec.master_seed = rng::mix64(cfg.bagging.master_seed ^
                                  rng::mix64((trait_index(trait) + 1) * 1000003ull + job.fold));
    if (variant.classifier == ClassifierKind::kSingleSvm) {
      spec.n_estimators = 1;
      spec.bootstrap = false;
    }
    svm::SvmConfig svm_cfg = cfg.svm;
    svm_cfg.scale = pipeline.scaling;
    ensemble::TrainStats stats;
    const auto model = ensemble::train_bagged(trait, x, y, spec, svm_cfg, 1, &stats);
    out.non_converged = stats.non_converged_members;
    for (auto e : test) out.correct += model.vote_document(essay_vectors[e]) == truth(e) ? 1 : 0;
  });

  for (std::size_t t = 0; t < cfg.traits.size(); ++t) {
    TraitResult tr;
    tr.trait = cfg.traits[t];
    for (std::size_t j = 0; j < jobs.size(); ++j) {
      if (jobs[j].trait_slot != t) continue;
      const auto& r = results[j];
      tr.fold_sizes.push_back(r.total);
      tr.fold_accuracies.push_back(r.total ? static_cast<double>(r.correct) / static_cast<double>(r.total) : 0.0);
      tr.correct += r.correct;
      tr.total += r.total;
      report.non_converged_members += r.non_converged;
    }
    tr.mean_accuracy = tr.total ? static_cast<double>(tr.correct) / static_cast<double>(tr.total) : 0.0;
    report.per_trait.push_back(std::move(tr));
  }
  std::sort(report.per_trait.begin(), report.per_trait.end(),
            [](const TraitResult& a, const TraitResult& b) { return trait_index(a.trait) < trait_index(b.trait); });
  double sum = 0.0;
  for (const auto& tr : report.per_trait) sum += tr.mean_accuracy;
  report.average_accuracy = sum / static_cast<double>(report.per_trait.size());
  report.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

namespace {

ordered_json report_json(const EvalReport& r, bool include_runtime) {
  ordered_json j;
  j["variant"] = r.variant;
  j["config_fingerprint"] = r.config_fingerprint;
  j["vector_dim"] = r.vector_dim;
  j["chunk_count"] = r.chunk_count;
  ordered_json traits = ordered_json::object();
  for (const auto& tr : r.per_trait) {
    traits[std::string(trait_name(tr.trait))] = {{"fold_accuracies", tr.fold_accuracies},
                                                 {"fold_sizes", tr.fold_sizes},
                                                 {"correct", tr.correct},
                                                 {"total", tr.total},
                                                 {"mean_accuracy", tr.mean_accuracy}};
  }
  j["per_trait"] = std::move(traits);
  j["average_accuracy"] = r.average_accuracy;
  j["non_converged_members"] = r.non_converged_members;
  if (include_runtime) j["runtime_seconds"] = r.runtime_seconds;
  return j;
}

ordered_json significance_json(const SignificanceResult& s) {
  ordered_json j;
  j["variant_a"] = s.variant_a;
  j["variant_b"] = s.variant_b;
  j["mean_difference"] = s.mean_difference;
  if (std::isfinite(s.t_statistic)) {
    j["t_statistic"] = s.t_statistic;
  } else {
    j["t_statistic"] = nullptr;
  }
  j["p_value"] = s.p_value;
  j["df"] = s.df;
  j["degenerate"] = s.degenerate;
  return j;
}

std::string format_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

}  // namespace

std::string report_to_json(const EvalReport& r, bool include_runtime) { return report_json(r, include_runtime).dump(2) + "\n"; }

std::string render_table(std::span<const EvalReport> reports, std::span<const SignificanceResult> significance) {
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"Model", "EXT", "NEU", "AGR", "CON", "OPN", "Average"});
  for (const auto& r : reports) {
    std::vector<std::string> row{r.variant};
    for (Trait t : kAllTraits) {
      const TraitResult* tr = r.find(t);
      row.push_back(tr ? pct(tr->mean_accuracy) : "-");
    }
    std::string avg = pct(r.average_accuracy);
    for (const auto& s : significance) {
      if (s.variant_b == r.variant && s.p_value <= 0.05) avg += "*";
    }
    row.push_back(avg);
    rows.push_back(std::move(row));
  }
  std::vector<std::size_t> width(rows.front().size(), 0);
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream out;
  auto rule = [&] {
    out << '+';
    for (auto w : width) out << std::string(w + 2, '-') << '+';
    out << '\n';
  };
  rule();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out << '|';
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      const auto& cell = rows[r][c];
      const std::string pad(width[c] - cell.size(), ' ');
      out << ' ' << (c == 0 ? cell + pad : pad + cell) << " |";
    }
    out << '\n';
    if (r == 0) rule();
  }
  rule();
  if (!significance.empty()) out << "* significant difference from the reference at p <= 0.05 (paired t-test over folds)\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Ablation

AblationGrid AblationGrid::defaults() {
  AblationGrid g;
  g.variants = {"majority-baseline", "bb-svm", "m3", "m8", "m9", "m13", "m14", "layer-sweep"};
  g.bb_svm_grid = {{svm::KernelSpec::rbf_auto(), 0.1}, {svm::KernelSpec::rbf_auto(), 10.0},
                   {svm::KernelSpec::linear(), 0.1},   {svm::KernelSpec::linear(), 1.0},
                   {svm::KernelSpec::linear(), 10.0}};
  return g;
}

AblationGrid AblationGrid::from_json(std::string_view text) {
  AblationGrid g = defaults();
  try {
    const auto j = nlohmann::json::parse(text);
    static const std::set<std::string> known = {"variants", "bb_svm_grid", "reference", "target_average",
                                                "target_tolerance"};
    for (const auto& [key, _] : j.items()) {
      if (!known.count(key)) throw UsageError("ablation grid: unknown key '" + key + "'");
    }
    if (j.contains("variants")) g.variants = j.at("variants").get<std::vector<std::string>>();
    if (j.contains("reference")) g.reference = j.at("reference").get<std::string>();
    if (j.contains("target_average")) g.target_average = j.at("target_average").get<double>();
    if (j.contains("target_tolerance")) g.target_tolerance = j.at("target_tolerance").get<double>();
    if (j.contains("bb_svm_grid")) {
      g.bb_svm_grid.clear();
      for (const auto& p : j.at("bb_svm_grid")) {
        HyperPoint h;
        h.kernel = svm::parse_kernel(p.value("kernel", std::string("rbf")));
        h.C = p.value("C", 1.0);
        if (!(h.C > 0.0)) throw UsageError("ablation grid: C must be positive");
        g.bb_svm_grid.push_back(h);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("ablation grid: ") + e.what());
  }
  for (const auto& v : g.variants) {
    if (v != "layer-sweep") variant_by_name(v);
  }
  variant_by_name(g.reference);
  return g;
}

AblationResult ablate(const EvalData& data, const AblationGrid& grid, const EvalConfig& cfg) {
  struct Run {
    Variant variant;
    EvalConfig cfg;
  };
  std::vector<Run> runs;
  std::set<std::string> seen;
  auto add = [&](Variant v, EvalConfig c) {
    if (seen.insert(v.name).second) runs.push_back({std::move(v), std::move(c)});
  };
  add(variant_by_name(grid.reference), cfg);
  for (const auto& name : grid.variants) {
    if (name == "layer-sweep") {
      for (std::size_t l = 0; l < kLayerCount; ++l) add(variant_by_name("layer-" + std::to_string(l)), cfg);
    } else {
      add(variant_by_name(name), cfg);
    }
  }
  for (const auto& h : grid.bb_svm_grid) {
    Variant v = variant_by_name("bb-svm");
    std::string kernel = h.kernel.kind_name();
    if (h.kernel.kind == svm::KernelSpec::Kind::kRbf && !h.kernel.is_auto()) kernel += ":" + format_g(h.kernel.gamma);
    v.name = "bb-svm[" + kernel + ",C=" + format_g(h.C) + "]";
    EvalConfig c = cfg;
    c.svm.kernel = h.kernel;
    c.svm.C = h.C;
    add(std::move(v), std::move(c));
  }

  AblationResult result;
  for (const auto& run : runs) {
    const auto& v = run.variant;
    if (v.static_embeddings && !data.static_embeddings) {
      result.skipped.push_back(v.name + ": no static word-vector embeddings supplied");
      continue;
    }
    if (uses_features(v.classifier) && !v.static_embeddings && !data.embeddings) {
      result.skipped.push_back(v.name + ": no embeddings supplied");
      continue;
    }
    if (v.pipeline.pooling == features::Pooling::kSentenceMean && data.embeddings &&
        !data.embeddings->header().per_sentence()) {
      result.skipped.push_back(v.name + ": embeddings file has no per-sentence records");
      continue;
    }
    if (uses_features(v.classifier)) {
      const auto* emb = v.static_embeddings ? data.static_embeddings : data.embeddings;
      const auto layers = v.pipeline.layers;
      if (layers.mode == features::LayerSelector::Mode::kSingle && layers.layer >= emb->header().n_layers) {
        result.skipped.push_back(v.name + ": embeddings file has only " + std::to_string(emb->header().n_layers) +
                                 " layers");
        continue;
      }
    }
    result.reports.push_back(run_cv(data, v, run.cfg));
  }

  const EvalReport* ref = nullptr;
  for (const auto& r : result.reports) {
    if (r.variant == grid.reference) ref = &r;
  }
  if (ref) {
    const auto ref_folds = ref->fold_average_accuracies();
    for (const auto& r : result.reports) {
      if (&r == ref) continue;
      result.significance.push_back(paired_t_test(ref_folds, r.fold_average_accuracies(), ref->variant, r.variant));
    }
    for (const char* worse : {"m13", "m9", "m8"}) {
      for (const auto& r : result.reports) {
        if (r.variant == worse) {
          result.orderings.push_back({ref->variant, worse, ref->average_accuracy > r.average_accuracy});
        }
      }
    }
  }
  double best_gap = std::numeric_limits<double>::infinity();
  for (const auto& r : result.reports) {
    if (r.variant == "majority-baseline" || r.variant.ends_with("-stub")) continue;
    const double gap = std::fabs(100.0 * r.average_accuracy - grid.target_average);
    if (gap < best_gap) {
      best_gap = gap;
      result.closest_variant = r.variant;
      result.closest_average = 100.0 * r.average_accuracy;
    }
  }
  result.target_reached = best_gap <= grid.target_tolerance;
  return result;
}

std::string ablation_to_json(const AblationResult& r) {
  ordered_json j;
  auto reports = ordered_json::array();
  for (const auto& rep : r.reports) reports.push_back(report_json(rep, false));
  j["reports"] = std::move(reports);
  auto sig = ordered_json::array();
  for (const auto& s : r.significance) sig.push_back(significance_json(s));
  j["significance"] = std::move(sig);
  auto ord = ordered_json::array();
  for (const auto& o : r.orderings) ord.push_back({{"better", o.better}, {"worse", o.worse}, {"holds", o.holds}});
  j["orderings"] = std::move(ord);
  j["skipped"] = r.skipped;
  j["target_reached"] = r.target_reached;
  j["closest_variant"] = r.closest_variant;
  j["closest_average"] = r.closest_average;
  return j.dump(2) + "\n";
}

}  // namespace persona::eval
