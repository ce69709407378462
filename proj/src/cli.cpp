#include "persona/cli.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "persona/corpus.hpp"
#include "persona/csv.hpp"
#include "persona/embed_store.hpp"
#include "persona/error.hpp"
#include "persona/eval.hpp"
#include "persona/parallel.hpp"
#include "persona/simd/kernels.hpp"

namespace persona::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr int kConfigSchemaVersion = 1;

void reject_unknown(const json& obj, const std::set<std::string>& known, const std::string& where) {
  if (!obj.is_object()) throw UsageError("config: '" + where + "' must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (!known.count(key)) throw UsageError("config: unknown key '" + where + (where.empty() ? "" : ".") + key + "'");
  }
}

template <typename T>
void read_opt(const json& obj, const char* key, T& dst) {
  if (obj.contains(key)) dst = obj.at(key).get<T>();
}

template <typename T>
void read_opt(const json& obj, const char* key, std::optional<T>& dst) {
  if (obj.contains(key)) dst = obj.at(key).get<T>();
}

std::string slurp_text(const std::string& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError(std::string("cannot open ") + what + " '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const std::string& path, const std::string& text) {
  if (auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IngestError("cannot write '" + path + "'");
  out << text;
  if (!out) throw IngestError("write failure on '" + path + "'");
}

void require_path(const std::string& path, const char* what, const char* flag) {
  if (path.empty()) throw UsageError(std::string("missing ") + what + " (use " + flag + " or the config file)");
}

void require_existing(const std::string& path, const char* what, const char* flag) {
  require_path(path, what, flag);
  if (!fs::exists(path)) throw IngestError(std::string(what) + " not found: '" + path + "'");
}

std::vector<embed::Key> chunk_keys(const std::vector<textprep::Chunk>& chunks) {
  std::vector<embed::Key> keys;
  keys.reserve(chunks.size());
  for (const auto& c : chunks) keys.emplace_back(c.author_id, static_cast<std::uint32_t>(c.chunk_index));
  return keys;
}

void check_coverage(const embed::EmbeddingCollection& emb, const std::vector<textprep::Chunk>& chunks,
                    const std::string& emb_path, bool allow_orphans) {
  const auto report = embed::coverage_check(emb, chunk_keys(chunks));
  if (report.missing.empty() && (allow_orphans || report.orphans.empty())) return;
  std::string msg = "coverage check failed for '" + emb_path + "':";
  for (const auto& k : report.missing) msg += "\n  missing embedding for chunk " + embed::format_key(k);
  if (!allow_orphans) {
    for (const auto& k : report.orphans) msg += "\n  orphan embedding record " + embed::format_key(k);
  }
  throw IntegrityError(msg);
}

// Pipeline for train/predict: the variant's, with explicit overrides.
features::PipelineConfig resolve_pipeline(const RunConfig& cfg, eval::Variant& variant) {
  variant = eval::variant_by_name(cfg.variant);
  if (variant.classifier != eval::ClassifierKind::kBaggedSvm && variant.classifier != eval::ClassifierKind::kSingleSvm) {
    throw UsageError("variant '" + cfg.variant + "' has no trainable model");
  }
  features::PipelineConfig p = variant.pipeline;
  if (cfg.layers) p.layers = features::LayerSelector::parse(*cfg.layers);
  if (cfg.pooling) p.pooling = features::parse_pooling(*cfg.pooling);
  if (cfg.psycho) p.psycho = *cfg.psycho;
  if (cfg.scaling) p.scaling = *cfg.scaling;
  return p;
}

std::string pipeline_json(const features::PipelineConfig& p, bool static_embeddings) {
  ordered_json j;
  j["version"] = kConfigSchemaVersion;
  j["layers"] = p.layers.to_string();
  j["pooling"] = features::pooling_name(p.pooling);
  j["psycho"] = p.psycho;
  j["scaling"] = p.scaling;
  j["static_embeddings"] = static_embeddings;
  return j.dump(2) + "\n";
}

features::PipelineConfig pipeline_from_json(const std::string& text, const std::string& where, bool& static_embeddings) {
  try {
    const auto j = json::parse(text);
    reject_unknown(j, {"version", "layers", "pooling", "psycho", "scaling", "static_embeddings"}, "");
    features::PipelineConfig p;
    p.layers = features::LayerSelector::parse(j.at("layers").get<std::string>());
    p.pooling = features::parse_pooling(j.at("pooling").get<std::string>());
    p.psycho = j.at("psycho").get<bool>();
    p.scaling = j.at("scaling").get<bool>();
    static_embeddings = j.value("static_embeddings", false);
    return p;
  } catch (const json::exception& e) {
    throw IngestError(where + ": " + e.what());
  }
}

// Chunk vectors of one essay, in chunk_index order.
Matrix essay_matrix(const std::string& author_id, const std::vector<std::uint32_t>& chunk_ids,
                    const embed::EmbeddingCollection& emb, const PsychoFeatures* psycho,
                    const features::PipelineConfig& p) {
  Matrix m;
  for (auto ci : chunk_ids) {
    const auto* rec = emb.find(author_id, ci);
    if (!rec) throw IntegrityError("missing embedding for chunk " + embed::format_key({author_id, ci}));
    m.push_row(features::build_vector(*rec, psycho, p).values);
  }
  return m;
}

std::map<std::string, std::vector<std::uint32_t>> group_chunks(const std::vector<textprep::Chunk>& chunks) {
  std::map<std::string, std::vector<std::uint32_t>> out;
  for (const auto& c : chunks) out[c.author_id].push_back(static_cast<std::uint32_t>(c.chunk_index));
  for (auto& [_, ids] : out) std::sort(ids.begin(), ids.end());
  return out;
}

std::string histogram_line(const std::vector<std::size_t>& values, std::size_t bin) {
  std::map<std::size_t, std::size_t> bins;
  for (auto v : values) bins[v / bin]++;
  std::string line;
  for (const auto& [b, count] : bins) {
    line += "  [" + std::to_string(b * bin) + "," + std::to_string((b + 1) * bin) + "): " + std::to_string(count) + "\n";
  }
  return line;
}

// ---------------------------------------------------------------------------
// Commands

int cmd_preprocess(const RunConfig& cfg, bool fail_on_empty, std::ostream& out, std::ostream& err) {
  require_existing(cfg.paths.essays_csv, "essays file", "--essays");
  const std::string dst = !cfg.paths.output.empty() ? cfg.paths.output : cfg.paths.chunks_jsonl;
  require_path(dst, "chunks output path", "--out");
  cfg.chunking.validate();

  const Corpus corpus = load_essays(cfg.paths.essays_csv, false);
  std::vector<textprep::Chunk> chunks;
  std::vector<std::size_t> pre_counts, post_counts;
  std::size_t dropped = 0;
  for (const Essay& e : corpus.essays()) {
    try {
      auto cs = textprep::chunk_essay(e, cfg.chunking);
      for (auto& c : cs) {
        pre_counts.push_back(c.pre_expansion_tokens);
        post_counts.push_back(c.token_count);
        chunks.push_back(std::move(c));
      }
    } catch (const textprep::EmptyEssayError& ex) {
      if (fail_on_empty) throw;
      ++dropped;
      err << "warning: " << ex.what() << ", dropped\n";
    }
  }
  textprep::write_chunks_jsonl(dst, chunks);
  out << "essays: " << corpus.size() << "\n"
      << "dropped (empty after cleaning): " << dropped << "\n"
      << "chunks: " << chunks.size() << "\n"
      << "max tokens before expansion: "
      << (pre_counts.empty() ? 0 : *std::max_element(pre_counts.begin(), pre_counts.end())) << "\n"
      << "max tokens after expansion: "
      << (post_counts.empty() ? 0 : *std::max_element(post_counts.begin(), post_counts.end())) << "\n"
      << "token histogram before expansion:\n"
      << histogram_line(pre_counts, 25) << "token histogram after expansion:\n"
      << histogram_line(post_counts, 25) << "wrote " << dst << "\n";
  return kExitOk;
}

int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  eval::Variant variant;
  const auto pipeline = resolve_pipeline(cfg, variant);
  const std::string& emb_path = variant.static_embeddings ? cfg.paths.static_embeddings_ceb : cfg.paths.embeddings_ceb;
  require_existing(cfg.paths.essays_csv, "essays file", "--essays");
  require_existing(cfg.paths.chunks_jsonl, "chunks file", "--chunks");
  require_existing(emb_path, "embeddings file", variant.static_embeddings ? "--static-embeddings" : "--embeddings");
  if (pipeline.psycho) require_existing(cfg.paths.psycho_csv, "psycholinguistic feature file", "--psycho");
  require_path(cfg.paths.model_dir, "model directory", "--model-dir");

  Corpus corpus = load_essays(cfg.paths.essays_csv);
  if (pipeline.psycho) load_psycho_features(cfg.paths.psycho_csv, corpus);
  const auto chunks = textprep::read_chunks_jsonl(cfg.paths.chunks_jsonl);
  const auto emb = embed::read_embeddings(emb_path);
  check_coverage(emb, chunks, emb_path, false);
  pipeline.layers.check(emb.header().n_layers);

  const auto grouped = group_chunks(chunks);
  std::vector<Matrix> per_essay;
  std::vector<const Essay*> essays;
  for (const Essay& e : corpus.essays()) {
    auto it = grouped.find(e.author_id);
    if (it == grouped.end()) throw IntegrityError("essay '" + e.author_id + "' has no chunks");
    per_essay.push_back(essay_matrix(e.author_id, it->second, emb, corpus.features_for(e.author_id), pipeline));
    essays.push_back(&e);
  }

  const std::size_t threads = resolve_threads(cfg.threads);
  fs::create_directories(cfg.paths.model_dir);
  write_text((fs::path(cfg.paths.model_dir) / "pipeline.json").string(), pipeline_json(pipeline, variant.static_embeddings));
  bool any_non_converged = false;
  for (Trait trait : cfg.traits) {
    const auto t0 = std::chrono::steady_clock::now();
    Matrix x;
    std::vector<int> y;
    for (std::size_t e = 0; e < essays.size(); ++e) {
      for (std::size_t r = 0; r < per_essay[e].rows(); ++r) {
        x.push_row(per_essay[e].row(r));
        y.push_back(essays[e]->label(trait) ? 1 : -1);
      }
    }
    ensemble::BaggingSpec spec = cfg.bagging;
    if (variant.classifier == eval::ClassifierKind::kSingleSvm) {
      spec.n_estimators = 1;
      spec.bootstrap = false;
    }
    svm::SvmConfig svm_cfg = cfg.svm;
    svm_cfg.scale = pipeline.scaling;
    ensemble::TrainStats stats;
    const auto model = ensemble::train_bagged(trait, x, y, spec, svm_cfg, threads, &stats);
    const std::string dir = (fs::path(cfg.paths.model_dir) / std::string(trait_name(trait))).string();
    ensemble::save_bagged(dir, model);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    err << "trained " << trait_name(trait) << ": " << model.members().size() << " member(s), " << x.rows()
        << " chunks, dim " << x.cols() << ", " << stats.total_iterations << " SMO iterations, " << secs << " s\n";
    if (stats.non_converged_members > 0) {
      any_non_converged = true;
      err << "note: " << stats.non_converged_members << " member(s) of " << trait_name(trait)
          << " hit max_iter before reaching the KKT tolerance\n";
    }
    out << dir << "\n";
  }
  if (any_non_converged) err << "warning: training finished with non-converged members\n";
  return kExitOk;
}

int cmd_predict(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  require_existing(cfg.paths.essays_csv, "input essays file", "--essays");
  require_existing(cfg.paths.model_dir, "model directory", "--model-dir");

  const std::string pipeline_path = (fs::path(cfg.paths.model_dir) / "pipeline.json").string();
  bool static_embeddings = false;
  const auto pipeline = pipeline_from_json(slurp_text(pipeline_path, "pipeline file"), pipeline_path, static_embeddings);

  std::vector<std::pair<Trait, ensemble::BaggedTraitModel>> models;
  for (Trait t : cfg.traits) {
    const fs::path dir = fs::path(cfg.paths.model_dir) / std::string(trait_name(t));
    if (!fs::exists(dir / "spec.json")) {
      throw IngestError("no model for trait " + std::string(trait_name(t)) + " in '" + cfg.paths.model_dir + "'");
    }
    models.emplace_back(t, ensemble::load_bagged(dir.string()));
  }

  const std::string input = slurp_text(cfg.paths.essays_csv, "input essays file");
  Corpus corpus;
  if (input.find_first_not_of(" \t\r\n") != std::string::npos) corpus = parse_essays(input, cfg.paths.essays_csv, false);
  std::string csv_out;
  {
    std::vector<std::string> header{"author_id"};
    for (Trait t : cfg.traits) header.emplace_back(trait_name(t));
    csv_out += csv::format_row(header);
  }
  if (corpus.size() > 0) {
    const std::string& emb_path = static_embeddings ? cfg.paths.static_embeddings_ceb : cfg.paths.embeddings_ceb;
    require_existing(emb_path, "embeddings file", static_embeddings ? "--static-embeddings" : "--embeddings");
    if (pipeline.psycho) {
      require_existing(cfg.paths.psycho_csv, "psycholinguistic feature file", "--psycho");
      load_psycho_features(cfg.paths.psycho_csv, corpus, true);
    }
    std::vector<textprep::Chunk> chunks;
    if (!cfg.paths.chunks_jsonl.empty()) {
      chunks = textprep::read_chunks_jsonl(cfg.paths.chunks_jsonl);
    } else {
      for (const Essay& e : corpus.essays()) {
        auto cs = textprep::chunk_essay(e, cfg.chunking);
        chunks.insert(chunks.end(), cs.begin(), cs.end());
      }
    }
    const auto emb = embed::read_embeddings(emb_path);
    const auto grouped = group_chunks(chunks);
    for (const Essay& e : corpus.essays()) {
      auto it = grouped.find(e.author_id);
      if (it == grouped.end()) throw IntegrityError("input essay '" + e.author_id + "' has no chunks");
      const Matrix m = essay_matrix(e.author_id, it->second, emb, corpus.features_for(e.author_id), pipeline);
      std::vector<std::string> row{e.author_id};
      for (const auto& [t, model] : models) row.emplace_back(model.vote_document(m) > 0 ? "y" : "n");
      csv_out += csv::format_row(row);
    }
  }
  if (cfg.paths.output.empty()) {
    out << csv_out;
  } else {
    write_text(cfg.paths.output, csv_out);
    err << "wrote " << corpus.size() << " prediction row(s) to " << cfg.paths.output << "\n";
  }
  return kExitOk;
}

struct EvalInputs {
  Corpus corpus;
  std::optional<std::vector<textprep::Chunk>> chunks;
  std::optional<embed::EmbeddingCollection> embeddings;
  std::optional<embed::EmbeddingCollection> static_embeddings;

  eval::EvalData data() const {
    eval::EvalData d;
    d.corpus = &corpus;
    d.chunks = chunks ? &*chunks : nullptr;
    d.embeddings = embeddings ? &*embeddings : nullptr;
    d.static_embeddings = static_embeddings ? &*static_embeddings : nullptr;
    return d;
  }
};

// Loads whatever the requested variants need; optional inputs are read when given.
EvalInputs load_eval_inputs(const RunConfig& cfg, bool need_features, bool need_static, bool need_psycho) {
  require_existing(cfg.paths.essays_csv, "essays file", "--essays");
  EvalInputs in;
  in.corpus = load_essays(cfg.paths.essays_csv);
  if (need_psycho) require_existing(cfg.paths.psycho_csv, "psycholinguistic feature file", "--psycho");
  if (!cfg.paths.psycho_csv.empty() && (need_psycho || fs::exists(cfg.paths.psycho_csv))) {
    load_psycho_features(cfg.paths.psycho_csv, in.corpus);
  }
  if (need_features) require_existing(cfg.paths.chunks_jsonl, "chunks file", "--chunks");
  if (!cfg.paths.chunks_jsonl.empty() && fs::exists(cfg.paths.chunks_jsonl)) {
    in.chunks = textprep::read_chunks_jsonl(cfg.paths.chunks_jsonl);
  }
  if (need_features && !need_static) require_existing(cfg.paths.embeddings_ceb, "embeddings file", "--embeddings");
  if (!cfg.paths.embeddings_ceb.empty() && fs::exists(cfg.paths.embeddings_ceb)) {
    in.embeddings = embed::read_embeddings(cfg.paths.embeddings_ceb);
    if (in.chunks) check_coverage(*in.embeddings, *in.chunks, cfg.paths.embeddings_ceb, false);
  }
  if (need_static) require_existing(cfg.paths.static_embeddings_ceb, "static embeddings file", "--static-embeddings");
  if (!cfg.paths.static_embeddings_ceb.empty() && fs::exists(cfg.paths.static_embeddings_ceb)) {
    in.static_embeddings = embed::read_embeddings(cfg.paths.static_embeddings_ceb);
    if (in.chunks) check_coverage(*in.static_embeddings, *in.chunks, cfg.paths.static_embeddings_ceb, false);
  }
  return in;
}

eval::EvalConfig make_eval_config(const RunConfig& cfg) {
  eval::EvalConfig ec;
  ec.svm = cfg.svm;
  ec.bagging = cfg.bagging;
  ec.k = cfg.k;
  ec.seed = cfg.seed;
  ec.threads = resolve_threads(cfg.threads);
  ec.traits = cfg.traits;
  ec.psycho = cfg.psycho;
  ec.scaling = cfg.scaling;
  return ec;
}

void emit_report(const RunConfig& cfg, const std::string& json_text, const std::string& table, std::ostream& out,
                 std::ostream& err) {
  if (cfg.paths.report_json.empty()) {
    out << json_text;
  } else {
    write_text(cfg.paths.report_json, json_text);
    write_text(cfg.paths.report_json + ".txt", table);
    err << "wrote " << cfg.paths.report_json << " and " << cfg.paths.report_json << ".txt\n";
  }
  out << table;
}

int cmd_evaluate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const auto variant = eval::variant_by_name(cfg.variant);
  const bool features = variant.classifier == eval::ClassifierKind::kBaggedSvm ||
                        variant.classifier == eval::ClassifierKind::kSingleSvm;
  const bool psycho = features && cfg.psycho.value_or(variant.pipeline.psycho);
  const auto inputs = load_eval_inputs(cfg, features, features && variant.static_embeddings, psycho);
  const auto ec = make_eval_config(cfg);
  const auto report = eval::run_cv(inputs.data(), variant, ec);
  err << "evaluate " << variant.name << ": " << report.runtime_seconds << " s, " << ec.threads << " thread(s), simd "
      << simd::active().name << "\n";
  if (report.non_converged_members > 0) {
    err << "note: " << report.non_converged_members << " SVM member(s) hit max_iter\n";
  }
  const eval::EvalReport reports[] = {report};
  emit_report(cfg, eval::report_to_json(report, cfg.include_runtime), eval::render_table(reports), out, err);
  return kExitOk;
}

int cmd_ablate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const auto grid = cfg.grid_json.empty()
                        ? eval::AblationGrid::defaults()
                        : eval::AblationGrid::from_json(slurp_text(cfg.grid_json, "ablation grid"));
  const auto inputs = load_eval_inputs(cfg, false, false, false);
  const auto result = eval::ablate(inputs.data(), grid, make_eval_config(cfg));
  for (const auto& s : result.skipped) err << "skipped " << s << "\n";
  std::string table = eval::render_table(result.reports, result.significance);
  for (const auto& o : result.orderings) {
    table += o.better + " > " + o.worse + ": " + (o.holds ? "holds" : "does not hold") + "\n";
  }
  char line[160];
  std::snprintf(line, sizeof line, "closest to target %.2f: %s (%.2f), within tolerance: %s\n", grid.target_average,
                result.closest_variant.c_str(), result.closest_average, result.target_reached ? "yes" : "no");
  table += line;
  emit_report(cfg, eval::ablation_to_json(result), table, out, err);
  return kExitOk;
}

int cmd_inspect(const RunConfig& cfg, bool verify, std::ostream& out) {
  require_existing(cfg.paths.embeddings_ceb, "embeddings file", "--embeddings");
  const auto h = embed::read_header(cfg.paths.embeddings_ceb);
  out << "file: " << cfg.paths.embeddings_ceb << "\n"
      << "magic: CEB1\n"
      << "version: " << h.version << "\n"
      << "n_layers: " << h.n_layers << "\n"
      << "dim: " << h.dim << "\n"
      << "record_count: " << h.record_count << "\n"
      << "flags: " << h.flags << (h.per_sentence() ? " (per-sentence records)" : "") << "\n";
  if (verify || !cfg.paths.chunks_jsonl.empty()) {
    const auto emb = embed::read_embeddings(cfg.paths.embeddings_ceb);
    out << "integrity: OK, " << emb.size() << " records\n";
    if (!cfg.paths.chunks_jsonl.empty()) {
      const auto chunks = textprep::read_chunks_jsonl(cfg.paths.chunks_jsonl);
      const auto report = embed::coverage_check(emb, chunk_keys(chunks));
      for (const auto& k : report.missing) out << "missing " << embed::format_key(k) << "\n";
      for (const auto& k : report.orphans) out << "orphan " << embed::format_key(k) << "\n";
      out << "coverage: " << (report.ok() ? "OK" : "FAILED") << "\n";
      if (!report.ok()) return kExitIntegrity;
    }
  }
  return kExitOk;
}

}  // namespace

// ---------------------------------------------------------------------------
// RunConfig JSON

RunConfig RunConfig::from_json(std::string_view text) {
  RunConfig cfg;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw UsageError(std::string("config: invalid JSON: ") + e.what());
  }
  try {
    reject_unknown(j, {"version", "paths", "preprocess", "variant", "pipeline", "svm", "bagging", "eval", "threads"}, "");
    if (j.contains("version") && j.at("version").get<int>() != kConfigSchemaVersion) {
      throw UsageError("config: unsupported version " + j.at("version").dump());
    }
    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      reject_unknown(p, {"essays_csv", "psycho_csv", "chunks_jsonl", "embeddings_ceb", "static_embeddings_ceb",
                         "model_dir", "report_json", "output"}, "paths");
      read_opt(p, "essays_csv", cfg.paths.essays_csv);
      read_opt(p, "psycho_csv", cfg.paths.psycho_csv);
      read_opt(p, "chunks_jsonl", cfg.paths.chunks_jsonl);
      read_opt(p, "embeddings_ceb", cfg.paths.embeddings_ceb);
      read_opt(p, "static_embeddings_ceb", cfg.paths.static_embeddings_ceb);
      read_opt(p, "model_dir", cfg.paths.model_dir);
      read_opt(p, "report_json", cfg.paths.report_json);
      read_opt(p, "output", cfg.paths.output);
    }
    if (j.contains("preprocess")) {
      const auto& p = j.at("preprocess");
      reject_unknown(p, {"max_chunk_tokens", "max_expanded_tokens", "pack"}, "preprocess");
      read_opt(p, "max_chunk_tokens", cfg.chunking.max_pre_expansion_tokens);
      read_opt(p, "max_expanded_tokens", cfg.chunking.max_post_expansion_tokens);
      if (p.contains("pack")) cfg.chunking.pack = textprep::parse_pack_mode(p.at("pack").get<std::string>());
    }
    read_opt(j, "variant", cfg.variant);
    if (j.contains("pipeline")) {
      const auto& p = j.at("pipeline");
      reject_unknown(p, {"layers", "pooling", "psycho", "scaling"}, "pipeline");
      read_opt(p, "layers", cfg.layers);
      read_opt(p, "pooling", cfg.pooling);
      read_opt(p, "psycho", cfg.psycho);
      read_opt(p, "scaling", cfg.scaling);
    }
    if (j.contains("svm")) {
      const auto& p = j.at("svm");
      reject_unknown(p, {"kernel", "C", "gamma", "tol", "max_iter", "cache_mb"}, "svm");
      if (p.contains("kernel")) cfg.svm.kernel = svm::parse_kernel(p.at("kernel").get<std::string>());
      if (p.contains("gamma") && !p.at("gamma").is_null()) {
        const double g = p.at("gamma").get<double>();
        if (!(g > 0.0)) throw UsageError("config: svm.gamma must be positive");
        cfg.svm.kernel.gamma = g;
      }
      read_opt(p, "C", cfg.svm.C);
      read_opt(p, "tol", cfg.svm.tol);
      read_opt(p, "max_iter", cfg.svm.max_iter);
      read_opt(p, "cache_mb", cfg.svm.cache_mb);
    }
    if (j.contains("bagging")) {
      const auto& p = j.at("bagging");
      reject_unknown(p, {"n_estimators", "master_seed", "sample_fraction"}, "bagging");
      read_opt(p, "n_estimators", cfg.bagging.n_estimators);
      read_opt(p, "master_seed", cfg.bagging.master_seed);
      read_opt(p, "sample_fraction", cfg.bagging.sample_fraction);
    }
    if (j.contains("eval")) {
      const auto& p = j.at("eval");
      reject_unknown(p, {"k", "seed", "traits", "grid", "include_runtime"}, "eval");
      read_opt(p, "k", cfg.k);
      read_opt(p, "seed", cfg.seed);
      read_opt(p, "grid", cfg.grid_json);
      read_opt(p, "include_runtime", cfg.include_runtime);
      if (p.contains("traits")) {
        cfg.traits.clear();
        for (const auto& t : p.at("traits")) cfg.traits.push_back(trait_from_string(t.get<std::string>()));
      }
    }
    read_opt(j, "threads", cfg.threads);
  } catch (const json::exception& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  return cfg;
}

std::string RunConfig::to_json() const {
  ordered_json j;
  j["version"] = kConfigSchemaVersion;
  j["paths"] = {{"essays_csv", paths.essays_csv},         {"psycho_csv", paths.psycho_csv},
                {"chunks_jsonl", paths.chunks_jsonl},     {"embeddings_ceb", paths.embeddings_ceb},
                {"static_embeddings_ceb", paths.static_embeddings_ceb}, {"model_dir", paths.model_dir},
                {"report_json", paths.report_json},       {"output", paths.output}};
  j["preprocess"] = {{"max_chunk_tokens", chunking.max_pre_expansion_tokens},
                     {"max_expanded_tokens", chunking.max_post_expansion_tokens},
                     {"pack", textprep::pack_mode_name(chunking.pack)}};
  j["variant"] = variant;
  ordered_json p = ordered_json::object();
  if (layers) p["layers"] = *layers;
  if (pooling) p["pooling"] = *pooling;
  if (psycho) p["psycho"] = *psycho;
  if (scaling) p["scaling"] = *scaling;
  j["pipeline"] = p;
  j["svm"] = {{"kernel", svm.kernel.kind_name()}, {"C", svm.C},           {"tol", svm.tol},
              {"max_iter", svm.max_iter},         {"cache_mb", svm.cache_mb}};
  if (!svm.kernel.is_auto() && svm.kernel.kind == svm::KernelSpec::Kind::kRbf) j["svm"]["gamma"] = svm.kernel.gamma;
  j["bagging"] = {{"n_estimators", bagging.n_estimators},
                  {"master_seed", bagging.master_seed},
                  {"sample_fraction", bagging.sample_fraction}};
  auto tr = ordered_json::array();
  for (Trait t : traits) tr.push_back(trait_name(t));
  j["eval"] = {{"k", k}, {"seed", seed}, {"traits", tr}, {"grid", grid_json}, {"include_runtime", include_runtime}};
  j["threads"] = threads;
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Entry point

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"persona: chunked-essay personality classification with bagged kernel SVMs", "persona"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "persona 1.0.0");

  // Flag values land here, then are applied over the config file.
  std::string config_path;
  std::map<std::string, std::string> str_flags;
  std::vector<std::string> trait_flags;
  std::string simd_backend;
  std::optional<std::size_t> max_chunk, max_expanded, n_estimators, k, threads;
  std::optional<std::uint64_t> seed, bagging_seed, max_iter;
  std::optional<double> c_value, gamma, tol, cache_mb;
  bool no_psycho = false, no_scaling = false, with_psycho = false, include_runtime = false;
  bool fail_on_empty = false, verify = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Run configuration JSON");
    sub->add_option("--threads", threads, "Worker cap (fallback: PERSONA_THREADS)");
    sub->add_option("--simd", simd_backend, "Force a SIMD backend: scalar, avx2, neon");
  };
  auto add_path = [&](CLI::App* sub, const std::string& flag, const std::string& key, const std::string& help) {
    sub->add_option_function<std::string>(flag, [&str_flags, key](const std::string& v) { str_flags[key] = v; }, help);
  };
  auto add_model_flags = [&](CLI::App* sub) {
    sub->add_option_function<std::string>("--variant", [&](const std::string& v) { str_flags["variant"] = v; },
                                          "Named pipeline variant (default bb-svm)");
    sub->add_option_function<std::string>("--kernel", [&](const std::string& v) { str_flags["kernel"] = v; },
                                          "linear | rbf | rbf:<gamma>");
    sub->add_option("--C", c_value, "SVM box constraint");
    sub->add_option("--gamma", gamma, "RBF gamma (default: auto)");
    sub->add_option("--tol", tol, "KKT tolerance");
    sub->add_option("--max-iter", max_iter, "SMO pair-update cap");
    sub->add_option("--cache-mb", cache_mb, "Kernel row cache budget");
    sub->add_option("--n-estimators", n_estimators, "Bagged SVM members");
    sub->add_option("--bagging-seed", bagging_seed, "Master seed for bootstrap sampling");
    sub->add_flag("--no-psycho", no_psycho, "Disable psycholinguistic fusion");
    sub->add_flag("--psycho-on", with_psycho, "Force psycholinguistic fusion on");
    sub->add_flag("--no-scaling", no_scaling, "Disable z-score scaling");
    sub->add_option("--trait", trait_flags, "Restrict to trait(s): EXT NEU AGR CON OPN");
  };

  auto* pre = app.add_subcommand("preprocess", "Clean, split and chunk essays into JSON lines");
  add_common(pre);
  add_path(pre, "--essays", "essays_csv", "Essays CSV");
  add_path(pre, "--out", "output", "Chunks JSONL to write");
  pre->add_option("--max-chunk-tokens", max_chunk, "Chunk limit before contraction expansion");
  pre->add_option("--max-expanded-tokens", max_expanded, "Chunk limit after contraction expansion");
  pre->add_option_function<std::string>("--pack", [&](const std::string& v) { str_flags["pack"] = v; },
                                        "sentence | window");
  pre->add_flag("--fail-on-empty", fail_on_empty, "Fail instead of dropping essays that clean to nothing");

  auto* train = app.add_subcommand("train", "Train one bagged SVM model per trait");
  add_common(train);
  add_model_flags(train);
  for (auto [flag, key] : std::initializer_list<std::pair<const char*, const char*>>{
           {"--essays", "essays_csv"}, {"--psycho", "psycho_csv"}, {"--chunks", "chunks_jsonl"},
           {"--embeddings", "embeddings_ceb"}, {"--static-embeddings", "static_embeddings_ceb"},
           {"--model-dir", "model_dir"}}) {
    add_path(train, flag, key, key);
  }
  train->add_option_function<std::string>("--layers", [&](const std::string& v) { str_flags["layers"] = v; },
                                          "last_four | all_mean | single:<i>");
  train->add_option_function<std::string>("--pooling", [&](const std::string& v) { str_flags["pooling"] = v; },
                                          "token_mean | sentence_mean");

  auto* predict = app.add_subcommand("predict", "Predict y/n per trait for essays");
  add_common(predict);
  for (auto [flag, key] : std::initializer_list<std::pair<const char*, const char*>>{
           {"--essays", "essays_csv"}, {"--psycho", "psycho_csv"}, {"--chunks", "chunks_jsonl"},
           {"--embeddings", "embeddings_ceb"}, {"--static-embeddings", "static_embeddings_ceb"},
           {"--model-dir", "model_dir"}, {"--out", "output"}}) {
    add_path(predict, flag, key, key);
  }
  predict->add_option("--trait", trait_flags, "Restrict to trait(s)");

  auto* evaluate = app.add_subcommand("evaluate", "Cross-validate one variant");
  auto* ablate = app.add_subcommand("ablate", "Run the ablation grid");
  for (auto* sub : {evaluate, ablate}) {
    add_common(sub);
    add_model_flags(sub);
    for (auto [flag, key] : std::initializer_list<std::pair<const char*, const char*>>{
             {"--essays", "essays_csv"}, {"--psycho", "psycho_csv"}, {"--chunks", "chunks_jsonl"},
             {"--embeddings", "embeddings_ceb"}, {"--static-embeddings", "static_embeddings_ceb"},
             {"--report", "report_json"}}) {
      add_path(sub, flag, key, key);
    }
    sub->add_option("--k", k, "Folds");
    sub->add_option("--seed", seed, "Fold seed");
    sub->add_flag("--include-runtime", include_runtime, "Embed wall-clock runtime in the report JSON");
  }
  ablate->add_option_function<std::string>("--grid", [&](const std::string& v) { str_flags["grid"] = v; },
                                           "Ablation grid JSON");

  auto* inspect = app.add_subcommand("inspect-embeddings", "Dump a CEB1 header, optionally verify records");
  add_common(inspect);
  inspect->add_option_function<std::string>("file", [&](const std::string& v) { str_flags["embeddings_ceb"] = v; },
                                            "CEB1 file")->required();
  add_path(inspect, "--chunks", "chunks_jsonl", "Chunks JSONL for a coverage check");
  inspect->add_flag("--verify", verify, "Read and validate every record");

  std::vector<std::string> argv_store;
  argv_store.reserve(args.size() + 1);
  argv_store.emplace_back("persona");
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion& e) {
    out << e.what() << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    if (app.get_subcommands().empty()) {
      err << "run 'persona --help' for the list of commands\n";
    }
    return kExitUsage;
  }

  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::from_json(slurp_text(config_path, "config file"));
    auto take = [&](const char* key, std::string& dst) {
      if (auto it = str_flags.find(key); it != str_flags.end()) dst = it->second;
    };
    take("essays_csv", cfg.paths.essays_csv);
    take("psycho_csv", cfg.paths.psycho_csv);
    take("chunks_jsonl", cfg.paths.chunks_jsonl);
    take("embeddings_ceb", cfg.paths.embeddings_ceb);
    take("static_embeddings_ceb", cfg.paths.static_embeddings_ceb);
    take("model_dir", cfg.paths.model_dir);
    take("report_json", cfg.paths.report_json);
    take("output", cfg.paths.output);
    take("variant", cfg.variant);
    take("grid", cfg.grid_json);
    if (auto it = str_flags.find("layers"); it != str_flags.end()) cfg.layers = it->second;
    if (auto it = str_flags.find("pooling"); it != str_flags.end()) cfg.pooling = it->second;
    if (auto it = str_flags.find("pack"); it != str_flags.end()) cfg.chunking.pack = textprep::parse_pack_mode(it->second);
    if (auto it = str_flags.find("kernel"); it != str_flags.end()) cfg.svm.kernel = svm::parse_kernel(it->second);
    if (max_chunk) cfg.chunking.max_pre_expansion_tokens = *max_chunk;
    if (max_expanded) cfg.chunking.max_post_expansion_tokens = *max_expanded;
    if (c_value) cfg.svm.C = *c_value;
    if (gamma) {
      if (!(*gamma > 0.0)) throw UsageError("--gamma must be positive");
      cfg.svm.kernel = svm::KernelSpec::rbf(*gamma);
    }
    if (tol) cfg.svm.tol = *tol;
    if (max_iter) cfg.svm.max_iter = *max_iter;
    if (cache_mb) cfg.svm.cache_mb = *cache_mb;
    if (n_estimators) cfg.bagging.n_estimators = *n_estimators;
    if (bagging_seed) cfg.bagging.master_seed = *bagging_seed;
    if (k) cfg.k = *k;
    if (seed) cfg.seed = *seed;
    if (threads) cfg.threads = *threads;
    if (no_psycho && with_psycho) throw UsageError("--no-psycho and --psycho-on are mutually exclusive");
    if (no_psycho) cfg.psycho = false;
    if (with_psycho) cfg.psycho = true;
    if (no_scaling) cfg.scaling = false;
    if (include_runtime) cfg.include_runtime = true;
    if (!trait_flags.empty()) {
      cfg.traits.clear();
      for (const auto& t : trait_flags) {
        const Trait parsed = trait_from_string(t);
        if (std::find(cfg.traits.begin(), cfg.traits.end(), parsed) == cfg.traits.end()) cfg.traits.push_back(parsed);
      }
      std::sort(cfg.traits.begin(), cfg.traits.end());
    }
    if (!(cfg.svm.C > 0.0)) throw UsageError("--C must be positive");
    if (!(cfg.svm.tol > 0.0)) throw UsageError("--tol must be positive");
    cfg.bagging.validate();
    if (!simd_backend.empty()) simd::set_active(simd::parse_backend(simd_backend));

    if (pre->parsed()) return cmd_preprocess(cfg, fail_on_empty, out, err);
    if (train->parsed()) return cmd_train(cfg, out, err);
    if (predict->parsed()) return cmd_predict(cfg, out, err);
    if (evaluate->parsed()) return cmd_evaluate(cfg, out, err);
    if (ablate->parsed()) return cmd_ablate(cfg, out, err);
    if (inspect->parsed()) return cmd_inspect(cfg, verify, out);
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitIngest;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

}  // namespace persona::cli
