// Acceptance runner: one PASS / FAIL / SKIP line per criterion.
// Dataset-backed criteria run when PERSONA_ESSAYS_CSV (and, where needed,
// PERSONA_PSYCHO_CSV, PERSONA_EMBEDDINGS_CEB, PERSONA_STATIC_CEB) are set.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fixture.hpp"
#include "persona/cli.hpp"
#include "persona/corpus.hpp"
#include "persona/embed_store.hpp"
#include "persona/error.hpp"
#include "persona/eval.hpp"
#include "persona/features.hpp"
#include "persona/rng.hpp"
#include "persona/svm.hpp"
#include "persona/textprep.hpp"
#include "smo_oracle.hpp"

using namespace persona;

namespace {

enum class Status { kPass, kFail, kSkip };

struct Outcome {
  Status status;
  std::string detail;
};

Outcome pass(std::string d = {}) { return {Status::kPass, std::move(d)}; }
Outcome fail(std::string d) { return {Status::kFail, std::move(d)}; }
Outcome skip(std::string d) { return {Status::kSkip, std::move(d)}; }

std::optional<std::string> env(const char* name) {
  const char* v = std::getenv(name);
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::string(v);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

Outcome smo_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  constexpr std::size_t kInstances = 60;
  double worst_obj = 0.0;
  double worst_kkt = 0.0;
  std::set<std::string> kernels;
  std::set<double> cs;
  for (std::size_t i = 0; i < kInstances; ++i) {
    const auto p = testing::random_problem(2024, i);
    const auto q = testing::gram_q(p);
    const auto oracle = testing::brute_force_dual(q, p.y, p.C);
    svm::KernelQMatrix qm(p.x, p.y, p.kernel, 1.0);
    svm::SolverOptions opt;
    opt.C = p.C;
    opt.tol = 1e-3;
    const auto sol = svm::solve_dual(qm, p.y, opt);
    if (!sol.converged) return fail("instance " + std::to_string(i) + " did not converge");
    worst_obj = std::max(worst_obj, std::abs(sol.objective - oracle.objective));
    worst_kkt = std::max(worst_kkt, testing::kkt_violation(q, p.y, sol.alpha, sol.bias, p.C));
    kernels.insert(p.kernel.kind_name());
    cs.insert(p.C);
  }
  const double elapsed = seconds_since(t0);
  std::string detail = std::to_string(kInstances) + " instances, " + std::to_string(kernels.size()) + " kernels, " +
                       std::to_string(cs.size()) + " C values, max |dobj| " + fmt("%.2e", worst_obj) +
                       ", max KKT violation " + fmt("%.2e", worst_kkt) + ", " + fmt("%.2f", elapsed) + " s";
  const bool ok = worst_obj <= 1e-4 && worst_kkt <= 1e-3 && elapsed < 10.0 && kernels.size() == 2 && cs.size() == 3;
  return ok ? pass(detail) : fail(detail);
}

Outcome analytic_case() {
  Matrix x(2, 1);
  x(0, 0) = 1.0;
  x(1, 0) = -1.0;
  const std::vector<int> y = {1, -1};
  svm::SvmConfig cfg;
  cfg.kernel = svm::KernelSpec::linear();
  cfg.C = 1.0;
  cfg.scale = false;
  const auto r = svm::train_smo(x, y, cfg, 0);
  const auto& a = r.solution.alpha;
  double worst = std::max({std::abs(a[0] - 0.5), std::abs(a[1] - 0.5), std::abs(r.model.bias())});
  for (double v : {-2.0, -0.3, 0.0, 0.7, 3.0}) {
    const std::vector<double> p = {v};
    worst = std::max(worst, std::abs(r.model.decision_function(p) - v));
  }
  const std::string detail = "alpha=(" + fmt("%.9f", a[0]) + ", " + fmt("%.9f", a[1]) + "), b=" +
                             fmt("%.2e", r.model.bias()) + ", max error " + fmt("%.2e", worst);
  return worst <= 1e-6 ? pass(detail) : fail(detail);
}

Outcome dimension_law(const testing::Fixture& fx) {
  const auto bb = eval::variant_by_name("bb-svm");
  const auto m8 = eval::variant_by_name("m8");
  Corpus corpus = fx.corpus;
  corpus.attach_features(fx.psycho);
  const auto& rec = fx.embeddings.front();
  const auto& srec = fx.static_embeddings.front();
  const auto* psycho = corpus.features_for(rec.author_id);
  const auto* spsycho = corpus.features_for(srec.author_id);
  const std::size_t bb_dim = features::build_vector(rec, psycho, bb.pipeline).values.size();
  const std::size_t m8_dim = features::build_vector(srec, spsycho, m8.pipeline).values.size();
  std::size_t mismatched = 0;
  for (const auto& r : fx.embeddings) {
    if (features::build_vector(r, corpus.features_for(r.author_id), bb.pipeline).values.size() != 3156) ++mismatched;
  }
  const std::string detail = "bb-svm " + std::to_string(bb_dim) + " (input " + std::to_string(rec.n_layers) + "x" +
                             std::to_string(rec.dim) + "), m8 " + std::to_string(m8_dim) + " (input " +
                             std::to_string(srec.n_layers) + "x" + std::to_string(srec.dim) + "), " +
                             std::to_string(fx.embeddings.size()) + " chunks checked";
  return bb_dim == 3156 && m8_dim == 384 && mismatched == 0 ? pass(detail) : fail(detail);
}

Outcome preprocessing_golden() {
  using textprep::Sentence;
  std::vector<std::string> failures;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  };
  expect(textprep::expand_contractions({"you're"}) == Sentence{"you", "are"}, "you're -> you are");
  expect(textprep::expand_contractions({"It's", "won't"}) == Sentence{"It", "is", "will", "not"}, "It's won't");
  const auto s = textprep::split_sentences("I run. Do you? yes");
  expect(s == std::vector<Sentence>{{"I", "run"}, {"Do", "you"}, {"yes"}}, "split at . and ?");
  expect(textprep::clean_text("Hello, world!") == "Hello world!", "punctuation filter");
  expect(textprep::clean_text("caf\xC3\xA9 #1") == "caf 1", "non-ASCII filter");
  expect(textprep::clean_text("  \"You're\"\t\n ok?  ") == "\"You're\" ok?", "whitespace collapse");

  Essay e;
  e.author_id = "g";
  e.text = "You're late. Aren't you? I can't say.";
  const auto chunks = textprep::chunk_essay(e);
  const std::vector<Sentence> want = {{"You", "are", "late"}, {"Are", "not", "you"}, {"I", "cannot", "say"}};
  expect(chunks.size() == 1 && chunks[0].sentences == want, "end-to-end chunk");

  if (!failures.empty()) {
    std::string d = "failed:";
    for (const auto& f : failures) d += " [" + f + "]";
    return fail(d);
  }
  return pass("7 golden cases byte-exact");
}

Outcome preprocessing_bounds() {
  const auto essays = env("PERSONA_ESSAYS_CSV");
  if (!essays) return skip("PERSONA_ESSAYS_CSV not set");
  const Corpus corpus = load_essays(*essays);
  std::size_t n_chunks = 0;
  std::size_t dropped = 0;
  std::size_t max_pre = 0;
  std::size_t max_post = 0;
  for (const auto& essay : corpus.essays()) {
    try {
      for (const auto& c : textprep::chunk_essay(essay)) {
        ++n_chunks;
        max_pre = std::max(max_pre, c.pre_expansion_tokens);
        max_post = std::max(max_post, c.token_count);
      }
    } catch (const textprep::EmptyEssayError&) {
      ++dropped;
    }
  }
  const std::string detail = std::to_string(corpus.size()) + " essays, " + std::to_string(n_chunks) +
                             " chunks, max pre " + std::to_string(max_pre) + ", max post " +
                             std::to_string(max_post) + ", dropped " + std::to_string(dropped);
  return max_pre <= 200 && max_post <= 250 ? pass(detail) : fail(detail);
}

Outcome ceb_round_trip() {
  const std::string dir = testing::scratch_dir("acceptance_ceb");
  const std::string path = dir + "/round.ceb";
  std::vector<embed::ChunkEmbeddingSet> recs;
  recs.reserve(1000);
  for (std::uint32_t i = 0; i < 1000; ++i) {
    recs.push_back(testing::random_record(99 + i, "a" + std::to_string(i / 4), i % 4, 3, 16, 2));
  }
  embed::write_embeddings(path, recs);
  const auto back = embed::read_embeddings(path);
  if (back.records() != recs) return fail("records differ after round trip");

  const std::string bytes = testing::read_file(path);
  const std::string trunc = dir + "/trunc.ceb";
  testing::write_file(trunc, bytes.substr(0, bytes.size() - 7));
  bool truncation_caught = false;
  try {
    embed::read_embeddings(trunc);
  } catch (const IntegrityError&) {
    truncation_caught = true;
  }

  std::string nan_bytes = bytes;
  const float nan = std::nanf("");
  // First float of the first record: header, u16 id_len, id, u32 index, u32 tokens.
  const std::size_t off = embed::kHeaderSize + 2 + recs[0].author_id.size() + 4 + 4;
  std::memcpy(nan_bytes.data() + off, &nan, sizeof nan);
  const std::string nanp = dir + "/nan.ceb";
  testing::write_file(nanp, nan_bytes);
  bool nan_caught = false;
  try {
    embed::read_embeddings(nanp);
  } catch (const IntegrityError&) {
    nan_caught = true;
  }
  std::filesystem::remove_all(dir);
  const std::string detail = std::string("1000 records bit-exact, truncation ") +
                             (truncation_caught ? "detected" : "MISSED") + ", NaN " +
                             (nan_caught ? "detected" : "MISSED");
  return truncation_caught && nan_caught ? pass(detail) : fail(detail);
}

int run(const std::vector<std::string>& args, std::string* out_text = nullptr, std::string* err_text = nullptr) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = cli::run_cli(args, out, err);
  if (out_text) *out_text = out.str();
  if (err_text) *err_text = err.str();
  return code;
}

Outcome determinism(const testing::Fixture& fx) {
  std::vector<std::string> reports;
  for (int i = 0; i < 2; ++i) {
    const std::string report = fx.dir + "/report" + std::to_string(i) + ".json";
    std::string err;
    const int code = run({"evaluate", "--essays", fx.essays_csv, "--psycho", fx.psycho_csv, "--chunks",
                          fx.chunks_jsonl, "--embeddings", fx.embeddings_ceb, "--variant", "bb-svm", "--seed", "1",
                          "--report", report},
                         nullptr, &err);
    if (code != 0) return fail("evaluate exited " + std::to_string(code) + ": " + err);
    reports.push_back(testing::read_file(report));
  }
  if (reports[0].empty() || reports[0] != reports[1]) return fail("reports differ between runs");

  std::size_t overlaps = 0;
  for (Trait t : kAllTraits) {
    const auto plan = eval::make_folds(fx.corpus, t, 10, 1);
    for (std::size_t f = 0; f < plan.k; ++f) {
      std::set<std::string> test;
      std::set<std::string> train;
      for (const auto& [id, fold] : plan.assignments) (fold == f ? test : train).insert(id);
      for (const auto& id : test) overlaps += train.count(id);
    }
  }
  const std::string detail = "2 runs, " + std::to_string(reports[0].size()) +
                             " bytes identical; author overlap across 5 traits x 10 folds: " +
                             std::to_string(overlaps);
  return overlaps == 0 ? pass(detail) : fail(detail);
}

// ---------------------------------------------------------------------------
// Dataset-backed

Outcome majority_baseline() {
  const auto essays = env("PERSONA_ESSAYS_CSV");
  if (!essays) return skip("PERSONA_ESSAYS_CSV not set");
  const Corpus corpus = load_essays(*essays);
  eval::EvalData data;
  data.corpus = &corpus;
  eval::EvalConfig cfg;
  const auto r = eval::run_cv(data, eval::variant_by_name("majority-baseline"), cfg);
  const double want[kTraitCount] = {51.72, 50.20, 53.10, 50.79, 51.52};
  auto round2 = [](double v) { return std::round(v * 10000.0) / 100.0; };
  bool ok = true;
  std::string detail;
  for (std::size_t i = 0; i < kTraitCount; ++i) {
    const double got = round2(r.per_trait[i].mean_accuracy);
    ok = ok && got == want[i];
    detail += std::string(trait_name(kAllTraits[i])) + " " + fmt("%.2f", got) + " (want " + fmt("%.2f", want[i]) +
              "), ";
  }
  const double avg = round2(r.average_accuracy);
  ok = ok && avg == 51.43;
  detail += "avg " + fmt("%.2f", avg) + " (want 51.43)";
  return ok ? pass(detail) : fail(detail);
}

struct DatasetPaths {
  std::string essays, psycho, embeddings, static_embeddings;
};

std::optional<DatasetPaths> dataset_paths(bool need_static) {
  const auto e = env("PERSONA_ESSAYS_CSV");
  const auto p = env("PERSONA_PSYCHO_CSV");
  const auto m = env("PERSONA_EMBEDDINGS_CEB");
  const auto s = env("PERSONA_STATIC_CEB");
  if (!e || !p || !m || (need_static && !s)) return std::nullopt;
  return DatasetPaths{*e, *p, *m, s.value_or("")};
}

Outcome bb_svm_replication() {
  const auto paths = dataset_paths(true);
  if (!paths) return skip("PERSONA_ESSAYS_CSV/PSYCHO_CSV/EMBEDDINGS_CEB/STATIC_CEB not all set");
  Corpus corpus = load_essays(paths->essays);
  load_psycho_features(paths->psycho, corpus);
  std::vector<textprep::Chunk> chunks;
  for (const auto& essay : corpus.essays()) {
    for (auto& c : textprep::chunk_essay(essay)) chunks.push_back(std::move(c));
  }
  const auto emb = embed::read_embeddings(paths->embeddings);
  const auto st = embed::read_embeddings(paths->static_embeddings);
  eval::EvalData data{&corpus, &chunks, &emb, &st};
  eval::EvalConfig cfg;
  auto grid = eval::AblationGrid::defaults();
  const auto result = eval::ablate(data, grid, cfg);

  const eval::EvalReport* bb = nullptr;
  for (const auto& r : result.reports) {
    if (r.variant == "bb-svm") bb = &r;
  }
  if (bb == nullptr) return fail("bb-svm did not run");
  const double avg = bb->average_accuracy * 100.0;
  bool ok = std::abs(avg - 59.03) <= 1.5;
  std::string detail = "bb-svm avg " + fmt("%.2f", avg) + " (target 59.03 +- 1.5)";
  std::size_t checked = 0;
  for (const auto& o : result.orderings) {
    ok = ok && o.holds;
    ++checked;
    detail += "; " + o.better + " > " + o.worse + (o.holds ? " holds" : " FAILS");
  }
  ok = ok && checked == 3;
  detail += std::string("; grid ") + (result.target_reached ? "reaches" : "does not reach") +
            " 59.03 +- 0.5 (closest " + result.closest_variant + " " +
            fmt("%.2f", result.closest_average) + ")";
  return ok ? pass(detail) : fail(detail);
}

Outcome training_cost() {
  const auto paths = dataset_paths(false);
  if (!paths) return skip("PERSONA_ESSAYS_CSV/PSYCHO_CSV/EMBEDDINGS_CEB not all set");
  const std::string dir = testing::scratch_dir("acceptance_train");
  const std::string chunks = dir + "/chunks.jsonl";
  std::string err;
  if (run({"preprocess", "--essays", paths->essays, "--out", chunks}, nullptr, &err) != 0) {
    return fail("preprocess failed: " + err);
  }
  const auto t0 = std::chrono::steady_clock::now();
  const int code = run({"train", "--essays", paths->essays, "--psycho", paths->psycho, "--chunks", chunks,
                        "--embeddings", paths->embeddings, "--model-dir", dir + "/model", "--variant", "bb-svm"},
                       nullptr, &err);
  const double elapsed = seconds_since(t0);
  std::filesystem::remove_all(dir);
  if (code != 0) return fail("train exited " + std::to_string(code) + ": " + err);
  const std::string detail = "5 traits x 10 bags in " + fmt("%.1f", elapsed) + " s (limit 900 s)";
  return elapsed <= 900.0 ? pass(detail) : fail(detail);
}

}  // namespace

int main() {
  std::optional<testing::Fixture> fixture;
  auto with_fixture = [&](const std::function<Outcome(const testing::Fixture&)>& f) {
    return [&, f]() -> Outcome {
      if (!fixture) {
        testing::FixtureOptions opt;
        opt.essays = 50;
        fixture = testing::build_fixture(testing::scratch_dir("acceptance_fixture"), opt);
      }
      return f(*fixture);
    };
  };

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"smo-oracle-equivalence", smo_oracle},
      {"analytic-svm-case", analytic_case},
      {"dimension-law", with_fixture(dimension_law)},
      {"preprocessing-golden", preprocessing_golden},
      {"preprocessing-chunk-bounds-full-corpus", preprocessing_bounds},
      {"ceb1-round-trip", ceb_round_trip},
      {"determinism-and-fold-isolation", with_fixture(determinism)},
      {"majority-baseline-exact", majority_baseline},
      {"bb-svm-accuracy-and-orderings", bb_svm_replication},
      {"training-cost", training_cost},
  };

  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = fail(std::string("exception: ") + e.what());
    }
    const char* tag = o.status == Status::kPass ? "PASS" : o.status == Status::kFail ? "FAIL" : "SKIP";
    if (o.status == Status::kFail) ++failures;
    std::printf("%s %s: %s\n", tag, name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  if (fixture) std::filesystem::remove_all(fixture->dir);
  return failures == 0 ? 0 : 1;
}
