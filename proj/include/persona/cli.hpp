#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "persona/ensemble.hpp"
#include "persona/features.hpp"
#include "persona/svm.hpp"
#include "persona/textprep.hpp"
#include "persona/traits.hpp"

namespace persona::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitIngest = 2;
inline constexpr int kExitIntegrity = 3;

// Declarative run configuration. Loaded from JSON (unknown keys rejected);
// every field can be overridden by a command-line flag.
struct RunConfig {
  struct Paths {
    std::string essays_csv;
    std::string psycho_csv;
    std::string chunks_jsonl;
    std::string embeddings_ceb;
    std::string static_embeddings_ceb;
    std::string model_dir;
    std::string report_json;
    std::string output;  // predictions CSV or chunks output, depending on the command
  } paths;

  textprep::ChunkPlan chunking;

  std::string variant = "bb-svm";
  std::optional<std::string> layers;  // overrides the variant's selector
  std::optional<std::string> pooling;
  std::optional<bool> psycho;
  std::optional<bool> scaling;

  svm::SvmConfig svm;
  ensemble::BaggingSpec bagging;

  std::size_t k = 10;
  std::uint64_t seed = 1;
  std::string grid_json;  // ablation grid file
  std::vector<Trait> traits{kAllTraits.begin(), kAllTraits.end()};
  std::size_t threads = 0;  // 0: PERSONA_THREADS or hardware concurrency
  bool include_runtime = false;

  static RunConfig from_json(std::string_view text);
  std::string to_json() const;
};

// Runs one invocation (args excludes the program name). Returns the exit code:
// 0 ok, 1 usage, 2 ingestion, 3 coverage or integrity. Non-convergence of an
// SVM member is reported on err and still exits 0.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace persona::cli
