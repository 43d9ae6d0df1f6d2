#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "storyscore/corpus.hpp"
#include "storyscore/linear_models.hpp"
#include "storyscore/llm_scoring.hpp"
#include "storyscore/metrics.hpp"

namespace storyscore {

enum class Scorer { linear, llm };
std::string to_string(Scorer s);
Scorer parse_scorer(std::string_view s);

struct LinearSettings {
  int grid_size = 50;
  // The harness floor is higher than the standalone tuner default: past
  // roughly alpha_max/100 every alpha overfits wide vocabulary matrices and
  // dev scores just get noisier.
  double alpha_min_ratio = 1e-2;

  bool operator==(const LinearSettings&) const = default;
};

// Everything one grid cell needs. A run is reproducible from this plus the
// corpus file (and a warm cache when the backend is remote).
struct RunConfig {
  std::filesystem::path corpus_path;
  std::optional<Language> language;  // checked against the corpus when set
  TranscriptVariant variant = TranscriptVariant::oracle;
  Scorer scorer = Scorer::linear;
  // When set, fills the asr variant by corrupting oracle transcripts at this
  // character error rate. Requires variant = asr.
  std::optional<double> corrupt_cer;
  std::uint64_t seed = 1;
  LinearSettings linear;
  BackendConfig backend;
  std::filesystem::path out_dir;

  bool operator==(const RunConfig&) const = default;
};

nlohmann::ordered_json run_config_to_json(const RunConfig& config);
RunConfig run_config_from_json(const nlohmann::json& j);
std::string run_config_digest(const RunConfig& config);

// One prediction row as written to predictions.jsonl. The ri flag comes from
// its own classifier head (linear) or the derived flag (llm), so it is kept
// as stored rather than re-derived from sc.
struct PredRow {
  std::string child_id;
  double ns = 0.0;
  double cq = 0.0;
  int sc = 1;
  bool ri = false;

  bool operator==(const PredRow&) const = default;
};

std::string predictions_to_jsonl(const std::vector<PredRow>& rows);
std::vector<PredRow> predictions_from_jsonl(std::string_view text,
                                            const std::string& source_name);
std::vector<PredRow> load_predictions(const std::filesystem::path& path);

// Aligns predictions with corpus truth by child_id and evaluates all four
// tasks. Every prediction must match a record that carries truth scores.
ScoreComparison evaluate_predictions(const Corpus& truth, const std::vector<PredRow>& preds);

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct ArtifactRef {
  std::string path;  // relative to the run's out_dir
  std::string digest;
};

struct RunManifest {
  std::string config_digest;
  nlohmann::ordered_json config;
  std::string corpus_fingerprint;
  Scorer scorer = Scorer::linear;
  TranscriptVariant variant = TranscriptVariant::oracle;
  std::vector<ArtifactRef> artifacts;
  ScoreComparison reports;
  std::vector<StageTiming> timings;
  size_t examples_dropped = 0;
  size_t backend_calls = 0;
  size_t cache_hits = 0;

  nlohmann::ordered_json to_json() const;
  static RunManifest from_json(const nlohmann::ordered_json& j);
};

// Executes one grid cell: load, optional corrupt, featurize + tune (linear)
// or prompt + score (llm), evaluate on test records, write artifacts and the
// manifest under config.out_dir.
RunManifest run_experiment(const RunConfig& config);

// Checks that every artifact recorded in out_dir/manifest.json exists and
// still matches its digest. Throws on the first mismatch.
RunManifest verify_manifest(const std::filesystem::path& out_dir);

struct GridResult {
  std::vector<RunManifest> manifests;  // one per config, same order
  std::string table_text;
  nlohmann::ordered_json table_json;
};

// Runs every cell concurrently and renders one comparison table: a row per
// scorer, a column block per transcript variant with NS R², CQ R², SC kappa
// and RI accuracy %. Optional human scores add a reference row, evaluated
// against truth once and shown under the first variant.
GridResult run_grid(const std::vector<RunConfig>& configs,
                    const std::vector<PredRow>& human_scores = {});

}  // namespace storyscore
