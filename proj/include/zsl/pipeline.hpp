#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "zsl/classify.hpp"
#include "zsl/csv.hpp"
#include "zsl/dataset.hpp"
#include "zsl/embedding.hpp"
#include "zsl/gp.hpp"

namespace zsl {

enum class EmbedMode { BalancedTriplet, StandardTriplet, NoEmbedding };
enum class RegressorMode { Gp, Krr };

std::string to_string(EmbedMode m);
std::string to_string(RegressorMode m);

struct RunConfig {
  // Exactly one of data_dir / synth.
  std::string data_dir;
  std::optional<SynthSpec> synth;

  PreprocessConfig preprocess;
  TripletConfig triplet;
  GpFitConfig gp;
  KrrConfig krr;  // lengthscale <= 0 resolves to the median heuristic
  GammaGridSpec gamma_grid;

  EmbedMode embed_mode = EmbedMode::BalancedTriplet;
  RegressorMode regressor_mode = RegressorMode::Gp;
  bool freeze_gp_at_test = false;  // reuse validation-stage hyperparameters
  std::optional<double> gamma_override;

  // Per-class fraction of samples reserved as final seen-side test probes,
  // and the fraction of the remainder held out as validation-seen probes.
  double seen_test_fraction = 0.2;
  double val_holdout_fraction = 0.2;

  std::uint64_t seed = 1;
  std::filesystem::path out_dir;  // empty: keep results in memory only
};

enum class PipelineStop { Embedding, ValRegressor, Calibrate, Full };

// Deterministic per-class sample partition (seeded, stratified).
struct SamplePartition {
  std::vector<int> embed_train_rows;  // train_seen minus both holdouts
  std::vector<int> val_probe_rows;    // val-seen probes + val-class rows
  std::vector<int> final_proto_rows;  // train_seen + val classes minus test
  std::vector<int> seen_test_rows;    // reserved seen-side test probes
  std::vector<int> unseen_test_rows;  // every test_unseen row
};

struct PipelineResult {
  Dataset data;  // preprocessed
  FeatureStats raw_feature_stats;
  SamplePartition partition;

  LinearEmbedding embedding;
  std::vector<double> loss_trace;

  std::optional<GpModel> val_gp;
  std::optional<GpModel> final_gp;
  PrototypeSet final_prototypes;

  double gamma = 0.0;
  EvalReport report;

  Manifest manifest;
};

// Runs load/synth -> partition -> embedding -> validation regressor +
// calibration -> final regressor -> evaluation, stopping where asked.
// Artifacts are written under cfg.out_dir when it is set and stop == Full.
PipelineResult run_pipeline(const RunConfig& cfg,
                            PipelineStop stop = PipelineStop::Full);

inline PipelineResult run_all(const RunConfig& cfg) {
  return run_pipeline(cfg, PipelineStop::Full);
}

// Round-trip of every setting that affects results; a config rebuilt from a
// manifest reproduces the run bit for bit.
Manifest config_to_manifest(const RunConfig& cfg);
RunConfig config_from_manifest(const Manifest& m);

struct AblateRow {
  std::string value;
  bool ok = false;
  std::string error;
  EvalReport report;
};

// Reruns the pipeline once per value of "clip" (number or "none") or
// "delta", same seed throughout. Failures mark the row instead of aborting.
std::vector<AblateRow> ablate(const RunConfig& base, const std::string& param,
                              const std::vector<std::string>& values);

void save_ablate_csv(const std::vector<AblateRow>& rows,
                     const std::filesystem::path& file);

}  // namespace zsl
