#pragma once

// Stage-wise orchestration: train the fusion network on sampled descriptors,
// extract pooled per-video features, fit the Fisher selector, build the
// projection index, classify and evaluate. Every stage persists its artifact
// so stages can be re-run independently.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "lsf/descriptor_io.hpp"
#include "lsf/feature_pipeline.hpp"
#include "lsf/lsfnet.hpp"
#include "lsf/similarity_index.hpp"

namespace lsf {

enum class LabelTask { background, foreground };

LabelTask parse_label_task(const std::string& name);
std::string to_string(LabelTask task);

struct PipelineConfig {
  std::filesystem::path train_manifest;
  std::filesystem::path test_manifest;
  std::filesystem::path model_path = "lsf.model";
  std::filesystem::path selector_path = "lsf.selector";
  std::filesystem::path index_path = "lsf.index";
  std::filesystem::path features_path = "features.csv";
  std::filesystem::path out_dir;  // reports and loss curves; empty: next to the model

  BlockWidths widths;
  Eigen::Index hidden = 256;
  Eigen::Index code = 128;
  TrainConfig train;
  std::size_t sample_size = 1'000'000;  // capped at the number of available rows

  double q = 50.0;
  LabelTask selector_task = LabelTask::background;
  LabelTask task = LabelTask::background;

  std::size_t num_hashes = 30;
  std::size_t neighbours = 64;
  std::vector<std::size_t> sweep_hashes{10, 20, 30, 40, 50};
  std::vector<std::size_t> sweep_neighbours{50, 75, 100};
  bool random_pairs = false;
  std::size_t random_pair_count = 15;

  std::uint64_t seed = 42;
  std::ostream* log = nullptr;  // progress messages; null is silent
};

/// Stage seeds are derived from the one pipeline seed.
enum class SeedStage : std::uint64_t { sampling = 1, init = 2, shuffle = 3, index = 4, pairs = 5 };
std::uint64_t stage_seed(std::uint64_t seed, SeedStage stage);

/// Labels of `features` (matched by video id) for the given task, and the
/// class count of that task (the manifest's classes, or 2 for foreground).
std::pair<std::vector<int>, int> labels_for(const DatasetManifest& manifest,
                                            std::span<const PooledFeature> features, LabelTask task);

struct TrainFusionResult {
  TrainResult training;
  std::size_t sampled_rows = 0;
  std::filesystem::path loss_csv;
};
TrainFusionResult run_train_fusion(const PipelineConfig& config);

/// encode -> average_pool for one descriptor matrix.
PooledFeature extract_feature(const LsfNetModel& model, const DescriptorMatrix& descriptors);

struct ExtractResult {
  std::vector<PooledFeature> features;  // manifest order, failed videos omitted
  std::vector<std::string> failures;    // "<video_id>: <reason>"
};
/// Writes the features file (config.features_path) from `manifest`.
ExtractResult run_extract(const PipelineConfig& config, const std::filesystem::path& manifest);

struct FitSelectorResult {
  FeatureSelector selector;
  FisherResult fisher;
};
FitSelectorResult run_fit_selector(const PipelineConfig& config);

ProjectionIndex run_build_index(const PipelineConfig& config);

struct ClassifyResult {
  Vote vote;
  std::vector<std::string> class_names;
};
ClassifyResult run_classify(const PipelineConfig& config, const std::filesystem::path& descriptors);

struct PairAccuracy {
  std::size_t hashes;
  std::size_t neighbours;
  double accuracy;
};

struct EvalReport {
  LabelTask task = LabelTask::background;
  std::vector<std::string> class_names;
  std::size_t train_count = 0;
  std::size_t test_count = 0;
  std::size_t default_hashes = 0;
  std::size_t default_neighbours = 0;
  double accuracy = 0.0;      // at the default pair
  Eigen::MatrixXi confusion;  // rows: true class, cols: predicted; at the default pair
  std::vector<PairAccuracy> pairs;
  double mean_accuracy = 0.0;
  std::vector<std::pair<std::string, double>> timings_seconds;
};

/// (N, K) pairs evaluated by run_evaluate: the fixed grid, or seeded random
/// draws from N in [10, 50] and K in [50, 100] when random_pairs is set.
std::vector<std::pair<std::size_t, std::size_t>> evaluation_pairs(const PipelineConfig& config);

/// Classifies every test video for every (N, K) pair, rebuilding the index
/// deterministically per pair from the training features.
EvalReport run_evaluate(const PipelineConfig& config);

/// Human-readable "key: value" report.
std::string format_eval_report(const EvalReport& report);
/// Writes <dir>/eval_report.txt and <dir>/confusion.csv.
void write_eval_report(const std::filesystem::path& dir, const EvalReport& report);

}  // namespace lsf
