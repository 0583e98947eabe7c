#include "lsf/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>
#include <unordered_map>

#include "lsf/error.hpp"

namespace lsf {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void log_line(const PipelineConfig& config, const std::string& msg) {
  if (config.log) *config.log << msg << '\n';
}

std::filesystem::path report_dir(const PipelineConfig& config) {
  if (!config.out_dir.empty()) {
    std::filesystem::create_directories(config.out_dir);
    return config.out_dir;
  }
  const auto parent = config.model_path.parent_path();
  return parent.empty() ? std::filesystem::path(".") : parent;
}

void require_path(const std::filesystem::path& p, const char* what) {
  if (p.empty()) throw UsageError(std::string(what) + " path is not set");
  if (!std::filesystem::exists(p)) throw DataError(p.string() + ": " + what + " not found");
}

Eigen::MatrixXd stack(std::span<const PooledFeature> features) {
  if (features.empty()) throw DataError("no features");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(features.size()), features.front().values.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].values.size() != m.cols()) throw DataError(features[i].video_id + ": inconsistent feature width");
    m.row(static_cast<Eigen::Index>(i)) = features[i].values.transpose();
  }
  return m;
}

std::vector<std::string> ids_of(std::span<const PooledFeature> features) {
  std::vector<std::string> ids;
  ids.reserve(features.size());
  for (const auto& f : features) ids.push_back(f.video_id);
  return ids;
}

std::vector<std::string> task_class_names(const DatasetManifest& manifest, LabelTask task) {
  if (task == LabelTask::foreground) return {"background_only", "foreground"};
  return manifest.class_names;
}

}  // namespace

LabelTask parse_label_task(const std::string& name) {
  if (name == "background") return LabelTask::background;
  if (name == "foreground") return LabelTask::foreground;
  throw UsageError("unknown label task '" + name + "' (expected background or foreground)");
}

std::string to_string(LabelTask task) { return task == LabelTask::background ? "background" : "foreground"; }

std::uint64_t stage_seed(std::uint64_t seed, SeedStage stage) {
  return seed * 1000003ULL + static_cast<std::uint64_t>(stage);
}

std::pair<std::vector<int>, int> labels_for(const DatasetManifest& manifest, std::span<const PooledFeature> features,
                                            LabelTask task) {
  std::unordered_map<std::string, const ManifestEntry*> by_id;
  for (const auto& e : manifest.entries) by_id.emplace(e.video_id, &e);
  std::vector<int> labels;
  labels.reserve(features.size());
  for (const auto& f : features) {
    const auto it = by_id.find(f.video_id);
    if (it == by_id.end()) throw DataError("video '" + f.video_id + "' is not in the manifest");
    const ManifestEntry& e = *it->second;
    if (task == LabelTask::background) {
      if (!e.background_label) throw DataError("video '" + f.video_id + "' has no background label");
      labels.push_back(*e.background_label);
    } else {
      if (!e.foreground) throw DataError("video '" + f.video_id + "' has no foreground flag");
      labels.push_back(*e.foreground ? 1 : 0);
    }
  }
  return {std::move(labels), task == LabelTask::background ? manifest.num_classes() : 2};
}

TrainFusionResult run_train_fusion(const PipelineConfig& config) {
  require_path(config.train_manifest, "train manifest");
  const DatasetManifest manifest = load_manifest(config.train_manifest);
  if (manifest.entries.empty()) throw DataError(config.train_manifest.string() + ": manifest is empty");

  std::uint64_t population = 0;
  for (const auto& e : manifest.entries) {
    if (!e.background_label) throw DataError("train manifest entry '" + e.video_id + "' has no background label");
    population += count_descriptor_rows(e.descriptor_path, config.widths);
  }
  const std::size_t sample = std::min<std::uint64_t>(config.sample_size, population);
  log_line(config, "sampling " + std::to_string(sample) + " of " + std::to_string(population) + " descriptor rows");
  const LabeledDescriptorBatch batch =
      sample_labeled_rows(manifest, sample, stage_seed(config.seed, SeedStage::sampling), config.widths);

  const LayerDims dims{static_cast<Eigen::Index>(config.widths.total()), config.hidden, config.code};
  LsfNetModel model = init_model(dims, manifest.num_classes(), stage_seed(config.seed, SeedStage::init), {},
                                 config.train.init_gain);
  TrainConfig tc = config.train;
  tc.seed = stage_seed(config.seed, SeedStage::shuffle);

  TrainFusionResult result;
  result.sampled_rows = sample;
  result.training = train(model, batch, tc, [&](int epoch, double l1, double l2) {
    std::ostringstream os;
    os << "epoch " << epoch << " L1 " << l1 << " L2 " << l2;
    log_line(config, os.str());
  });

  save_model(config.model_path, model);
  save_model_sidecar(config.model_path, model);

  result.loss_csv = report_dir(config) / (config.model_path.filename().string() + ".loss.csv");
  std::ofstream out(result.loss_csv, std::ios::trunc);
  if (!out) throw DataError(result.loss_csv.string() + ": cannot open for writing");
  out << "epoch,batch,l1,l2\n" << std::setprecision(17);
  for (const auto& r : result.training.history) {
    out << r.epoch << ',' << r.batch << ',' << r.reconstruction << ',' << r.classification << '\n';
  }
  return result;
}

PooledFeature extract_feature(const LsfNetModel& model, const DescriptorMatrix& descriptors) {
  return average_pool(descriptors.video_id(), encode(model, descriptors.to_double()));
}

ExtractResult run_extract(const PipelineConfig& config, const std::filesystem::path& manifest_path) {
  require_path(config.model_path, "model");
  require_path(manifest_path, "manifest");
  const LsfNetModel model = load_model(config.model_path);
  const DatasetManifest manifest = load_manifest(manifest_path);
  ExtractResult result;
  for (const auto& e : manifest.entries) {
    try {
      const DescriptorMatrix d = load_descriptors(e.descriptor_path, config.widths);
      PooledFeature f = extract_feature(model, d);
      f.video_id = e.video_id;
      result.features.push_back(std::move(f));
    } catch (const Error& err) {
      result.failures.push_back(e.video_id + ": " + err.what());
    }
  }
  write_features_csv(config.features_path, result.features);
  log_line(config, "extracted " + std::to_string(result.features.size()) + " features, " +
                       std::to_string(result.failures.size()) + " failures");
  return result;
}

FitSelectorResult run_fit_selector(const PipelineConfig& config) {
  require_path(config.features_path, "features file");
  require_path(config.train_manifest, "train manifest");
  const auto features = read_features_csv(config.features_path);
  const DatasetManifest manifest = load_manifest(config.train_manifest);
  const auto [labels, classes] = labels_for(manifest, features, config.selector_task);
  FitSelectorResult r;
  r.fisher = fisher_scores(stack(features), labels, classes);
  if (r.fisher.single_class) log_line(config, "warning: all labels identical, Fisher scores are zero");
  r.selector = fit_selector(r.fisher.scores, config.q);
  save_selector(config.selector_path, r.selector);
  export_selector_csv(config.selector_path.string() + ".csv", r.selector);
  return r;
}

ProjectionIndex run_build_index(const PipelineConfig& config) {
  require_path(config.features_path, "features file");
  require_path(config.selector_path, "selector");
  require_path(config.train_manifest, "train manifest");
  const auto features = read_features_csv(config.features_path);
  const FeatureSelector selector = load_selector(config.selector_path);
  const DatasetManifest manifest = load_manifest(config.train_manifest);
  const auto [labels, classes] = labels_for(manifest, features, config.task);
  const auto ids = ids_of(features);
  ProjectionIndex index = build_index(apply_selection(selector, stack(features)), labels, ids,
                                      static_cast<Eigen::Index>(config.num_hashes),
                                      stage_seed(config.seed, SeedStage::index), classes);
  save_index(config.index_path, index);
  return index;
}

ClassifyResult run_classify(const PipelineConfig& config, const std::filesystem::path& descriptors) {
  require_path(config.model_path, "model");
  require_path(config.selector_path, "selector");
  require_path(config.index_path, "index");
  require_path(descriptors, "descriptor file");
  const LsfNetModel model = load_model(config.model_path);
  const FeatureSelector selector = load_selector(config.selector_path);
  const ProjectionIndex index = load_index(config.index_path);
  const DescriptorMatrix d = load_descriptors(descriptors, config.widths);

  ClassifyResult r;
  r.vote = classify(index, apply_selection(selector, extract_feature(model, d).values), config.neighbours);
  if (!config.train_manifest.empty() && std::filesystem::exists(config.train_manifest)) {
    r.class_names = task_class_names(load_manifest(config.train_manifest), config.task);
  }
  if (static_cast<int>(r.class_names.size()) != index.num_classes()) {
    r.class_names.clear();
    for (int c = 0; c < index.num_classes(); ++c) r.class_names.push_back("class" + std::to_string(c));
  }
  return r;
}

std::vector<std::pair<std::size_t, std::size_t>> evaluation_pairs(const PipelineConfig& config) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  if (config.random_pairs) {
    if (config.random_pair_count == 0) throw UsageError("random pair count must be positive");
    std::mt19937_64 rng(stage_seed(config.seed, SeedStage::pairs));
    std::uniform_int_distribution<std::size_t> hashes(10, 50);
    std::uniform_int_distribution<std::size_t> neighbours(50, 100);
    for (std::size_t i = 0; i < config.random_pair_count; ++i) {
      const std::size_t n = hashes(rng);
      pairs.emplace_back(n, neighbours(rng));
    }
    return pairs;
  }
  if (config.sweep_hashes.empty() || config.sweep_neighbours.empty()) throw UsageError("(N, K) sweep is empty");
  for (auto n : config.sweep_hashes) {
    for (auto k : config.sweep_neighbours) pairs.emplace_back(n, k);
  }
  return pairs;
}

EvalReport run_evaluate(const PipelineConfig& config) {
  require_path(config.model_path, "model");
  require_path(config.selector_path, "selector");
  require_path(config.features_path, "features file");
  require_path(config.train_manifest, "train manifest");
  require_path(config.test_manifest, "test manifest");

  EvalReport report;
  report.task = config.task;
  report.default_hashes = config.num_hashes;
  report.default_neighbours = config.neighbours;

  auto start = Clock::now();
  const LsfNetModel model = load_model(config.model_path);
  const FeatureSelector selector = load_selector(config.selector_path);
  const auto train_features = read_features_csv(config.features_path);
  const DatasetManifest train_manifest = load_manifest(config.train_manifest);
  const auto [train_labels, classes] = labels_for(train_manifest, train_features, config.task);
  const Eigen::MatrixXd train_selected = apply_selection(selector, stack(train_features));
  const auto train_ids = ids_of(train_features);
  report.class_names = task_class_names(train_manifest, config.task);
  report.train_count = train_features.size();
  report.timings_seconds.emplace_back("load", seconds_since(start));

  start = Clock::now();
  const DatasetManifest test_manifest = load_manifest(config.test_manifest);
  std::vector<PooledFeature> test_features;
  for (const auto& e : test_manifest.entries) {
    PooledFeature f = extract_feature(model, load_descriptors(e.descriptor_path, config.widths));
    f.video_id = e.video_id;
    test_features.push_back(std::move(f));
  }
  const auto [test_labels, test_classes] = labels_for(test_manifest, test_features, config.task);
  if (test_classes != classes) throw DataError("train and test manifests disagree on the class count");
  const Eigen::MatrixXd test_selected = apply_selection(selector, stack(test_features));
  report.test_count = test_features.size();
  report.timings_seconds.emplace_back("extract_test", seconds_since(start));

  auto run_pair = [&, &train_labels = train_labels, &test_labels = test_labels, classes = classes](
                      std::size_t n, std::size_t k, Eigen::MatrixXi* confusion) {
    const ProjectionIndex index = build_index(train_selected, train_labels, train_ids, static_cast<Eigen::Index>(n),
                                              stage_seed(config.seed, SeedStage::index), classes);
    std::size_t correct = 0;
    for (Eigen::Index i = 0; i < test_selected.rows(); ++i) {
      const Vote v = classify(index, test_selected.row(i).transpose(), k);
      const int truth = test_labels[static_cast<std::size_t>(i)];
      correct += v.predicted == truth ? 1 : 0;
      if (confusion) ++(*confusion)(truth, v.predicted);
    }
    return static_cast<double>(correct) / static_cast<double>(test_selected.rows());
  };

  start = Clock::now();
  report.confusion = Eigen::MatrixXi::Zero(classes, classes);
  report.accuracy = run_pair(config.num_hashes, config.neighbours, &report.confusion);
  report.timings_seconds.emplace_back("classify_default_pair", seconds_since(start));

  start = Clock::now();
  double sum = 0.0;
  for (const auto& [n, k] : evaluation_pairs(config)) {
    const double acc = run_pair(n, k, nullptr);
    report.pairs.push_back({n, k, acc});
    sum += acc;
    log_line(config, "N=" + std::to_string(n) + " K=" + std::to_string(k) + " accuracy=" + std::to_string(acc));
  }
  report.mean_accuracy = sum / static_cast<double>(report.pairs.size());
  report.timings_seconds.emplace_back("sweep", seconds_since(start));

  if (!config.out_dir.empty()) write_eval_report(config.out_dir, report);
  return report;
}

std::string format_eval_report(const EvalReport& r) {
  std::ostringstream os;
  os << std::setprecision(6) << std::fixed;
  os << "task: " << to_string(r.task) << '\n';
  os << "classes: " << r.class_names.size() << '\n';
  os << "train_videos: " << r.train_count << '\n';
  os << "test_videos: " << r.test_count << '\n';
  os << "default_pair: N=" << r.default_hashes << " K=" << r.default_neighbours << '\n';
  os << "accuracy: " << r.accuracy << '\n';
  os << "mean_accuracy: " << r.mean_accuracy << '\n';
  os << "pairs:\n";
  for (const auto& p : r.pairs) os << "  N=" << p.hashes << " K=" << p.neighbours << " accuracy=" << p.accuracy << '\n';
  os << "confusion (rows true, cols predicted):\n";
  for (Eigen::Index i = 0; i < r.confusion.rows(); ++i) {
    os << "  " << std::left << std::setw(16) << (static_cast<std::size_t>(i) < r.class_names.size() ? r.class_names[i] : "?");
    os << std::right;
    for (Eigen::Index j = 0; j < r.confusion.cols(); ++j) os << ' ' << std::setw(5) << r.confusion(i, j);
    os << '\n';
  }
  os << "timings_seconds:\n";
  for (const auto& [stage, secs] : r.timings_seconds) os << "  " << stage << ": " << secs << '\n';
  return os.str();
}

void write_eval_report(const std::filesystem::path& dir, const EvalReport& report) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "eval_report.txt", std::ios::trunc);
    if (!out) throw DataError((dir / "eval_report.txt").string() + ": cannot open for writing");
    out << format_eval_report(report);
  }
  std::ofstream out(dir / "confusion.csv", std::ios::trunc);
  if (!out) throw DataError((dir / "confusion.csv").string() + ": cannot open for writing");
  out << "true\\predicted";
  for (const auto& n : report.class_names) out << ',' << n;
  out << '\n';
  for (Eigen::Index i = 0; i < report.confusion.rows(); ++i) {
    out << report.class_names[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < report.confusion.cols(); ++j) out << ',' << report.confusion(i, j);
    out << '\n';
  }
}

}  // namespace lsf
