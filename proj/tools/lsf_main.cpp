// lsf: command-line front end for the fusion / selection / retrieval pipeline.
//
// Exit codes: 0 success, 1 usage, 2 data or format error, 3 numeric divergence.

#include <algorithm>
#include <array>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lsf/error.hpp"
#include "lsf/lsfnet.hpp"
#include "lsf/pipeline.hpp"
#include "lsf/synthetic.hpp"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

void print_top_components(const lsf::FeatureSelector& selector, std::size_t count) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(selector.scores.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return selector.scores(a) > selector.scores(b); });
  std::cout << "top components by Fisher score:\n";
  for (std::size_t i = 0; i < std::min(count, order.size()); ++i) {
    std::cout << "  " << std::setw(4) << order[i] << "  " << std::setprecision(6) << selector.scores(order[i])
              << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Loss-switching fusion features with Fisher selection and projection-hash retrieval"};
  app.set_config("--config", "", "key=value configuration file");
  app.require_subcommand(1);
  app.fallthrough();

  lsf::PipelineConfig cfg;
  std::string train_manifest, test_manifest, model = cfg.model_path.string(), selector = cfg.selector_path.string(),
                                              index = cfg.index_path.string(), features = cfg.features_path.string(),
                                              out;
  std::array<std::uint32_t, 4> widths = cfg.widths.as_array();
  std::string task = "background", selector_task = "background";
  bool quiet = false;

  app.add_option("--train-manifest", train_manifest, "Training split manifest");
  app.add_option("--test-manifest", test_manifest, "Test split manifest");
  app.add_option("--model", model, "Model file")->capture_default_str();
  app.add_option("--selector", selector, "Selector file")->capture_default_str();
  app.add_option("--index", index, "Index file")->capture_default_str();
  app.add_option("--features", features, "Features CSV")->capture_default_str();
  app.add_option("--out", out, "Output directory for reports and loss curves");
  app.add_option("--seed", cfg.seed, "Pipeline seed")->capture_default_str();
  app.add_flag("--quiet", quiet, "Suppress progress output");
  app.add_option("--block-widths", widths, "Descriptor block widths (trajectory hog hof mbh)")->capture_default_str();
  app.add_option("--hidden", cfg.hidden, "Hidden layer width")->capture_default_str();
  app.add_option("--code", cfg.code, "Encoding layer width")->capture_default_str();
  app.add_option("--lr-autoencoder", cfg.train.lr_autoencoder)->capture_default_str();
  app.add_option("--lr-classifier", cfg.train.lr_classifier)->capture_default_str();
  app.add_option("--epochs", cfg.train.epochs)->capture_default_str();
  app.add_option("--batch-size", cfg.train.batch_size)->capture_default_str();
  app.add_option("--init-gain", cfg.train.init_gain)->capture_default_str();
  app.add_flag("--early-stop", cfg.train.early_stop, "Stop when both losses stall for 10 epochs");
  app.add_option("--sample-size", cfg.sample_size, "Descriptor rows sampled for training")->capture_default_str();
  app.add_option("--q", cfg.q, "Percentage of components kept by the selector")->capture_default_str();
  app.add_option("--task", task, "Label task: background or foreground")->capture_default_str();
  app.add_option("--selector-task", selector_task, "Labels used to fit the selector")->capture_default_str();
  app.add_option("--hashes,-N", cfg.num_hashes, "Hash functions per class")->capture_default_str();
  app.add_option("--neighbours,-K", cfg.neighbours, "Neighbours retrieved per class")->capture_default_str();
  app.add_option("--sweep-hashes", cfg.sweep_hashes, "N values of the evaluation grid")->capture_default_str();
  app.add_option("--sweep-neighbours", cfg.sweep_neighbours, "K values of the evaluation grid")->capture_default_str();
  app.add_flag("--random-pairs", cfg.random_pairs, "Draw (N, K) pairs at random instead of the grid");
  app.add_option("--random-pair-count", cfg.random_pair_count)->capture_default_str();

  auto* train_cmd = app.add_subcommand("train-fusion", "Train the fusion network on sampled descriptors");
  auto* extract_cmd = app.add_subcommand("extract", "Encode and pool every video of a manifest");
  std::string extract_manifest;
  extract_cmd->add_option("--manifest", extract_manifest, "Manifest to extract (default: train manifest)");
  auto* select_cmd = app.add_subcommand("fit-selector", "Fit the Fisher-score selector");
  auto* index_cmd = app.add_subcommand("build-index", "Build the per-class projection index");
  auto* classify_cmd = app.add_subcommand("classify", "Classify one descriptor file");
  std::string descriptor_file;
  classify_cmd->add_option("descriptors", descriptor_file, "Descriptor file (LSFD or CSV)")->required();
  auto* eval_cmd = app.add_subcommand("evaluate", "Evaluate over the (N, K) grid");

  auto* synth_cmd = app.add_subcommand("gen-synthetic", "Write a synthetic Gaussian-cluster dataset to --out");
  lsf::SyntheticConfig synth;
  synth_cmd->add_option("--classes", synth.classes)->capture_default_str();
  synth_cmd->add_option("--train-videos", synth.train_videos)->capture_default_str();
  synth_cmd->add_option("--test-videos", synth.test_videos)->capture_default_str();
  synth_cmd->add_option("--min-points", synth.min_points)->capture_default_str();
  synth_cmd->add_option("--max-points", synth.max_points)->capture_default_str();
  synth_cmd->add_option("--sigma", synth.sigma)->capture_default_str();
  synth_cmd->add_option("--separation", synth.separation)->capture_default_str();
  synth_cmd->add_option("--video-jitter", synth.video_jitter)->capture_default_str();
  synth_cmd->add_option("--foreground-fraction", synth.foreground_fraction)->capture_default_str();

  auto* grad_cmd = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
  std::array<Eigen::Index, 3> grad_dims{20, 12, 8};
  int grad_classes = 3;
  Eigen::Index grad_rows = 8;
  double grad_step = 1e-6, grad_tol = 1e-5;
  grad_cmd->add_option("--dims", grad_dims, "input hidden code")->capture_default_str();
  grad_cmd->add_option("--classes", grad_classes)->capture_default_str();
  grad_cmd->add_option("--rows", grad_rows)->capture_default_str();
  grad_cmd->add_option("--step", grad_step)->capture_default_str();
  grad_cmd->add_option("--tolerance", grad_tol)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    cfg.train_manifest = train_manifest;
    cfg.test_manifest = test_manifest;
    cfg.model_path = model;
    cfg.selector_path = selector;
    cfg.index_path = index;
    cfg.features_path = features;
    cfg.out_dir = out;
    cfg.widths = {widths[0], widths[1], widths[2], widths[3]};
    cfg.task = lsf::parse_label_task(task);
    cfg.selector_task = lsf::parse_label_task(selector_task);
    if (!quiet) cfg.log = &std::cerr;

    if (*train_cmd) {
      const auto r = lsf::run_train_fusion(cfg);
      std::cout << "trained on " << r.sampled_rows << " rows for " << r.training.epochs_run << " epochs\n"
                << "model: " << cfg.model_path.string() << "\nloss curves: " << r.loss_csv.string() << '\n';
    } else if (*extract_cmd) {
      const auto r = lsf::run_extract(cfg, extract_manifest.empty() ? cfg.train_manifest : std::filesystem::path(extract_manifest));
      std::cout << "wrote " << r.features.size() << " features to " << cfg.features_path.string() << '\n';
      for (const auto& f : r.failures) std::cerr << "failed: " << f << '\n';
      if (!r.failures.empty()) return kExitData;
    } else if (*select_cmd) {
      const auto r = lsf::run_fit_selector(cfg);
      std::cout << "selected " << r.selector.selected.size() << " of " << r.selector.scores.size()
                << " components (q=" << r.selector.q << ")\n";
      print_top_components(r.selector, 10);
    } else if (*index_cmd) {
      const auto idx = lsf::run_build_index(cfg);
      std::cout << "index: " << idx.num_classes() << " classes, N=" << idx.num_hashes()
                << ", D_sel=" << idx.input_width() << " -> " << cfg.index_path.string() << '\n';
    } else if (*classify_cmd) {
      const auto r = lsf::run_classify(cfg, descriptor_file);
      std::cout << "predicted: " << r.class_names[static_cast<std::size_t>(r.vote.predicted)] << " ("
                << std::setprecision(6) << r.vote.confidences(r.vote.predicted) << ")\n";
      for (std::size_t c = 0; c < r.class_names.size(); ++c) {
        std::cout << "  " << r.class_names[c] << ": " << r.vote.confidences(static_cast<Eigen::Index>(c)) << '\n';
      }
    } else if (*eval_cmd) {
      std::cout << lsf::format_eval_report(lsf::run_evaluate(cfg));
    } else if (*synth_cmd) {
      if (out.empty()) throw lsf::UsageError("gen-synthetic requires --out");
      synth.seed = cfg.seed;
      synth.widths = cfg.widths;
      const auto ds = lsf::write_synthetic_dataset(out, synth);
      std::cout << "train manifest: " << ds.train_manifest.string() << "\ntest manifest: " << ds.test_manifest.string()
                << '\n';
    } else if (*grad_cmd) {
      const lsf::LayerDims dims{grad_dims[0], grad_dims[1], grad_dims[2]};
      const auto report = lsf::gradient_check(dims, grad_classes, grad_rows, cfg.seed, grad_step);
      std::cout << std::scientific << std::setprecision(3);
      for (const auto& e : report.reconstruction) std::cout << "L1 " << e.tensor << " " << e.max_relative_error << '\n';
      for (const auto& e : report.classification) std::cout << "L2 " << e.tensor << " " << e.max_relative_error << '\n';
      const bool ok = report.worst() < grad_tol;
      std::cout << (ok ? "PASS" : "FAIL") << " worst relative error " << report.worst() << '\n';
      if (!ok) return static_cast<int>(lsf::ErrorKind::divergence);
    }
  } catch (const lsf::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return 0;
}
