#include "lsf/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <random>

#include "lsf/error.hpp"

namespace lsf {
namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace

SyntheticGenerator::SyntheticGenerator(SyntheticConfig config) : config_(std::move(config)) {
  const Eigen::Index d = config_.widths.total();
  if (config_.classes < 2) throw UsageError("synthetic data needs at least 2 classes");
  if (config_.classes + 1 > d) throw UsageError("more classes than descriptor dimensions");
  if (config_.min_points < 1 || config_.max_points < config_.min_points) {
    throw UsageError("invalid trajectory count range");
  }
  if (!(config_.sigma > 0.0)) throw UsageError("sigma must be positive");

  // Base point: every block has unit norm.
  Eigen::VectorXd base(d);
  Eigen::Index offset = 0;
  for (auto w : config_.widths.as_array()) {
    base.segment(offset, w).setConstant(1.0 / std::sqrt(static_cast<double>(w)));
    offset += w;
  }

  // Orthonormal offset directions, so centroid pairs sit exactly
  // separation * sigma apart.
  std::mt19937_64 rng = stream_rng(config_.seed, 0, kGolden);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int directions = config_.classes + 1;
  Eigen::MatrixXd dirs(directions, d);
  for (int k = 0; k < directions; ++k) {
    Eigen::VectorXd v(d);
    for (Eigen::Index i = 0; i < d; ++i) v(i) = normal(rng);
    for (int j = 0; j < k; ++j) v -= dirs.row(j).dot(v) * dirs.row(j).transpose();
    dirs.row(k) = v.normalized().transpose();
  }
  const double radius = config_.separation * config_.sigma / std::sqrt(2.0);
  centroids_.resize(config_.classes, d);
  for (int c = 0; c < config_.classes; ++c) centroids_.row(c) = (base + radius * dirs.row(c).transpose()).transpose();
  foreground_centroid_ = base + radius * dirs.row(config_.classes).transpose();
}

DescriptorMatrix SyntheticGenerator::make_video(const std::string& video_id, int label, bool foreground,
                                                std::uint64_t stream, std::uint64_t index) const {
  if (label < 0 || label >= config_.classes) throw UsageError("synthetic label out of range");
  std::mt19937_64 rng = stream_rng(config_.seed, stream + 1, index);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> count(config_.min_points, config_.max_points);
  std::bernoulli_distribution human(config_.foreground_share);
  const Eigen::Index d = centroids_.cols();
  const auto points = static_cast<Eigen::Index>(count(rng));

  Eigen::VectorXd centre = centroids_.row(label).transpose();
  for (Eigen::Index i = 0; i < d; ++i) centre(i) += config_.video_jitter * config_.sigma * normal(rng);

  DescriptorRows rows(points, d);
  for (Eigen::Index p = 0; p < points; ++p) {
    const bool is_human = foreground && human(rng);
    const Eigen::VectorXd& mean = is_human ? foreground_centroid_ : centre;
    Eigen::VectorXd x(d);
    for (Eigen::Index i = 0; i < d; ++i) x(i) = mean(i) + config_.sigma * normal(rng);
    if (config_.normalize_blocks) {
      Eigen::Index offset = 0;
      for (auto w : config_.widths.as_array()) {
        const double n = x.segment(offset, w).norm();
        if (n > 0.0) x.segment(offset, w) /= n;
        offset += w;
      }
    }
    rows.row(p) = x.cast<float>().transpose();
  }
  return DescriptorMatrix(video_id, std::move(rows), config_.widths);
}

SyntheticDataset write_synthetic_dataset(const std::filesystem::path& out_dir, const SyntheticConfig& config) {
  const SyntheticGenerator gen(config);
  const auto desc_dir = out_dir / "descriptors";
  std::filesystem::create_directories(desc_dir);

  std::vector<std::string> names;
  for (int c = 0; c < config.classes; ++c) names.push_back("class" + std::to_string(c));

  auto write_split = [&](Split split, std::size_t videos, std::uint64_t stream) {
    const std::string prefix = split == Split::train ? "train" : "test";
    std::mt19937_64 flag_rng = stream_rng(config.seed, stream + 100, 0);
    std::bernoulli_distribution fg(config.foreground_fraction);
    DatasetManifest manifest;
    manifest.class_names = names;
    manifest.split = split;
    for (std::size_t i = 0; i < videos; ++i) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%s_%05zu", prefix.c_str(), i);
      const std::string id = buf;
      const int label = static_cast<int>(i % static_cast<std::size_t>(config.classes));
      const bool foreground = fg(flag_rng);
      const auto file = desc_dir / (id + ".lsfd");
      save_descriptors(file, gen.make_video(id, label, foreground, stream, i));
      manifest.entries.push_back({id, file, label, foreground});
    }
    const auto path = out_dir / (prefix + ".manifest");
    save_manifest(path, manifest);
    return path;
  };

  SyntheticDataset ds;
  ds.train_manifest = write_split(Split::train, config.train_videos, 0);
  ds.test_manifest = write_split(Split::test, config.test_videos, 1);
  return ds;
}

}  // namespace lsf
