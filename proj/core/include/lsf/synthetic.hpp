#pragma once

// Synthetic descriptor datasets: per-class Gaussian clouds in descriptor
// space, for exercising the pipeline without real video data.

#include <cstdint>
#include <filesystem>
#include <string>

#include <Eigen/Core>

#include "lsf/descriptor_io.hpp"

namespace lsf {

struct SyntheticConfig {
  int classes = 6;
  std::size_t train_videos = 600;
  std::size_t test_videos = 300;
  std::size_t min_points = 50;
  std::size_t max_points = 500;
  double sigma = 0.02;             // per-coordinate within-class standard deviation
  double separation = 10.0;        // pairwise centroid distance, in units of sigma
  double video_jitter = 0.1;       // per-video centre offset, in units of sigma
  double foreground_fraction = 0.3;
  double foreground_share = 0.3;   // share of a foreground video's trajectories showing human motion
  bool normalize_blocks = true;    // rescale every block of every row to unit L2 norm
  BlockWidths widths;
  std::uint64_t seed = 7;
};

class SyntheticGenerator {
 public:
  explicit SyntheticGenerator(SyntheticConfig config);

  const SyntheticConfig& config() const { return config_; }
  // Class centroids (C x D_in) before any block normalisation.
  const Eigen::MatrixXd& centroids() const { return centroids_; }

  /// Deterministic in (config, stream, index).
  DescriptorMatrix make_video(const std::string& video_id, int label, bool foreground, std::uint64_t stream,
                              std::uint64_t index) const;

 private:
  SyntheticConfig config_;
  Eigen::MatrixXd centroids_;
  Eigen::VectorXd foreground_centroid_;
};

struct SyntheticDataset {
  std::filesystem::path train_manifest;
  std::filesystem::path test_manifest;
};

/// Writes descriptors/<split>_<n>.lsfd plus train.manifest and test.manifest
/// under `out_dir`. Labels are balanced round-robin over classes.
SyntheticDataset write_synthetic_dataset(const std::filesystem::path& out_dir, const SyntheticConfig& config);

}  // namespace lsf
