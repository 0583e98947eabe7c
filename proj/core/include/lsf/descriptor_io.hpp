#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace lsf {

/// Widths of the four trajectory-aligned descriptor blocks, in storage order.
struct BlockWidths {
  std::uint32_t trajectory = 30;
  std::uint32_t hog = 96;
  std::uint32_t hof = 108;
  std::uint32_t mbh = 192;

  std::array<std::uint32_t, 4> as_array() const { return {trajectory, hog, hof, mbh}; }
  std::uint32_t total() const { return trajectory + hog + hof + mbh; }
  bool operator==(const BlockWidths&) const = default;
};

using DescriptorRows = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// The trajectory-aligned descriptors of one video: N_p rows of width D_in.
///
/// Construction validates the invariants (at least one row, positive block
/// widths summing to the row width, every entry finite) and the value is
/// immutable afterwards.
class DescriptorMatrix {
 public:
  DescriptorMatrix(std::string video_id, DescriptorRows rows, BlockWidths widths);

  const std::string& video_id() const { return video_id_; }
  const DescriptorRows& rows() const { return rows_; }
  const BlockWidths& block_widths() const { return widths_; }
  Eigen::Index num_points() const { return rows_.rows(); }
  Eigen::Index width() const { return rows_.cols(); }

  Eigen::MatrixXd to_double() const { return rows_.cast<double>(); }

 private:
  std::string video_id_;
  DescriptorRows rows_;
  BlockWidths widths_;
};

/// Reads a descriptor file. Binary LSFD files are recognised by their magic;
/// anything else is parsed as comma-separated text, one row per line.
/// The video id defaults to the file stem.
DescriptorMatrix load_descriptors(const std::filesystem::path& path,
                                  const BlockWidths& expected = {});

/// Writes the canonical binary form.
void save_descriptors(const std::filesystem::path& path, const DescriptorMatrix& m);

/// Number of rows in a descriptor file without loading the payload (binary
/// files read the header only).
std::uint64_t count_descriptor_rows(const std::filesystem::path& path,
                                    const BlockWidths& expected = {});

/// Rows with at least one block whose L2 norm is further than `tolerance`
/// from 1. Descriptors are expected to arrive normalized; nothing is rescaled.
std::size_t count_unnormalized_rows(const DescriptorMatrix& m, double tolerance = 0.1);

enum class Split { train, test };

struct ManifestEntry {
  std::string video_id;
  std::filesystem::path descriptor_path;  // resolved against the manifest directory
  std::optional<int> background_label;
  std::optional<bool> foreground;
};

/// Video ids, descriptor files and labels of one split.
///
/// Text format:
///   #classes,<name0>,<name1>,...
///   #split,train|test              (optional, default train)
///   video_id,relative_path,background_label_or_dash,foreground_flag_or_dash
/// Blank lines are skipped.
struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::vector<std::string> class_names;
  Split split = Split::train;

  int num_classes() const { return static_cast<int>(class_names.size()); }
};

DatasetManifest load_manifest(const std::filesystem::path& path);

/// Writes paths relative to the manifest's directory when possible.
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

struct LabeledDescriptorBatch {
  Eigen::MatrixXd rows;     // S x D_in
  std::vector<int> labels;  // S background class ids
};

/// Uniformly samples `sample_size` rows from the union of all videos' rows.
/// Without replacement when the population is large enough, with replacement
/// otherwise. Every row carries its video's background label.
LabeledDescriptorBatch sample_labeled_rows(std::span<const DescriptorMatrix> videos,
                                           std::span<const int> labels,
                                           std::size_t sample_size, std::uint64_t seed);

/// Manifest variant; reads each file once and only keeps the sampled rows.
LabeledDescriptorBatch sample_labeled_rows(const DatasetManifest& manifest,
                                           std::size_t sample_size, std::uint64_t seed,
                                           const BlockWidths& widths = {});

}  // namespace lsf
