#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace lsf {

/// One holistic vector per video: the mean of its trajectory codes.
struct PooledFeature {
  std::string video_id;
  Eigen::VectorXd values;
};

/// codes: N_p x D_code, N_p >= 1.
PooledFeature average_pool(std::string video_id, const Eigen::MatrixXd& codes);

/// Per-class moments of every feature component. Standard deviations use the
/// population (divide by n_c) convention. Classes absent from the labels keep
/// n_c = 0 and do not contribute.
struct FisherStats {
  Eigen::MatrixXd class_means;    // C x D
  Eigen::MatrixXd class_stddevs;  // C x D
  Eigen::VectorXd global_means;   // D
  std::vector<std::size_t> class_sizes;
  int num_classes = 0;
};

struct FisherResult {
  FisherStats stats;
  Eigen::VectorXd scores;                      // D
  std::vector<Eigen::Index> perfectly_separating;  // zero within-class spread, nonzero between-class
  bool single_class = false;                   // every label identical: scores are all zero
};

/// Denominator guard for components with zero within-class spread.
inline constexpr double kFisherEpsilon = 1e-12;

/// f_i = sum_c n_c (mu_c^i - mu^i)^2 / (sum_c n_c (sigma_c^i)^2 + eps).
/// features: M x D with M >= 2; labels in [0, num_classes). num_classes < 0
/// means max(label) + 1.
FisherResult fisher_scores(const Eigen::MatrixXd& features, std::span<const int> labels,
                           int num_classes = -1);

/// The top ceil(q * D / 100) components by Fisher score.
struct FeatureSelector {
  Eigen::VectorXd scores;
  std::vector<std::uint32_t> selected;  // ascending component indexes
  double q = 50.0;

  Eigen::Index input_width() const { return scores.size(); }
  Eigen::Index output_width() const { return static_cast<Eigen::Index>(selected.size()); }
};

std::size_t selection_size(double q, Eigen::Index width);

/// Ranks by descending score; equal scores prefer the lower component index.
FeatureSelector fit_selector(const Eigen::VectorXd& scores, double q);

/// Gathers the selected components in ascending index order.
Eigen::VectorXd apply_selection(const FeatureSelector& selector, const Eigen::VectorXd& feature);
/// Row-wise variant for a feature matrix (M x D -> M x |selected|).
Eigen::MatrixXd apply_selection(const FeatureSelector& selector, const Eigen::MatrixXd& features);

/// Selector file: "LSFS", u16 version, u32 D, f64 q, D f64 scores,
/// u32 count, count u32 indexes.
void save_selector(const std::filesystem::path& path, const FeatureSelector& selector);
FeatureSelector load_selector(const std::filesystem::path& path);
/// component,score,selected
void export_selector_csv(const std::filesystem::path& path, const FeatureSelector& selector);

/// Features file: header `video_id,v0,...,v{D-1}`, one video per line.
/// Values are written in shortest round-trip form.
void write_features_csv(const std::filesystem::path& path, std::span<const PooledFeature> features);
std::vector<PooledFeature> read_features_csv(const std::filesystem::path& path);

}  // namespace lsf
