#include "lsf/feature_pipeline.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>

#include "lsf/binary_io.hpp"
#include "lsf/error.hpp"

namespace lsf {
namespace {

constexpr io::Magic kSelectorMagic{'L', 'S', 'F', 'S'};
constexpr std::uint16_t kSelectorVersion = 1;

std::string format_double(double v) {
  std::array<char, 32> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

}  // namespace

PooledFeature average_pool(std::string video_id, const Eigen::MatrixXd& codes) {
  if (codes.rows() == 0) throw DataError(video_id + ": cannot pool an empty code matrix");
  return {std::move(video_id), codes.colwise().mean().transpose()};
}

FisherResult fisher_scores(const Eigen::MatrixXd& features, std::span<const int> labels, int num_classes) {
  const Eigen::Index m = features.rows();
  const Eigen::Index d = features.cols();
  if (m < 2) throw DataError("Fisher scores need at least two samples");
  if (labels.size() != static_cast<std::size_t>(m)) throw UsageError("one label per sample required");
  const int max_label = *std::max_element(labels.begin(), labels.end());
  if (num_classes < 0) num_classes = max_label + 1;
  for (int l : labels) {
    if (l < 0 || l >= num_classes) throw DataError("label " + std::to_string(l) + " out of range");
  }

  FisherResult r;
  FisherStats& s = r.stats;
  s.num_classes = num_classes;
  s.class_sizes.assign(static_cast<std::size_t>(num_classes), 0);
  s.class_means = Eigen::MatrixXd::Zero(num_classes, d);
  s.class_stddevs = Eigen::MatrixXd::Zero(num_classes, d);
  s.global_means = features.colwise().mean().transpose();

  for (Eigen::Index i = 0; i < m; ++i) {
    const int c = labels[static_cast<std::size_t>(i)];
    s.class_means.row(c) += features.row(i);
    ++s.class_sizes[static_cast<std::size_t>(c)];
  }
  int present = 0;
  for (int c = 0; c < num_classes; ++c) {
    const auto n = s.class_sizes[static_cast<std::size_t>(c)];
    if (n > 0) {
      s.class_means.row(c) /= static_cast<double>(n);
      ++present;
    }
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    const int c = labels[static_cast<std::size_t>(i)];
    s.class_stddevs.row(c) += (features.row(i) - s.class_means.row(c)).array().square().matrix();
  }

  Eigen::VectorXd between = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd within = Eigen::VectorXd::Zero(d);
  for (int c = 0; c < num_classes; ++c) {
    const auto n = static_cast<double>(s.class_sizes[static_cast<std::size_t>(c)]);
    if (n == 0) continue;
    // Row c holds the sum of squared deviations; n_c * sigma_c^2 equals it exactly.
    within += s.class_stddevs.row(c).transpose();
    s.class_stddevs.row(c) = (s.class_stddevs.row(c) / n).array().sqrt().matrix();
    between += n * (s.class_means.row(c).transpose() - s.global_means).array().square().matrix();
  }

  r.single_class = present < 2;
  r.scores = Eigen::VectorXd::Zero(d);
  if (r.single_class) return r;
  for (Eigen::Index i = 0; i < d; ++i) {
    r.scores(i) = between(i) / (within(i) + kFisherEpsilon);
    if (within(i) == 0.0 && between(i) > 0.0) r.perfectly_separating.push_back(i);
  }
  return r;
}

std::size_t selection_size(double q, Eigen::Index width) {
  if (!(q > 0.0 && q <= 100.0)) throw UsageError("q must lie in (0, 100]");
  const double exact = q * static_cast<double>(width) / 100.0;
  const auto n = static_cast<std::size_t>(std::ceil(exact - 1e-9));
  return std::clamp<std::size_t>(n, 1, static_cast<std::size_t>(width));
}

FeatureSelector fit_selector(const Eigen::VectorXd& scores, double q) {
  if (scores.size() == 0) throw UsageError("cannot select from an empty score vector");
  const std::size_t keep = selection_size(q, scores.size());
  std::vector<std::uint32_t> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return scores(a) > scores(b); });
  order.resize(keep);
  std::sort(order.begin(), order.end());
  return {scores, std::move(order), q};
}

Eigen::VectorXd apply_selection(const FeatureSelector& selector, const Eigen::VectorXd& feature) {
  if (feature.size() != selector.input_width()) {
    throw DataError("feature width " + std::to_string(feature.size()) + " does not match selector width " +
                    std::to_string(selector.input_width()));
  }
  Eigen::VectorXd out(selector.output_width());
  for (Eigen::Index k = 0; k < out.size(); ++k) out(k) = feature(selector.selected[static_cast<std::size_t>(k)]);
  return out;
}

Eigen::MatrixXd apply_selection(const FeatureSelector& selector, const Eigen::MatrixXd& features) {
  if (features.cols() != selector.input_width()) {
    throw DataError("feature width " + std::to_string(features.cols()) + " does not match selector width " +
                    std::to_string(selector.input_width()));
  }
  Eigen::MatrixXd out(features.rows(), selector.output_width());
  for (Eigen::Index k = 0; k < out.cols(); ++k) out.col(k) = features.col(selector.selected[static_cast<std::size_t>(k)]);
  return out;
}

void save_selector(const std::filesystem::path& path, const FeatureSelector& selector) {
  std::ofstream out = io::open_output(path);
  io::BinaryWriter w(out);
  w.magic(kSelectorMagic);
  w.u16(kSelectorVersion);
  w.u32(static_cast<std::uint32_t>(selector.scores.size()));
  w.f64(selector.q);
  w.f64s(std::span<const double>(selector.scores.data(), static_cast<std::size_t>(selector.scores.size())));
  w.u32(static_cast<std::uint32_t>(selector.selected.size()));
  for (auto i : selector.selected) w.u32(i);
  if (!out) throw DataError(path.string() + ": write failed");
}

FeatureSelector load_selector(const std::filesystem::path& path) {
  std::ifstream in = io::open_input(path);
  io::BinaryReader r(in, path.string());
  r.expect_magic(kSelectorMagic);
  const auto version = r.u16();
  if (version != kSelectorVersion) {
    throw DataError(path.string() + ": unsupported selector format version " + std::to_string(version));
  }
  FeatureSelector s;
  const auto width = r.u32();
  s.q = r.f64();
  s.scores.resize(width);
  r.f64s(std::span<double>(s.scores.data(), width));
  const auto count = r.u32();
  if (count == 0 || count > width) throw DataError(path.string() + ": invalid selected-index count");
  s.selected.resize(count);
  for (auto& i : s.selected) {
    i = r.u32();
    if (i >= width) throw DataError(path.string() + ": selected index out of range");
  }
  if (!std::is_sorted(s.selected.begin(), s.selected.end()) ||
      std::adjacent_find(s.selected.begin(), s.selected.end()) != s.selected.end()) {
    throw DataError(path.string() + ": selected indexes must be strictly ascending");
  }
  r.expect_end();
  return s;
}

void export_selector_csv(const std::filesystem::path& path, const FeatureSelector& selector) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError(path.string() + ": cannot open for writing");
  out << "component,score,selected\n";
  for (Eigen::Index i = 0; i < selector.scores.size(); ++i) {
    const bool sel = std::binary_search(selector.selected.begin(), selector.selected.end(),
                                        static_cast<std::uint32_t>(i));
    out << i << ',' << format_double(selector.scores(i)) << ',' << (sel ? 1 : 0) << '\n';
  }
}

void write_features_csv(const std::filesystem::path& path, std::span<const PooledFeature> features) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError(path.string() + ": cannot open for writing");
  const Eigen::Index width = features.empty() ? 0 : features.front().values.size();
  out << "video_id";
  for (Eigen::Index i = 0; i < width; ++i) out << ",v" << i;
  out << '\n';
  for (const auto& f : features) {
    if (f.values.size() != width) throw DataError(f.video_id + ": feature width differs from the first row");
    out << f.video_id;
    for (Eigen::Index i = 0; i < width; ++i) out << ',' << format_double(f.values(i));
    out << '\n';
  }
  if (!out) throw DataError(path.string() + ": write failed");
}

std::vector<PooledFeature> read_features_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path.string() + ": cannot open features file");
  std::string line;
  if (!std::getline(in, line) || !line.starts_with("video_id")) {
    throw DataError(path.string() + ": missing features header");
  }
  const auto width = static_cast<Eigen::Index>(std::count(line.begin(), line.end(), ','));
  std::vector<PooledFeature> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    PooledFeature f;
    f.values.resize(width);
    std::size_t pos = line.find(',');
    f.video_id = line.substr(0, pos);
    for (Eigen::Index i = 0; i < width; ++i) {
      if (pos == std::string::npos) {
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": too few values");
      }
      const char* begin = line.data() + pos + 1;
      const char* end = line.data() + line.size();
      const auto [ptr, ec] = std::from_chars(begin, end, f.values(i));
      if (ec != std::errc() || (ptr != end && *ptr != ',') || !std::isfinite(f.values(i))) {
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": bad value in column " +
                        std::to_string(i + 1));
      }
      pos = ptr == end ? std::string::npos : static_cast<std::size_t>(ptr - line.data());
    }
    if (pos != std::string::npos) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": too many values");
    }
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace lsf
