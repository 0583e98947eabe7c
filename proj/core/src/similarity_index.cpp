#include "lsf/similarity_index.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "lsf/binary_io.hpp"
#include "lsf/error.hpp"

namespace lsf {
namespace {

constexpr io::Magic kIndexMagic{'L', 'S', 'F', 'I'};
constexpr std::uint16_t kIndexVersion = 1;

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

bool candidate_less(const Candidate& a, const Candidate& b) {
  if (a.distance != b.distance) return a.distance < b.distance;
  return a.video_id < b.video_id;
}

}  // namespace

Eigen::VectorXd HashFamily::hash(const Eigen::VectorXd& x) const {
  if (x.size() != input_width()) {
    throw DataError("query width " + std::to_string(x.size()) + " does not match hash width " +
                    std::to_string(input_width()));
  }
  // Explicit per-row dot products keep stored and query hashes bit-identical.
  Eigen::VectorXd out(num_hashes());
  for (Eigen::Index j = 0; j < num_hashes(); ++j) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) acc += projections(j, i) * x(i);
    out(j) = acc;
  }
  return out;
}

HashFamily make_family(Eigen::Index num_hashes, Eigen::Index input_width, std::uint64_t seed) {
  if (num_hashes < 1 || input_width < 1) throw UsageError("hash family dimensions must be positive");
  HashFamily f;
  f.seed = seed;
  f.projections.resize(num_hashes, input_width);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index j = 0; j < num_hashes; ++j) {
    for (Eigen::Index i = 0; i < input_width; ++i) f.projections(j, i) = normal(rng);
  }
  return f;
}

ProjectionIndex::ProjectionIndex(std::vector<ClassBucket> buckets, Eigen::Index input_width)
    : buckets_(std::move(buckets)), input_width_(input_width) {
  if (buckets_.empty()) throw DataError("projection index needs at least one class");
  const Eigen::Index n = buckets_.front().family.num_hashes();
  for (std::size_t c = 0; c < buckets_.size(); ++c) {
    const auto& b = buckets_[c];
    if (b.family.num_hashes() != n || b.family.input_width() != input_width_) {
      throw DataError("class " + std::to_string(c) + " hash family has inconsistent shape");
    }
    if (!b.family.projections.allFinite()) throw DataError("class " + std::to_string(c) + " hash family is not finite");
    for (Eigen::Index j = 0; j < n; ++j) {
      if (b.family.projections.row(j).isZero(0.0)) {
        throw DataError("class " + std::to_string(c) + " has a zero hash direction");
      }
    }
    if (b.hashes.cols() != n || b.hashes.rows() != static_cast<Eigen::Index>(b.video_ids.size())) {
      throw DataError("class " + std::to_string(c) + " stored projections have inconsistent shape");
    }
  }
}

ProjectionIndex build_index(const Eigen::MatrixXd& features, std::span<const int> labels,
                            std::span<const std::string> video_ids, Eigen::Index num_hashes, std::uint64_t seed,
                            int num_classes) {
  if (labels.size() != static_cast<std::size_t>(features.rows()) || video_ids.size() != labels.size()) {
    throw UsageError("features, labels and video ids must have the same length");
  }
  if (labels.empty()) throw DataError("cannot build an index without training vectors");
  if (num_classes < 0) num_classes = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<std::vector<Eigen::Index>> members(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) throw DataError("label " + std::to_string(labels[i]) + " out of range");
    members[static_cast<std::size_t>(labels[i])].push_back(static_cast<Eigen::Index>(i));
  }
  std::vector<ClassBucket> buckets;
  buckets.reserve(members.size());
  for (int c = 0; c < num_classes; ++c) {
    const auto& m = members[static_cast<std::size_t>(c)];
    if (m.empty()) {
      throw DataError("class " + std::to_string(c) + " has no training vectors; merge or drop it");
    }
    ClassBucket b;
    b.family = make_family(num_hashes, features.cols(), seed + static_cast<std::uint64_t>(c));
    b.hashes.resize(static_cast<Eigen::Index>(m.size()), num_hashes);
    for (std::size_t k = 0; k < m.size(); ++k) {
      b.hashes.row(static_cast<Eigen::Index>(k)) = b.family.hash(features.row(m[k]).transpose()).transpose();
      b.video_ids.push_back(video_ids[static_cast<std::size_t>(m[k])]);
    }
    buckets.push_back(std::move(b));
  }
  return ProjectionIndex(std::move(buckets), features.cols());
}

std::vector<Candidate> query_knn(const ProjectionIndex& index, const Eigen::VectorXd& query, std::size_t k) {
  if (k < 1) throw UsageError("K must be at least 1");
  if (query.size() != index.input_width()) {
    throw DataError("query width " + std::to_string(query.size()) + " does not match index width " +
                    std::to_string(index.input_width()));
  }
  std::vector<Candidate> out;
  std::vector<Candidate> bucket_hits;
  for (int c = 0; c < index.num_classes(); ++c) {
    const ClassBucket& b = index.bucket(c);
    const Eigen::VectorXd hashed = b.family.hash(query);
    bucket_hits.clear();
    for (Eigen::Index r = 0; r < b.hashes.rows(); ++r) {
      const double d = (b.hashes.row(r).transpose() - hashed).norm();
      bucket_hits.push_back({b.video_ids[static_cast<std::size_t>(r)], c, d});
    }
    const std::size_t take = std::min(k, bucket_hits.size());
    std::partial_sort(bucket_hits.begin(), bucket_hits.begin() + static_cast<std::ptrdiff_t>(take),
                      bucket_hits.end(), candidate_less);
    out.insert(out.end(), bucket_hits.begin(), bucket_hits.begin() + static_cast<std::ptrdiff_t>(take));
  }
  return out;
}

Vote soft_vote(std::span<const Candidate> candidates, int num_classes) {
  if (candidates.empty()) throw DataError("soft vote needs at least one candidate");
  if (num_classes < 1) throw UsageError("class count must be positive");
  Vote v;
  v.confidences = Eigen::VectorXd::Zero(num_classes);
  double total = 0.0;
  for (const auto& c : candidates) {
    if (c.label < 0 || c.label >= num_classes) throw DataError("candidate label out of range");
    if (!(c.distance >= 0.0) || !std::isfinite(c.distance)) throw DataError("candidate distance must be finite and nonnegative");
    const double w = 1.0 / (c.distance + kVoteEpsilon);
    v.confidences(c.label) += w;
    total += w;
  }
  v.confidences /= total;
  Eigen::Index best = 0;
  for (Eigen::Index c = 1; c < v.confidences.size(); ++c) {
    if (v.confidences(c) > v.confidences(best)) best = c;
  }
  v.predicted = static_cast<int>(best);
  return v;
}

Vote classify(const ProjectionIndex& index, const Eigen::VectorXd& query, std::size_t k) {
  const auto candidates = query_knn(index, query, k);
  return soft_vote(candidates, index.num_classes());
}

void save_index(const std::filesystem::path& path, const ProjectionIndex& index) {
  std::ofstream out = io::open_output(path);
  io::BinaryWriter w(out);
  w.magic(kIndexMagic);
  w.u16(kIndexVersion);
  w.u32(static_cast<std::uint32_t>(index.num_classes()));
  w.u32(static_cast<std::uint32_t>(index.num_hashes()));
  w.u32(static_cast<std::uint32_t>(index.input_width()));
  for (const auto& b : index.buckets()) {
    w.u64(b.family.seed);
    w.u64(b.video_ids.size());
    const RowMajor a = b.family.projections;
    w.f64s(std::span<const double>(a.data(), static_cast<std::size_t>(a.size())));
    const RowMajor h = b.hashes;
    w.f64s(std::span<const double>(h.data(), static_cast<std::size_t>(h.size())));
    for (const auto& id : b.video_ids) w.str(id);
  }
  if (!out) throw DataError(path.string() + ": write failed");
}

ProjectionIndex load_index(const std::filesystem::path& path) {
  std::ifstream in = io::open_input(path);
  io::BinaryReader r(in, path.string());
  r.expect_magic(kIndexMagic);
  const auto version = r.u16();
  if (version != kIndexVersion) {
    throw DataError(path.string() + ": unsupported index format version " + std::to_string(version));
  }
  const auto classes = r.u32();
  const auto n = static_cast<Eigen::Index>(r.u32());
  const auto width = static_cast<Eigen::Index>(r.u32());
  if (classes == 0 || n == 0 || width == 0) throw DataError(path.string() + ": empty index header");
  std::vector<ClassBucket> buckets(classes);
  for (auto& b : buckets) {
    b.family.seed = r.u64();
    const auto members = static_cast<Eigen::Index>(r.u64());
    RowMajor a(n, width);
    r.f64s(std::span<double>(a.data(), static_cast<std::size_t>(a.size())));
    b.family.projections = a;
    RowMajor h(members, n);
    r.f64s(std::span<double>(h.data(), static_cast<std::size_t>(h.size())));
    b.hashes = h;
    b.video_ids.reserve(static_cast<std::size_t>(members));
    for (Eigen::Index i = 0; i < members; ++i) b.video_ids.push_back(r.str());
  }
  r.expect_end();
  return ProjectionIndex(std::move(buckets), width);
}

}  // namespace lsf
