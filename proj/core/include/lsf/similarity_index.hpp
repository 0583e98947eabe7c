#pragma once

// Per-class scalar-projection hashing with linear K-NN search and soft voting.
//
// Class c owns a family g_c(x) = A_c x (A_c: N x D_sel, Gaussian rows) and
// stores g_c(x) for the training vectors labelled c. A query is projected by
// every g_c, the K nearest members of each bucket are collected, and the
// union is turned into class confidences by inverse-distance voting.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace lsf {

struct HashFamily {
  Eigen::MatrixXd projections;  // N x D_sel, one hash function per row
  std::uint64_t seed = 0;

  Eigen::Index num_hashes() const { return projections.rows(); }
  Eigen::Index input_width() const { return projections.cols(); }
  /// g(x) = [a_1 . x, ..., a_N . x]
  Eigen::VectorXd hash(const Eigen::VectorXd& x) const;
};

/// Rows drawn i.i.d. standard normal from a generator seeded with `seed`.
HashFamily make_family(Eigen::Index num_hashes, Eigen::Index input_width, std::uint64_t seed);

struct ClassBucket {
  HashFamily family;
  Eigen::MatrixXd hashes;  // members x N
  std::vector<std::string> video_ids;
};

class ProjectionIndex {
 public:
  ProjectionIndex(std::vector<ClassBucket> buckets, Eigen::Index input_width);

  int num_classes() const { return static_cast<int>(buckets_.size()); }
  Eigen::Index num_hashes() const { return buckets_.front().family.num_hashes(); }
  Eigen::Index input_width() const { return input_width_; }
  const ClassBucket& bucket(int c) const { return buckets_[static_cast<std::size_t>(c)]; }
  const std::vector<ClassBucket>& buckets() const { return buckets_; }

 private:
  std::vector<ClassBucket> buckets_;
  Eigen::Index input_width_;
};

/// Class c's family is seeded with seed + c. Every class in [0, num_classes)
/// must have at least one member; an empty class throws DataError.
ProjectionIndex build_index(const Eigen::MatrixXd& features, std::span<const int> labels,
                            std::span<const std::string> video_ids, Eigen::Index num_hashes,
                            std::uint64_t seed, int num_classes = -1);

struct Candidate {
  std::string video_id;
  int label;
  double distance;  // Euclidean, in the bucket's R^N
};

/// Up to K nearest members per bucket, buckets in class order, each bucket's
/// list ordered by (distance, video_id).
std::vector<Candidate> query_knn(const ProjectionIndex& index, const Eigen::VectorXd& query, std::size_t k);

inline constexpr double kVoteEpsilon = 1e-8;

struct Vote {
  Eigen::VectorXd confidences;  // C, nonnegative, sums to 1
  int predicted = 0;
};

/// Weight 1 / (d + 1e-8) per candidate, normalized per class; argmax with
/// ties going to the lower class id.
Vote soft_vote(std::span<const Candidate> candidates, int num_classes);

Vote classify(const ProjectionIndex& index, const Eigen::VectorXd& query, std::size_t k);

/// Index file, all little-endian:
///   "LSFI" | u16 version | u32 C | u32 N | u32 D_sel
///   per class: u64 seed | u64 members | N*D_sel f64 hash rows (row-major)
///              | members*N f64 projections (row-major)
///              | members x (u32 length, bytes) video ids
void save_index(const std::filesystem::path& path, const ProjectionIndex& index);
ProjectionIndex load_index(const std::filesystem::path& path);

}  // namespace lsf
