#include "lsf/similarity_index.hpp"

#include <cmath>
#include <fstream>
#include <map>

#include <gtest/gtest.h>

#include "lsf/error.hpp"
#include "test_support.hpp"

namespace lsf {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::vector<std::string> ids_for(std::size_t n, const std::string& prefix = "v") {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back(prefix + std::to_string(1000 + i));
  return ids;
}

TEST(HashFamily, ShapeAndDeterminism) {
  const auto a = make_family(50, 64, 9);
  const auto b = make_family(50, 64, 9);
  const auto c = make_family(50, 64, 10);
  EXPECT_EQ(a.num_hashes(), 50);
  EXPECT_EQ(a.input_width(), 64);
  EXPECT_EQ(a.projections, b.projections);
  EXPECT_NE(a.projections, c.projections);
  EXPECT_EQ(a.hash(VectorXd::Zero(64)), VectorXd::Zero(50));
}

TEST(HashFamily, GaussianMoments) {
  const auto f = make_family(200, 200, 3);
  const double mean = f.projections.mean();
  const double var = (f.projections.array() - mean).square().mean();
  EXPECT_NEAR(mean, 0.0, 0.02);
  EXPECT_NEAR(var, 1.0, 0.03);
}

TEST(HashFamily, LinearInInput) {
  std::mt19937_64 rng(1);
  const auto f = make_family(10, 8, 4);
  const VectorXd x = test::random_matrix(8, 1, rng).col(0);
  const VectorXd y = test::random_matrix(8, 1, rng).col(0);
  EXPECT_TRUE(f.hash(2.0 * x + y).isApprox(2.0 * f.hash(x) + f.hash(y), 1e-12));
}

TEST(BuildIndex, BucketsFollowLabels) {
  std::mt19937_64 rng(2);
  const MatrixXd feats = test::random_matrix(30, 16, rng);
  std::vector<int> labels(30);
  for (int i = 0; i < 30; ++i) labels[static_cast<std::size_t>(i)] = i % 3;
  const auto ids = ids_for(30);
  const auto index = build_index(feats, labels, ids, 12, 100);
  ASSERT_EQ(index.num_classes(), 3);
  EXPECT_EQ(index.num_hashes(), 12);
  for (int c = 0; c < 3; ++c) {
    const auto& b = index.bucket(c);
    EXPECT_EQ(b.hashes.rows(), 10);
    EXPECT_EQ(b.family.seed, 100u + static_cast<unsigned>(c));
    EXPECT_EQ(b.family.projections, make_family(12, 16, 100 + c).projections);
    for (std::size_t k = 0; k < b.video_ids.size(); ++k) {
      const auto row = static_cast<Eigen::Index>(std::stoi(b.video_ids[k].substr(1)) - 1000);
      EXPECT_EQ(labels[static_cast<std::size_t>(row)], c);
      EXPECT_EQ(VectorXd(b.hashes.row(static_cast<Eigen::Index>(k)).transpose()),
                b.family.hash(feats.row(row).transpose()));
    }
  }
}

TEST(BuildIndex, EmptyClassAndBadInputs) {
  std::mt19937_64 rng(3);
  const MatrixXd feats = test::random_matrix(4, 5, rng);
  const auto ids = ids_for(4);
  EXPECT_THROW(build_index(feats, std::vector<int>{0, 0, 2, 2}, ids, 4, 1), DataError);
  EXPECT_THROW(build_index(feats, std::vector<int>{0, 1, 0, 1}, ids, 4, 1, 3), DataError);
  EXPECT_THROW(build_index(feats, std::vector<int>{0, 1, 0}, ids, 4, 1), UsageError);
  EXPECT_THROW(build_index(feats, std::vector<int>{0, 1, 0, 1}, ids, 0, 1), UsageError);
}

TEST(QueryKnn, SingletonBucketsReturnOneEach) {
  std::mt19937_64 rng(4);
  const MatrixXd feats = test::random_matrix(3, 6, rng);
  const auto index = build_index(feats, std::vector<int>{0, 1, 2}, ids_for(3), 5, 7);
  const auto hits = query_knn(index, VectorXd::Zero(6), 10);
  ASSERT_EQ(hits.size(), 3u);
  for (int c = 0; c < 3; ++c) EXPECT_EQ(hits[static_cast<std::size_t>(c)].label, c);
}

TEST(QueryKnn, ClipsToBucketSize) {
  std::mt19937_64 rng(5);
  const MatrixXd feats = test::random_matrix(9, 6, rng);
  const auto index = build_index(feats, std::vector<int>{0, 0, 0, 0, 0, 0, 0, 1, 1}, ids_for(9), 5, 7);
  const auto hits = query_knn(index, VectorXd::Ones(6), 4);
  ASSERT_EQ(hits.size(), 6u);
  EXPECT_EQ(std::count_if(hits.begin(), hits.end(), [](const Candidate& c) { return c.label == 1; }), 2);
  EXPECT_THROW(query_knn(index, VectorXd::Ones(6), 0), UsageError);
  EXPECT_THROW(query_knn(index, VectorXd::Ones(5), 1), DataError);
}

TEST(QueryKnn, StoredVectorIsAtDistanceZero) {
  std::mt19937_64 rng(6);
  const MatrixXd feats = test::random_matrix(40, 64, rng, 5.0);
  const auto labels = test::random_labels(40, 2, rng);
  const auto ids = ids_for(40);
  const auto index = build_index(feats, labels, ids, 30, 11, 2);
  for (Eigen::Index r = 0; r < 40; ++r) {
    const auto hits = query_knn(index, feats.row(r).transpose(), 1);
    const int own = labels[static_cast<std::size_t>(r)];
    const auto& top = hits[static_cast<std::size_t>(own)];
    EXPECT_EQ(top.distance, 0.0);
    EXPECT_EQ(top.video_id, ids[static_cast<std::size_t>(r)]);
  }
}

TEST(QueryKnn, DuplicateVectorsTieOnId) {
  MatrixXd feats(3, 2);
  feats << 1, 1, 1, 1, 5, 5;
  const std::vector<std::string> ids{"zeta", "alpha", "mid"};
  const auto index = build_index(feats, std::vector<int>{0, 0, 0}, ids, 4, 2);
  const auto hits = query_knn(index, VectorXd::Ones(2), 3);
  ASSERT_EQ(hits.size(), 3u);
  EXPECT_EQ(hits[0].video_id, "alpha");
  EXPECT_EQ(hits[1].video_id, "zeta");
  EXPECT_EQ(hits[0].distance, hits[1].distance);
  EXPECT_EQ(hits[2].video_id, "mid");
}

TEST(QueryKnn, MatchesBruteForceOracle) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const MatrixXd feats = test::random_matrix(60, 20, rng);
    const auto labels = test::random_labels(60, 3, rng);
    const auto ids = ids_for(60);
    const auto index = build_index(feats, labels, ids, 15, 50 + trial, 3);
    const VectorXd q = test::random_matrix(20, 1, rng).col(0);
    const auto hits = query_knn(index, q, 7);
    std::size_t pos = 0;
    for (int c = 0; c < 3; ++c) {
      std::vector<Eigen::Index> rows;
      std::vector<std::string> member_ids;
      for (Eigen::Index r = 0; r < 60; ++r) {
        if (labels[static_cast<std::size_t>(r)] == c) rows.push_back(r), member_ids.push_back(ids[static_cast<std::size_t>(r)]);
      }
      MatrixXd members(static_cast<Eigen::Index>(rows.size()), 20);
      for (std::size_t k = 0; k < rows.size(); ++k) members.row(static_cast<Eigen::Index>(k)) = feats.row(rows[k]);
      const auto want = test::oracle_bucket_knn(index.bucket(c).family.projections, members, member_ids, q, 7);
      for (const auto& w : want) {
        ASSERT_LT(pos, hits.size());
        EXPECT_EQ(hits[pos].video_id, w.id);
        EXPECT_EQ(hits[pos].label, c);
        EXPECT_NEAR(hits[pos].distance, w.distance, 1e-9 * (1.0 + w.distance));
        ++pos;
      }
    }
    EXPECT_EQ(pos, hits.size());
  }
}

TEST(SoftVote, InverseDistanceExample) {
  const std::vector<Candidate> c{{"a", 0, 1.0}, {"b", 1, 3.0}};
  const auto v = soft_vote(c, 2);
  const double w0 = 1.0 / (1.0 + kVoteEpsilon), w1 = 1.0 / (3.0 + kVoteEpsilon);
  EXPECT_NEAR(v.confidences(0), w0 / (w0 + w1), 1e-15);
  EXPECT_NEAR(v.confidences(0), 0.75, 1e-8);
  EXPECT_NEAR(v.confidences(1), 0.25, 1e-8);
  EXPECT_EQ(v.predicted, 0);
}

TEST(SoftVote, ZeroDistanceDominates) {
  const std::vector<Candidate> c{{"a", 0, 0.5}, {"b", 0, 0.5}, {"x", 2, 0.0}};
  const auto v = soft_vote(c, 3);
  EXPECT_EQ(v.predicted, 2);
  EXPECT_GT(v.confidences(2), 0.999999);
  EXPECT_EQ(v.confidences(1), 0.0);
}

TEST(SoftVote, TieGoesToLowerClass) {
  const std::vector<Candidate> c{{"a", 2, 1.0}, {"b", 1, 1.0}};
  const auto v = soft_vote(c, 3);
  EXPECT_EQ(v.confidences(1), v.confidences(2));
  EXPECT_EQ(v.predicted, 1);
}

TEST(SoftVote, InvalidInputs) {
  EXPECT_THROW(soft_vote(std::vector<Candidate>{}, 2), DataError);
  EXPECT_THROW(soft_vote(std::vector<Candidate>{{"a", 3, 1.0}}, 2), DataError);
  EXPECT_THROW(soft_vote(std::vector<Candidate>{{"a", 0, -1.0}}, 2), DataError);
}

TEST(SoftVote, SumsToOneAndRelabelsEquivariantly) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> dist(0.0, 10.0);
  std::uniform_int_distribution<int> cls(0, 4);
  const std::vector<int> perm{3, 0, 4, 1, 2};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Candidate> c, relabeled;
    const int n = 1 + trial % 17;
    for (int i = 0; i < n; ++i) {
      Candidate cand{"id" + std::to_string(i), cls(rng), dist(rng)};
      c.push_back(cand);
      cand.label = perm[static_cast<std::size_t>(cand.label)];
      relabeled.push_back(cand);
    }
    const auto a = soft_vote(c, 5);
    const auto b = soft_vote(relabeled, 5);
    EXPECT_NEAR(a.confidences.sum(), 1.0, 1e-12);
    EXPECT_TRUE((a.confidences.array() >= 0.0).all());
    for (int k = 0; k < 5; ++k) EXPECT_NEAR(a.confidences(k), b.confidences(perm[static_cast<std::size_t>(k)]), 1e-15);
  }
}

TEST(Classify, EqualsKnnThenVote) {
  std::mt19937_64 rng(9);
  const MatrixXd feats = test::random_matrix(20, 10, rng);
  const auto labels = test::random_labels(20, 4, rng);
  std::vector<int> fixed = labels;
  for (int c = 0; c < 4; ++c) fixed[static_cast<std::size_t>(c)] = c;
  const auto index = build_index(feats, fixed, ids_for(20), 8, 3, 4);
  for (int t = 0; t < 20; ++t) {
    const VectorXd q = test::random_matrix(10, 1, rng).col(0);
    const auto direct = classify(index, q, 3);
    const auto hits = query_knn(index, q, 3);
    const auto composed = soft_vote(hits, 4);
    EXPECT_EQ(direct.predicted, composed.predicted);
    EXPECT_EQ(direct.confidences, composed.confidences);
  }
}

TEST(Classify, SeparatedClustersAreRecovered) {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> noise(0.0, 0.05);
  MatrixXd feats(60, 16);
  std::vector<int> labels(60);
  for (int i = 0; i < 60; ++i) {
    labels[static_cast<std::size_t>(i)] = i % 3;
    for (int k = 0; k < 16; ++k) feats(i, k) = (k % 3 == i % 3 ? 1.0 : 0.0) + noise(rng);
  }
  const auto index = build_index(feats, labels, ids_for(60), 20, 5);
  for (int c = 0; c < 3; ++c) {
    VectorXd q(16);
    for (int k = 0; k < 16; ++k) q(k) = (k % 3 == c ? 1.0 : 0.0) + noise(rng);
    EXPECT_EQ(classify(index, q, 5).predicted, c);
  }
}

TEST(IndexFile, RoundTripPreservesQueries) {
  test::ScratchDir dir("index");
  std::mt19937_64 rng(11);
  const MatrixXd feats = test::random_matrix(25, 12, rng);
  std::vector<int> labels(25);
  for (int i = 0; i < 25; ++i) labels[static_cast<std::size_t>(i)] = i % 5;
  const auto index = build_index(feats, labels, ids_for(25, "clip_"), 9, 77);
  save_index(dir / "i.lsfi", index);
  const auto back = load_index(dir / "i.lsfi");
  ASSERT_EQ(back.num_classes(), 5);
  EXPECT_EQ(back.input_width(), 12);
  for (int c = 0; c < 5; ++c) {
    EXPECT_EQ(back.bucket(c).family.projections, index.bucket(c).family.projections);
    EXPECT_EQ(back.bucket(c).family.seed, index.bucket(c).family.seed);
    EXPECT_EQ(back.bucket(c).hashes, index.bucket(c).hashes);
    EXPECT_EQ(back.bucket(c).video_ids, index.bucket(c).video_ids);
  }
  const VectorXd q = test::random_matrix(12, 1, rng).col(0);
  EXPECT_EQ(classify(back, q, 3).confidences, classify(index, q, 3).confidences);
  save_index(dir / "j.lsfi", back);
  EXPECT_EQ(test::read_bytes(dir / "i.lsfi"), test::read_bytes(dir / "j.lsfi"));
}

TEST(IndexFile, CorruptedMagicAndTruncation) {
  test::ScratchDir dir("index");
  std::mt19937_64 rng(12);
  const auto index = build_index(test::random_matrix(4, 3, rng), std::vector<int>{0, 1, 0, 1}, ids_for(4), 2, 1);
  save_index(dir / "i.lsfi", index);
  const std::string bytes = test::read_bytes(dir / "i.lsfi");
  std::ofstream(dir / "bad.lsfi", std::ios::binary) << "LSFX" << bytes.substr(4);
  try {
    load_index(dir / "bad.lsfi");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("LSFI"), std::string::npos);
  }
  std::ofstream(dir / "short.lsfi", std::ios::binary) << bytes.substr(0, bytes.size() - 3);
  EXPECT_THROW(load_index(dir / "short.lsfi"), DataError);
}

}  // namespace
}  // namespace lsf
