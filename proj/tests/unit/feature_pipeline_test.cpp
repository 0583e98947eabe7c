#include "lsf/feature_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <gtest/gtest.h>

#include "lsf/error.hpp"
#include "test_support.hpp"

namespace lsf {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST(AveragePool, SingleRowUnchanged) {
  MatrixXd codes(1, 4);
  codes << 1.5, -2, 0, 7;
  const auto f = average_pool("v", codes);
  EXPECT_EQ(f.values, VectorXd(codes.row(0).transpose()));
  EXPECT_EQ(f.video_id, "v");
}

TEST(AveragePool, SymmetricPair) {
  MatrixXd codes(2, 2);
  codes << 0, 2, 2, 0;
  EXPECT_EQ(average_pool("v", codes).values, VectorXd::Ones(2));
}

TEST(AveragePool, MatchesCompensatedSummation) {
  std::mt19937_64 rng(1);
  const MatrixXd codes = test::random_matrix(500, 128, rng, 3.0);
  const auto f = average_pool("v", codes);
  for (Eigen::Index k = 0; k < codes.cols(); ++k) {
    // Kahan summation in double.
    double sum = 0.0, carry = 0.0;
    for (Eigen::Index r = 0; r < codes.rows(); ++r) {
      const double y = codes(r, k) - carry;
      const double t = sum + y;
      carry = (t - sum) - y;
      sum = t;
    }
    EXPECT_NEAR(f.values(k), sum / 500.0, 1e-12);
  }
}

TEST(AveragePool, EmptyMatrixIsAnError) { EXPECT_THROW(average_pool("v", MatrixXd(0, 4)), DataError); }

TEST(Fisher, ConstantComponentScoresZero) {
  MatrixXd x(4, 2);
  x << 3, 0, 3, 1, 3, 5, 3, 6;
  const std::vector<int> labels{0, 0, 1, 1};
  const auto r = fisher_scores(x, labels);
  EXPECT_EQ(r.scores(0), 0.0);
  EXPECT_GT(r.scores(1), 0.0);
  EXPECT_TRUE(r.perfectly_separating.empty());
}

TEST(Fisher, PerfectSeparationHitsEpsilonGuard) {
  MatrixXd x(4, 1);
  x << 0, 0, 1, 1;
  const std::vector<int> labels{0, 0, 1, 1};
  const auto r = fisher_scores(x, labels);
  // numerator 2(0 - 0.5)^2 + 2(1 - 0.5)^2 = 1, denominator 0 + eps
  EXPECT_DOUBLE_EQ(r.scores(0), 1.0 / kFisherEpsilon);
  ASSERT_EQ(r.perfectly_separating.size(), 1u);
  EXPECT_EQ(r.perfectly_separating[0], 0);
}

TEST(Fisher, StatsUsePopulationDeviation) {
  MatrixXd x(4, 1);
  x << 1, 3, 10, 10;
  const std::vector<int> labels{0, 0, 1, 1};
  const auto r = fisher_scores(x, labels);
  EXPECT_DOUBLE_EQ(r.stats.class_means(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(r.stats.class_stddevs(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(r.stats.class_stddevs(1, 0), 0.0);
  EXPECT_DOUBLE_EQ(r.stats.global_means(0), 6.0);
  EXPECT_EQ(r.stats.class_sizes, (std::vector<std::size_t>{2, 2}));
}

TEST(Fisher, MatchesBruteForceOracle) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    MatrixXd x = test::random_matrix(120, 32, rng);
    const auto labels = test::random_labels(120, 6, rng);
    for (Eigen::Index r = 0; r < x.rows(); ++r) x.row(r).array() += 0.3 * labels[static_cast<std::size_t>(r)];
    const auto got = fisher_scores(x, labels, 6).scores;
    const auto want = test::oracle_fisher(x, labels, 6);
    for (Eigen::Index i = 0; i < got.size(); ++i) {
      EXPECT_NEAR(got(i), want[static_cast<std::size_t>(i)], 1e-9 * std::abs(want[static_cast<std::size_t>(i)]));
    }
  }
}

TEST(Fisher, ScaleCovariance) {
  std::mt19937_64 rng(3);
  MatrixXd x = test::random_matrix(90, 8, rng);
  const auto labels = test::random_labels(90, 3, rng);
  const auto base = fisher_scores(x, labels).scores;
  for (double k : {-4.0, 0.01, 250.0}) {
    MatrixXd scaled = x;
    scaled.col(5) *= k;
    const auto s = fisher_scores(scaled, labels).scores;
    EXPECT_NEAR(s(5), base(5), 1e-9 * base(5));
  }
}

TEST(Fisher, PermutationInvariance) {
  std::mt19937_64 rng(4);
  const MatrixXd x = test::random_matrix(60, 10, rng);
  const auto labels = test::random_labels(60, 4, rng);
  std::vector<int> perm(60);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  MatrixXd px(60, 10);
  std::vector<int> pl(60);
  for (int i = 0; i < 60; ++i) {
    px.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
    pl[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
  }
  const auto a = fisher_scores(x, labels).scores;
  const auto b = fisher_scores(px, pl).scores;
  for (Eigen::Index i = 0; i < a.size(); ++i) EXPECT_NEAR(a(i), b(i), 1e-12 * std::abs(a(i)));
  EXPECT_EQ(fit_selector(a, 50).selected, fit_selector(b, 50).selected);
}

TEST(Fisher, DuplicatedClassFollowsSizeWeighting) {
  std::mt19937_64 rng(5);
  MatrixXd x = test::random_matrix(40, 6, rng);
  auto labels = test::random_labels(40, 3, rng);
  // Append a second copy of every class-1 sample.
  std::vector<Eigen::Index> ones;
  for (Eigen::Index r = 0; r < 40; ++r) {
    if (labels[static_cast<std::size_t>(r)] == 1) ones.push_back(r);
  }
  MatrixXd dup(40 + static_cast<Eigen::Index>(ones.size()), 6);
  dup.topRows(40) = x;
  for (std::size_t k = 0; k < ones.size(); ++k) {
    dup.row(40 + static_cast<Eigen::Index>(k)) = x.row(ones[k]);
    labels.push_back(1);
  }
  const auto got = fisher_scores(dup, labels, 3);
  EXPECT_EQ(got.stats.class_sizes[1], 2 * ones.size());
  const auto want = test::oracle_fisher(dup, labels, 3);
  for (Eigen::Index i = 0; i < 6; ++i) {
    EXPECT_NEAR(got.scores(i), want[static_cast<std::size_t>(i)], 1e-9 * want[static_cast<std::size_t>(i)]);
  }
}

TEST(Fisher, SingleClassGivesZeroScoresWithFlag) {
  std::mt19937_64 rng(6);
  const MatrixXd x = test::random_matrix(10, 4, rng);
  const std::vector<int> labels(10, 2);
  const auto r = fisher_scores(x, labels);
  EXPECT_TRUE(r.single_class);
  EXPECT_TRUE(r.scores.isZero(0.0));
}

TEST(Fisher, InvalidInputs) {
  EXPECT_THROW(fisher_scores(MatrixXd::Zero(1, 3), std::vector<int>{0}), DataError);
  EXPECT_THROW(fisher_scores(MatrixXd::Zero(3, 3), std::vector<int>{0, 1}), UsageError);
  EXPECT_THROW(fisher_scores(MatrixXd::Zero(2, 3), std::vector<int>{0, 4}, 3), DataError);
}

TEST(Selector, HalfOf128Is64) {
  std::mt19937_64 rng(7);
  const VectorXd scores = test::random_matrix(128, 1, rng).col(0).cwiseAbs();
  const auto s = fit_selector(scores, 50);
  EXPECT_EQ(s.selected.size(), 64u);
  // Exactly the top 64 by score.
  std::vector<double> sorted(scores.data(), scores.data() + 128);
  std::sort(sorted.rbegin(), sorted.rend());
  for (auto i : s.selected) EXPECT_GE(scores(i), sorted[63]);
}

TEST(Selector, FullSelectionIsIdentity) {
  const VectorXd scores = VectorXd::LinSpaced(10, 5, -5);
  const auto s = fit_selector(scores, 100);
  std::vector<std::uint32_t> all(10);
  std::iota(all.begin(), all.end(), 0u);
  EXPECT_EQ(s.selected, all);
  VectorXd f = VectorXd::LinSpaced(10, 0, 9);
  EXPECT_EQ(apply_selection(s, f), f);
}

TEST(Selector, TiesPreferLowerIndex) {
  VectorXd scores(4);
  scores << 3, 1, 2, 2;
  EXPECT_EQ(fit_selector(scores, 50).selected, (std::vector<std::uint32_t>{0, 2}));
  VectorXd flat = VectorXd::Constant(6, 1.0);
  EXPECT_EQ(fit_selector(flat, 50).selected, (std::vector<std::uint32_t>{0, 1, 2}));
}

TEST(Selector, SizeIsCeilingForAllQ) {
  for (Eigen::Index d : {1, 7, 128, 300}) {
    for (int qi = 1; qi <= 1000; ++qi) {
      const double q = qi / 10.0;
      const auto n = selection_size(q, d);
      // Integer form of ceil(q * d / 100) with q = qi / 10.
      const auto want = static_cast<std::size_t>((qi * d + 999) / 1000);
      EXPECT_EQ(n, std::max<std::size_t>(want, 1)) << "q=" << q << " d=" << d;
    }
  }
  EXPECT_THROW(selection_size(0.0, 10), UsageError);
  EXPECT_THROW(selection_size(100.5, 10), UsageError);
}

TEST(ApplySelection, DirectGather) {
  FeatureSelector s{VectorXd::Zero(4), {0, 2}, 50};
  VectorXd f(4);
  f << 5, 6, 7, 8;
  const VectorXd out = apply_selection(s, f);
  ASSERT_EQ(out.size(), 2);
  EXPECT_EQ(out(0), 5);
  EXPECT_EQ(out(1), 7);
  EXPECT_THROW(apply_selection(s, VectorXd(VectorXd::Zero(3))), DataError);
}

TEST(ApplySelection, MatchesIndexLoop) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const VectorXd scores = test::random_matrix(40, 1, rng).col(0);
    const auto s = fit_selector(scores, 1 + trial * 5);
    const MatrixXd feats = test::random_matrix(3, 40, rng);
    const MatrixXd rows = apply_selection(s, feats);
    for (Eigen::Index r = 0; r < 3; ++r) {
      const VectorXd single = apply_selection(s, VectorXd(feats.row(r).transpose()));
      for (std::size_t k = 0; k < s.selected.size(); ++k) {
        EXPECT_EQ(single(static_cast<Eigen::Index>(k)), feats(r, s.selected[k]));
        EXPECT_EQ(rows(r, static_cast<Eigen::Index>(k)), feats(r, s.selected[k]));
      }
    }
  }
}

TEST(SelectorFile, RoundTripAndCsvExport) {
  test::ScratchDir dir("selector");
  VectorXd scores(5);
  scores << 0.5, 1e12, 0.0, 3.25, 0.1;
  const auto s = fit_selector(scores, 40);
  save_selector(dir / "s.lsfs", s);
  const auto back = load_selector(dir / "s.lsfs");
  EXPECT_EQ(back.scores, s.scores);
  EXPECT_EQ(back.selected, s.selected);
  EXPECT_EQ(back.q, 40.0);
  export_selector_csv(dir / "s.csv", s);
  std::ifstream in(dir / "s.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "component,score,selected");
  std::getline(in, line);
  EXPECT_EQ(line, "0,0.5,0");
  std::getline(in, line);
  EXPECT_EQ(line, "1,1e+12,1");
}

TEST(SelectorFile, CorruptedMagic) {
  test::ScratchDir dir("selector");
  save_selector(dir / "s.lsfs", fit_selector(VectorXd::Ones(3), 50));
  {
    std::fstream f(dir / "s.lsfs", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(2);
    f.put('?');
  }
  try {
    load_selector(dir / "s.lsfs");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("LSFS"), std::string::npos);
  }
}

TEST(FeaturesCsv, RoundTripIsExact) {
  test::ScratchDir dir("features");
  std::mt19937_64 rng(9);
  std::vector<PooledFeature> feats;
  for (int i = 0; i < 5; ++i) feats.push_back({"vid" + std::to_string(i), test::random_matrix(128, 1, rng).col(0)});
  write_features_csv(dir / "f.csv", feats);
  const auto back = read_features_csv(dir / "f.csv");
  ASSERT_EQ(back.size(), feats.size());
  for (std::size_t i = 0; i < feats.size(); ++i) {
    EXPECT_EQ(back[i].video_id, feats[i].video_id);
    EXPECT_EQ(back[i].values, feats[i].values);
  }
  std::ifstream in(dir / "f.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_TRUE(header.starts_with("video_id,v0,v1,"));
  EXPECT_TRUE(header.ends_with(",v127"));
}

TEST(FeaturesCsv, RejectsMalformedRows) {
  test::ScratchDir dir("features");
  std::ofstream(dir / "f.csv") << "video_id,v0,v1\na,1,2\nb,1\n";
  EXPECT_THROW(read_features_csv(dir / "f.csv"), DataError);
  std::ofstream(dir / "g.csv") << "video_id,v0,v1\na,1,x\n";
  EXPECT_THROW(read_features_csv(dir / "g.csv"), DataError);
  std::ofstream(dir / "h.csv") << "video_id,v0\na,1,2\n";
  EXPECT_THROW(read_features_csv(dir / "h.csv"), DataError);
}

}  // namespace
}  // namespace lsf
