#include <gtest/gtest.h>

#include <numeric>

#include "mcatlas/errors.hpp"
#include "mcatlas/metrics.hpp"
#include "test_support.hpp"

namespace mca {
namespace {

TEST(CorrErrors, HandEnumeratedPair) {
  PointSet q(2, 3);
  q << 0, 0, 0, 1, 0, 0;
  const PointSet f = q.colwise().reverse();
  const CorrErrors e = corr_errors(f, q, q);
  EXPECT_EQ(e.m_sl2, 1.0);
  EXPECT_EQ(e.m_r, 0.5);
  const CorrErrors perfect = corr_errors(q, q, q);
  EXPECT_EQ(perfect.m_sl2, 0.0);
  EXPECT_EQ(perfect.m_r, 0.0);
}

TEST(CorrErrors, MatchesBruteForce) {
  Rng rng(1);
  for (int k = 0; k < 10; ++k) {
    const PointSet target = testing::random_points(50 + k, rng);
    const PointSet truth = target.topRows(50);
    const PointSet pred = testing::random_points(50, rng);
    double sl2 = 0.0, rank = 0.0;
    for (Eigen::Index i = 0; i < 50; ++i) {
      const double e = (pred.row(i) - truth.row(i)).squaredNorm();
      sl2 += e;
      for (Eigen::Index l = 0; l < target.rows(); ++l) rank += (target.row(l) - truth.row(i)).squaredNorm() < e;
    }
    const CorrErrors got = corr_errors(pred, truth, target);
    EXPECT_DOUBLE_EQ(got.m_sl2, sl2 / 50);
    EXPECT_DOUBLE_EQ(got.m_r, rank / (50.0 * static_cast<double>(target.rows())));
  }
}

TEST(Pck, DegenerateCurves) {
  const std::vector<double> zero(10, 0.0), far(10, 1.0);
  const PckResult a = pck_auc(zero);
  EXPECT_EQ(a.curve.thresholds.size(), 100u);
  EXPECT_EQ(a.curve.thresholds.back(), 0.02);
  EXPECT_DOUBLE_EQ(a.auc, 1.0);
  EXPECT_EQ(pck_auc(far).auc, 0.0);
  EXPECT_THROW(pck_auc(zero, 0.1, 0.1), std::invalid_argument);
  EXPECT_THROW(pck_auc(std::vector<double>{}), std::invalid_argument);
}

TEST(Pck, UniformErrorsGiveHalf) {
  Rng rng(2);
  std::uniform_real_distribution<double> u(0.0, 0.02);
  std::vector<double> d(10000);
  for (auto& x : d) x = u(rng);
  EXPECT_NEAR(pck_auc(d).auc, 0.5, 0.02);
}

TEST(Pck, MatchesTrapezoidOracle) {
  Rng rng(3);
  std::uniform_real_distribution<double> u(0.0, 0.03);
  std::vector<double> d(137);
  for (auto& x : d) x = u(rng);
  const PckResult r = pck_auc(d, 0.0, 0.02, 100);
  double area = 0.0, prev = 0.0;
  for (int k = 0; k < 100; ++k) {
    const double t = k == 99 ? 0.02 : (0.02 / 99.0) * k;
    double frac = 0.0;
    for (double x : d) frac += x <= t;
    frac /= static_cast<double>(d.size());
    EXPECT_DOUBLE_EQ(r.curve.fraction[static_cast<std::size_t>(k)], frac);
    if (k > 0) area += 0.5 * (frac + prev) * (0.02 / 99.0);
    prev = frac;
  }
  EXPECT_NEAR(r.auc, area / 0.02, 1e-12);
}

TEST(MeanStd, PopulationStatistics) {
  const Stat s = mean_std(std::vector<double>{1, 2, 3, 4});
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_DOUBLE_EQ(s.std, std::sqrt(1.25));
  EXPECT_EQ(mean_std(std::vector<double>{7}).std, 0.0);
}

PointCloudSequence flat_sequence(int frames) {
  PointCloudSequence seq;
  PointSet grid(100, 3);
  for (int i = 0; i < 100; ++i) grid.row(i) = Vec3((i % 10) / 9.0, (i / 10) / 9.0, 0).transpose();
  std::vector<int> ids(100);
  std::iota(ids.begin(), ids.end(), 0);
  seq.frames.assign(static_cast<std::size_t>(frames), grid);
  seq.ids = std::vector<std::vector<int>>(static_cast<std::size_t>(frames), ids);
  return seq;
}

TEST(EvaluateProtocol, PerfectFitSinglePair) {
  const AtlasModel m = testing::affine_model({testing::scaling(1, 1)}, {Vec3::Zero()});
  EvalOptions o;
  o.pairs = 1;
  o.points = 400;
  o.area_samples = 256;
  Rng rng(4);
  const EvalReport r = evaluate_protocol(flat_sequence(2), m, o, rng);
  ASSERT_EQ(r.pairs.size(), 1u);
  EXPECT_EQ(r.m_sl2.std, 0.0);
  EXPECT_EQ(r.auc.std, 0.0);
  EXPECT_LT(r.m_sl2.mean, 1e-12);
  EXPECT_EQ(r.pairs[0].evaluated_points, 100);
  EXPECT_EQ(r.pck_thresholds.size(), 100u);
}

TEST(EvaluateProtocol, ThreadsDoNotChangeResult) {
  const AtlasModel m(testing::tiny_architecture(), 5);
  EvalOptions o;
  o.pairs = 9;
  o.points = 200;
  o.area_samples = 256;
  Rng a(5), b(5);
  const EvalReport one = evaluate_protocol(flat_sequence(4), m, o, a);
  o.threads = 3;
  const EvalReport three = evaluate_protocol(flat_sequence(4), m, o, b);
  EXPECT_EQ(one.m_sl2.mean, three.m_sl2.mean);
  EXPECT_EQ(one.m_r.mean, three.m_r.mean);
}

TEST(EvaluateProtocol, MissingIdsIsDataError) {
  PointCloudSequence seq = flat_sequence(2);
  seq.ids.reset();
  const AtlasModel m(testing::tiny_architecture(), 5);
  Rng rng(6);
  try {
    evaluate_protocol(seq, m, EvalOptions{}, rng);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("ids"), std::string::npos);
  }
}

}  // namespace
}  // namespace mca
