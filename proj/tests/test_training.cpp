#include <gtest/gtest.h>

#include <cmath>

#include "mcatlas/dataset.hpp"
#include "mcatlas/errors.hpp"
#include "mcatlas/training.hpp"
#include "test_support.hpp"

namespace mca {
namespace {

ad::ParameterSet one_block(double x) {
  ad::ParameterSet p;
  p.add("x", ad::Matrix::Constant(1, 1, x));
  return p;
}

TEST(Adam, ZeroGradientLeavesParametersAndDecaysMoments) {
  ad::ParameterSet p = one_block(2.0);
  OptimState s = make_optim_state(p, 0.1);
  s.first_moment[0](0, 0) = 1.0;
  s.second_moment[0](0, 0) = 1.0;
  s.step = 0;
  const std::vector<ad::Matrix> g{ad::Matrix::Zero(1, 1)};
  adam_step(p, g, s, 0.0);
  EXPECT_EQ(p.value(0)(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(s.first_moment[0](0, 0), 0.9);
  EXPECT_DOUBLE_EQ(s.second_moment[0](0, 0), 0.999);
}

TEST(Adam, FirstStepMatchesHandComputation) {
  ad::ParameterSet p = one_block(1.0);
  OptimState s = make_optim_state(p, 0.01);
  const double g = 0.37;
  adam_step(p, std::vector<ad::Matrix>{ad::Matrix::Constant(1, 1, g)}, s, 0.01);
  const double m = 0.1 * g / (1 - 0.9);
  const double v = 0.001 * g * g / (1 - 0.999);
  EXPECT_NEAR(p.value(0)(0, 0), 1.0 - 0.01 * m / (std::sqrt(v) + 1e-8), 1e-12);
  EXPECT_EQ(s.step, 1);
}

TEST(Adam, ConvergesOnQuadraticBowl) {
  ad::ParameterSet p = one_block(1.0);
  OptimState s = make_optim_state(p, 0.05);
  for (int k = 0; k < 500; ++k) {
    const double x = p.value(0)(0, 0);
    adam_step(p, std::vector<ad::Matrix>{ad::Matrix::Constant(1, 1, 2 * x)}, s, 0.05);
  }
  EXPECT_LT(std::abs(p.value(0)(0, 0)), 1e-3);
}

TEST(Adam, NonFiniteGradientNamesBlock) {
  ad::ParameterSet p = one_block(1.0);
  OptimState s = make_optim_state(p, 0.05);
  try {
    adam_step(p, std::vector<ad::Matrix>{ad::Matrix::Constant(1, 1, NAN)}, s, 0.05);
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("'x'"), std::string::npos);
  }
  EXPECT_EQ(p.value(0)(0, 0), 1.0);
}

TEST(LearningRate, MilestonesDivideByDecay) {
  TrainConfig c;
  c.lr = 1e-3;
  c.iterations = 1000;
  EXPECT_DOUBLE_EQ(learning_rate_at(c, 0), 1e-3);
  EXPECT_DOUBLE_EQ(learning_rate_at(c, 799), 1e-3);
  EXPECT_DOUBLE_EQ(learning_rate_at(c, 800), 1e-4);
  EXPECT_DOUBLE_EQ(learning_rate_at(c, 899), 1e-4);
  EXPECT_DOUBLE_EQ(learning_rate_at(c, 900), 1e-5);
  c.iterations = 7;  // 5.6 -> 6, 6.3 -> 7
  EXPECT_DOUBLE_EQ(learning_rate_at(c, 5), 1e-3);
  EXPECT_DOUBLE_EQ(learning_rate_at(c, 6), 1e-4);
}

TEST(TrainConfig, ValidationRejectsBadValues) {
  TrainConfig c;
  c.validate();
  c.milestones = {1.0};
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.alpha_mc = -1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.delta = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

PointCloudSequence small_sequence() {
  Rng rng(1);
  auto seq = generate_synthetic(SynthKind::BendingPlane, 4, 60, 1.0, rng);
  normalize_to_unit_cube(seq);
  return seq;
}

TrainConfig small_config(int iterations) {
  TrainConfig c;
  c.iterations = iterations;
  c.uv_samples_per_frame = 20;
  c.batch_pairs = 2;
  c.seed = 4;
  c.architecture = testing::tiny_architecture(2, 4);
  return c;
}

TEST(TrainSequence, ZeroIterationsReturnsInitialModel) {
  int calls = 0;
  const auto r = train_sequence(small_sequence(), small_config(0), [&](const TrainingSnapshot& s) {
    ++calls;
    EXPECT_EQ(s.iteration, 0);
  });
  EXPECT_TRUE(r.history.empty());
  EXPECT_EQ(calls, 1);
  const AtlasModel fresh(small_config(0).architecture, 4);
  for (std::size_t i = 0; i < fresh.parameters().size(); ++i) {
    EXPECT_EQ(r.model.parameters().value(i), fresh.parameters().value(i));
  }
}

TEST(TrainSequence, DeterministicAndCheckpointCadence) {
  TrainConfig c = small_config(25);
  c.checkpoint_every = 10;
  std::vector<int> at;
  const auto a = train_sequence(small_sequence(), c, [&](const TrainingSnapshot& s) { at.push_back(s.iteration); });
  const auto b = train_sequence(small_sequence(), c);
  EXPECT_EQ(at, (std::vector<int>{10, 20, 25}));
  ASSERT_EQ(a.history.size(), 25u);
  for (std::size_t i = 0; i < a.model.parameters().size(); ++i) {
    EXPECT_EQ(a.model.parameters().value(i), b.model.parameters().value(i));
  }
  EXPECT_EQ(a.state.step, 25);
}

TEST(TrainSequence, ReducesChamfer) {
  TrainConfig c = small_config(300);
  c.lr = 5e-3;
  c.alpha_mc = 0.1;
  const auto r = train_sequence(small_sequence(), c);
  double head = 0.0, tail = 0.0;
  for (int k = 0; k < 20; ++k) {
    head += r.history[static_cast<std::size_t>(k)].chamfer;
    tail += r.history[r.history.size() - 1 - static_cast<std::size_t>(k)].chamfer;
  }
  EXPECT_LT(tail, 0.5 * head);
}

TEST(TrainSequence, SingleFrameIsDataError) {
  PointCloudSequence seq = small_sequence();
  seq.frames.resize(1);
  seq.ids.reset();
  EXPECT_THROW(train_sequence(seq, small_config(1)), DataError);
}

}  // namespace
}  // namespace mca
