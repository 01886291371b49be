#include "mcatlas/training.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <string>

#include "mcatlas/errors.hpp"
#include "mcatlas/kdtree.hpp"

namespace mca {

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be > 0");
  if (batch_pairs < 1) throw std::invalid_argument("batch_pairs must be >= 1");
  if (iterations < 0) throw std::invalid_argument("iterations must be >= 0");
  if (!(alpha_mc >= 0.0)) throw std::invalid_argument("alpha_mc must be >= 0");
  if (delta < 1) throw std::invalid_argument("delta must be >= 1");
  if (uv_samples_per_frame < 1) throw std::invalid_argument("uv_samples_per_frame must be >= 1");
  for (double m : milestones) {
    if (!(m > 0.0 && m < 1.0)) throw std::invalid_argument("milestones must lie in (0, 1)");
  }
  if (!(lr_decay > 0.0)) throw std::invalid_argument("lr_decay must be > 0");
  if (checkpoint_every < 0) throw std::invalid_argument("checkpoint_every must be >= 0");
  architecture.validate();
}

OptimState make_optim_state(const ad::ParameterSet& params, double lr) {
  OptimState s;
  s.first_moment = params.zeros_like();
  s.second_moment = params.zeros_like();
  s.lr = lr;
  return s;
}

void adam_step(ad::ParameterSet& params, std::span<const ad::Matrix> grads, OptimState& state, double lr) {
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  if (grads.size() != params.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw std::invalid_argument("adam: gradient/state count does not match parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].rows() != params.value(i).rows() || grads[i].cols() != params.value(i).cols()) {
      throw std::invalid_argument("adam: gradient shape mismatch for '" + params.name(i) + "'");
    }
    if (!grads[i].allFinite()) {
      throw NumericalError("non-finite gradient in parameter block '" + params.name(i) + "'");
    }
  }
  state.step += 1;
  state.lr = lr;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    m = kBeta1 * m + (1.0 - kBeta1) * grads[i];
    v = kBeta2 * v + (1.0 - kBeta2) * grads[i].cwiseProduct(grads[i]);
    params.value(i).array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + kEps);
  }
}

double learning_rate_at(const TrainConfig& config, int iteration) {
  double lr = config.lr;
  for (double m : config.milestones) {
    const double at = std::ceil(m * static_cast<double>(config.iterations) - 1e-9);
    if (static_cast<double>(iteration) >= at) lr /= config.lr_decay;
  }
  return lr;
}

TrainResult train_sequence(const PointCloudSequence& sequence, const TrainConfig& config,
                           const CheckpointSink& sink, const ProgressFn& progress) {
  config.validate();
  sequence.validate();
  if (sequence.size() < 2) throw DataError("training needs a sequence of at least 2 frames");

  const int frames = static_cast<int>(sequence.size());
  std::vector<KdTree> indices;
  indices.reserve(sequence.frames.size());
  for (const auto& f : sequence.frames) indices.emplace_back(f);

  TrainResult result{AtlasModel(config.architecture, config.seed), {}, {},
                     Rng(config.seed ^ 0x9E3779B97F4A7C15ULL)};
  result.state = make_optim_state(result.model.parameters(), config.lr);
  result.history.reserve(static_cast<std::size_t>(config.iterations));

  auto emit = [&](int done) {
    if (sink) sink(TrainingSnapshot{result.model, result.state, config, result.rng, done});
  };

  for (int it = 0; it < config.iterations; ++it) {
    const double lr = learning_rate_at(config, it);
    const PairSet pairs =
        sample_training_pairs(frames, config.delta, config.strategy, config.batch_pairs, result.rng);
    TrainingBatch batch;
    std::set<int> distinct;
    for (const auto& [i, j] : pairs.pairs) {
      distinct.insert(i);
      distinct.insert(j);
      batch.pairs.emplace_back(i, j);
      batch.pair_uv.push_back(
          sample_uv_uniform(config.uv_samples_per_frame, config.architecture.patches, result.rng));
    }
    batch.frames.assign(distinct.begin(), distinct.end());

    LossAndGradient step;
    try {
      step = total_loss_with_gradient(result.model, batch, sequence.frames, indices, config.alpha_mc);
    } catch (const NumericalError& e) {
      throw NumericalError("iteration " + std::to_string(it) + ": " + e.what());
    }
    if (!std::isfinite(step.loss.total)) {
      throw NumericalError("non-finite loss at iteration " + std::to_string(it));
    }
    try {
      adam_step(result.model.parameters(), step.gradient, result.state, lr);
    } catch (const NumericalError& e) {
      throw NumericalError("iteration " + std::to_string(it) + ": " + e.what());
    }
    result.history.push_back(step.loss);
    if (progress) progress(it, step.loss);
    if (config.checkpoint_every > 0 && (it + 1) % config.checkpoint_every == 0 && it + 1 < config.iterations) {
      emit(it + 1);
    }
  }
  emit(config.iterations);
  return result;
}

}  // namespace mca
