#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mcatlas/atlas_model.hpp"
#include "mcatlas/objectives.hpp"
#include "mcatlas/sampling.hpp"
#include "mcatlas/sequence.hpp"

namespace mca {

struct TrainConfig {
  double lr = 0.001;
  int batch_pairs = 4;
  int iterations = 200000;
  double alpha_mc = 0.1;
  int delta = 1;
  int uv_samples_per_frame = 2500;
  std::vector<double> milestones{0.8, 0.9};
  double lr_decay = 10.0;
  std::uint64_t seed = 0;
  PairStrategy strategy = PairStrategy::Neighbors;
  int checkpoint_every = 0;  // 0: only the final state
  AtlasArchitecture architecture;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct OptimState {
  std::vector<ad::Matrix> first_moment;
  std::vector<ad::Matrix> second_moment;
  std::int64_t step = 0;
  double lr = 0.0;
};

OptimState make_optim_state(const ad::ParameterSet& params, double lr);

// Adam (beta1 0.9, beta2 0.999, eps 1e-8) with bias correction.
// Throws NumericalError naming the parameter block on a non-finite gradient.
void adam_step(ad::ParameterSet& params, std::span<const ad::Matrix> grads, OptimState& state, double lr);

// Base lr divided by `lr_decay` once per milestone reached; milestone m takes
// effect at iteration ceil(m * iterations).
double learning_rate_at(const TrainConfig& config, int iteration);

struct TrainingSnapshot {
  const AtlasModel& model;
  const OptimState& state;
  const TrainConfig& config;
  const Rng& rng;
  int iteration;  // iterations completed
};

using CheckpointSink = std::function<void(const TrainingSnapshot&)>;
using ProgressFn = std::function<void(int iteration, const LossBreakdown&)>;

struct TrainResult {
  AtlasModel model;
  OptimState state;
  std::vector<LossBreakdown> history;
  Rng rng;
};

// Optimizes a fresh model on the sequence. The sink is called every
// `checkpoint_every` iterations and once after the last one.
TrainResult train_sequence(const PointCloudSequence& sequence, const TrainConfig& config,
                           const CheckpointSink& sink = {}, const ProgressFn& progress = {});

}  // namespace mca
