#pragma once

#include <span>
#include <vector>

#include "mcatlas/atlas_model.hpp"
#include "mcatlas/sequence.hpp"
#include "mcatlas/types.hpp"

namespace mca {

struct CorrErrors {
  double m_sl2 = 0.0;  // mean squared error, scene units^2
  double m_r = 0.0;    // normalized rank in [0, 1]
};

// predicted[k] = f(p_k), truth[k] = q_k; the rank counts target points q_l
// with |q_l - q_k|^2 < |f(p_k) - q_k|^2 and is normalized by N * |target|.
CorrErrors corr_errors(const PointSet& predicted, const PointSet& truth, const PointSet& target);

struct PckCurve {
  std::vector<double> thresholds;
  std::vector<double> fraction;
};

struct PckResult {
  PckCurve curve;
  double auc = 0.0;  // normalized to [0, 1]
};

// Fraction of distances <= t at `resolution` evenly spaced thresholds over
// [d_min, d_max]; trapezoidal area divided by (d_max - d_min).
PckResult pck_auc(std::span<const double> distances, double d_min = 0.0, double d_max = 0.02,
                  int resolution = 100);

struct EvalOptions {
  int pairs = 500;
  int points = 3125;
  double d_min = 0.0;
  double d_max = 0.02;
  int resolution = 100;
  int area_samples = 1024;
  int threads = 1;
};

struct PairReport {
  int source = 0;
  int target = 0;
  int evaluated_points = 0;
  double m_sl2 = 0.0;
  double m_r = 0.0;
  double auc = 0.0;
};

struct Stat {
  double mean = 0.0;
  double std = 0.0;  // population
};

struct EvalReport {
  std::vector<PairReport> pairs;
  Stat m_sl2;
  Stat m_r;
  Stat auc;
  double chamfer = 0.0;  // per-frame CD against the frame's surface samples, averaged
  int points = 0;
  std::vector<double> pck_thresholds;
  std::vector<double> mean_pck;  // PCK curve averaged over pairs
};

Stat mean_std(std::span<const double> values);

// Draws `pairs` ordered frame pairs (i != j), maps every ground-truth-covered
// source point through the shared canonical samples and aggregates the
// metrics. Throws DataError when the sequence has no ids.
EvalReport evaluate_protocol(const PointCloudSequence& sequence, const AtlasModel& model,
                             const EvalOptions& options, Rng& rng);

}  // namespace mca
