#include "mcatlas/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <thread>

#include "mcatlas/correspondence.hpp"
#include "mcatlas/errors.hpp"
#include "mcatlas/kdtree.hpp"
#include "mcatlas/objectives.hpp"

namespace mca {

CorrErrors corr_errors(const PointSet& predicted, const PointSet& truth, const PointSet& target) {
  if (predicted.rows() != truth.rows()) {
    throw std::invalid_argument("corr_errors: " + std::to_string(predicted.rows()) + " predictions vs " +
                                std::to_string(truth.rows()) + " ground-truth points");
  }
  if (predicted.rows() == 0) throw std::invalid_argument("corr_errors: no points");
  if (target.rows() == 0) throw std::invalid_argument("corr_errors: empty target cloud");
  const KdTree index(target);
  double sl2 = 0.0;
  double rank = 0.0;
  for (Eigen::Index k = 0; k < predicted.rows(); ++k) {
    const Vec3 q = truth.row(k).transpose();
    const double e = squared_distance(predicted.row(k).transpose(), q);
    sl2 += e;
    rank += static_cast<double>(index.count_within(q, e));
  }
  const double n = static_cast<double>(predicted.rows());
  return {sl2 / n, rank / (n * static_cast<double>(target.rows()))};
}

PckResult pck_auc(std::span<const double> distances, double d_min, double d_max, int resolution) {
  if (distances.empty()) throw std::invalid_argument("pck_auc: empty error list");
  if (!(d_max > d_min) || d_min < 0.0) throw std::invalid_argument("pck_auc: need d_max > d_min >= 0");
  if (resolution < 2) throw std::invalid_argument("pck_auc: resolution must be >= 2");
  std::vector<double> sorted(distances.begin(), distances.end());
  for (double d : sorted) {
    if (!(d >= 0.0)) throw std::invalid_argument("pck_auc: distances must be >= 0");
  }
  std::sort(sorted.begin(), sorted.end());
  PckResult r;
  const double n = static_cast<double>(sorted.size());
  const double step = (d_max - d_min) / static_cast<double>(resolution - 1);
  for (int i = 0; i < resolution; ++i) {
    const double t = i + 1 == resolution ? d_max : d_min + step * i;
    const auto within = std::upper_bound(sorted.begin(), sorted.end(), t) - sorted.begin();
    r.curve.thresholds.push_back(t);
    r.curve.fraction.push_back(static_cast<double>(within) / n);
  }
  double area = 0.0;
  for (int i = 1; i < resolution; ++i) {
    const auto a = static_cast<std::size_t>(i - 1);
    const auto b = static_cast<std::size_t>(i);
    area += 0.5 * (r.curve.fraction[a] + r.curve.fraction[b]) * (r.curve.thresholds[b] - r.curve.thresholds[a]);
  }
  r.auc = area / (d_max - d_min);
  return r;
}

Stat mean_std(std::span<const double> values) {
  if (values.empty()) return {};
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  return {mean, std::sqrt(var / static_cast<double>(values.size()))};
}

namespace {

struct PairOutcome {
  PairReport report;
  std::vector<double> pck;
};

PairOutcome evaluate_pair(const PointCloudSequence& seq, const std::vector<SurfaceSampleSet>& samples, int i,
                          int j, const EvalOptions& opt) {
  const PointSet& src = seq.frames[static_cast<std::size_t>(i)];
  const PointSet& dst = seq.frames[static_cast<std::size_t>(j)];
  const auto& ids = *seq.ids;
  const std::vector<Eigen::Index> truth =
      ground_truth_targets(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(j)]);
  CorrespondenceMap map =
      map_correspondence(src, dst, samples[static_cast<std::size_t>(i)], samples[static_cast<std::size_t>(j)]);

  std::vector<Eigen::Index> rows;
  for (std::size_t k = 0; k < truth.size(); ++k) {
    if (truth[k] >= 0) rows.push_back(static_cast<Eigen::Index>(k));
  }
  if (rows.empty()) {
    throw DataError("frames " + std::to_string(i) + " and " + std::to_string(j) + " share no ground-truth ids");
  }
  PointSet predicted(static_cast<Eigen::Index>(rows.size()), 3);
  PointSet expected(static_cast<Eigen::Index>(rows.size()), 3);
  std::vector<double> dist(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto k = static_cast<std::size_t>(rows[r]);
    const auto row = static_cast<Eigen::Index>(r);
    predicted.row(row) = dst.row(map.target_index[k]);
    expected.row(row) = dst.row(truth[k]);
    dist[r] = std::sqrt(squared_distance(predicted.row(row).transpose(), expected.row(row).transpose()));
  }
  const CorrErrors e = corr_errors(predicted, expected, dst);
  const PckResult pck = pck_auc(dist, opt.d_min, opt.d_max, opt.resolution);
  return {PairReport{i, j, static_cast<int>(rows.size()), e.m_sl2, e.m_r, pck.auc}, pck.curve.fraction};
}

}  // namespace

EvalReport evaluate_protocol(const PointCloudSequence& sequence, const AtlasModel& model,
                             const EvalOptions& options, Rng& rng) {
  sequence.validate();
  if (!sequence.has_ids()) {
    throw DataError("sequence has no ground-truth correspondence ids (field 'ids')");
  }
  if (sequence.size() < 2) throw DataError("evaluation needs at least 2 frames");
  if (options.pairs < 1) throw std::invalid_argument("evaluate_protocol: pair count must be >= 1");
  if (options.threads < 1) throw std::invalid_argument("evaluate_protocol: threads must be >= 1");

  const int frames = static_cast<int>(sequence.size());
  std::vector<Latent> latents;
  latents.reserve(sequence.size());
  for (const auto& f : sequence.frames) latents.push_back(encode(model, f));
  const UvLayout layout = sequence_uv_layout(model, latents, options.points, rng, options.area_samples);

  std::vector<SurfaceSampleSet> samples;
  samples.reserve(sequence.size());
  std::vector<PointSet> surfaces;
  for (int f = 0; f < frames; ++f) {
    samples.push_back(surface_samples_from_layout(model, latents[static_cast<std::size_t>(f)], layout, f));
    surfaces.push_back(samples.back().points());
  }

  std::uniform_int_distribution<int> first(0, frames - 1);
  std::uniform_int_distribution<int> second(0, frames - 2);
  std::vector<std::pair<int, int>> pairs;
  for (int p = 0; p < options.pairs; ++p) {
    const int i = first(rng);
    int j = second(rng);
    if (j >= i) ++j;
    pairs.emplace_back(i, j);
  }

  std::vector<PairOutcome> outcomes(pairs.size());
  auto work = [&](std::size_t begin, std::size_t stride, std::exception_ptr& error) {
    try {
      for (std::size_t p = begin; p < pairs.size(); p += stride) {
        outcomes[p] = evaluate_pair(sequence, samples, pairs[p].first, pairs[p].second, options);
      }
    } catch (...) {
      error = std::current_exception();
    }
  };
  const auto workers = static_cast<std::size_t>(std::min<int>(options.threads, options.pairs));
  std::vector<std::exception_ptr> errors(workers);
  if (workers == 1) {
    work(0, 1, errors[0]);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w, workers, std::ref(errors[w]));
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  EvalReport report;
  report.points = options.points;
  std::vector<double> sl2, rank, auc;
  report.mean_pck.assign(static_cast<std::size_t>(options.resolution), 0.0);
  for (const auto& o : outcomes) {
    report.pairs.push_back(o.report);
    sl2.push_back(o.report.m_sl2);
    rank.push_back(o.report.m_r);
    auc.push_back(o.report.auc);
    for (std::size_t t = 0; t < o.pck.size(); ++t) report.mean_pck[t] += o.pck[t] / static_cast<double>(outcomes.size());
  }
  report.pck_thresholds = pck_auc(std::vector<double>{0.0}, options.d_min, options.d_max, options.resolution)
                              .curve.thresholds;
  report.m_sl2 = mean_std(sl2);
  report.m_r = mean_std(rank);
  report.auc = mean_std(auc);
  report.chamfer = chamfer_loss(surfaces, sequence.frames);
  return report;
}

}  // namespace mca
