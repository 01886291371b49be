#include "mcatlas/report.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "mcatlas/io.hpp"

namespace mca {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::ofstream open_csv(const fs::path& path) {
  ensure_parent_directory(path);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  return out;
}

void close_csv(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

json stat_json(const Stat& s) { return json{{"mean", s.mean}, {"std", s.std}}; }

}  // namespace

void write_loss_csv(const fs::path& path, std::span<const LossBreakdown> history) {
  std::ofstream out = open_csv(path);
  out << "iteration,chamfer,metric,total,alpha_mc\n";
  char buf[160];
  for (std::size_t i = 0; i < history.size(); ++i) {
    const auto& h = history[i];
    const int n = std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g\n", i, h.chamfer, h.metric, h.total,
                                h.alpha_mc);
    out.write(buf, n);
  }
  close_csv(out, path);
}

json eval_report_json(const EvalReport& r, double display_scale) {
  json j;
  j["pairs"] = r.pairs.size();
  j["points"] = r.points;
  j["m_sl2"] = stat_json(r.m_sl2);
  j["m_r"] = stat_json(r.m_r);
  j["auc"] = stat_json(r.auc);
  j["chamfer"] = r.chamfer;
  j["pck"] = {{"thresholds", r.pck_thresholds}, {"fraction", r.mean_pck}};
  j["display"] = {{"note", "presentation only: m_sl2 and chamfer multiplied by display_scale, m_r and auc in percent"},
                  {"display_scale", display_scale},
                  {"m_sl2", r.m_sl2.mean * display_scale},
                  {"chamfer", r.chamfer * display_scale},
                  {"m_r_percent", r.m_r.mean * 100.0},
                  {"auc_percent", r.auc.mean * 100.0}};
  return j;
}

void write_eval_csv(const fs::path& path, const EvalReport& report) {
  std::ofstream out = open_csv(path);
  out << "source,target,points,m_sl2,m_r,auc\n";
  char buf[160];
  for (const auto& p : report.pairs) {
    const int n = std::snprintf(buf, sizeof buf, "%d,%d,%d,%.9g,%.9g,%.9g\n", p.source, p.target,
                                p.evaluated_points, p.m_sl2, p.m_r, p.auc);
    out.write(buf, n);
  }
  close_csv(out, path);
}

void write_correspondence_csv(const fs::path& path, const CorrespondenceMap& map) {
  std::ofstream out = open_csv(path);
  const bool errors = map.squared_error.size() == map.target_index.size();
  out << (errors ? "point,target_index,squared_error\n" : "point,target_index\n");
  char buf[96];
  for (std::size_t k = 0; k < map.target_index.size(); ++k) {
    const int n = errors ? std::snprintf(buf, sizeof buf, "%zu,%ld,%.9g\n", k, static_cast<long>(map.target_index[k]),
                                         map.squared_error[k])
                         : std::snprintf(buf, sizeof buf, "%zu,%ld\n", k, static_cast<long>(map.target_index[k]));
    out.write(buf, n);
  }
  close_csv(out, path);
}

}  // namespace mca
