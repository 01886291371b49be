#pragma once

#include <filesystem>
#include <span>

#include <json.hpp>

#include "mcatlas/correspondence.hpp"
#include "mcatlas/metrics.hpp"
#include "mcatlas/objectives.hpp"

namespace mca {

// iteration,chamfer,metric,total,alpha_mc (header only for an empty history).
void write_loss_csv(const std::filesystem::path& path, std::span<const LossBreakdown> history);

// Raw values. `display` holds the same aggregates scaled for presentation
// (m_sl2 x display_scale, m_r and auc as percentages) and is labeled as such.
nlohmann::json eval_report_json(const EvalReport& report, double display_scale = 100.0);
// One row per pair: source,target,points,m_sl2,m_r,auc.
void write_eval_csv(const std::filesystem::path& path, const EvalReport& report);

// point,target_index[,squared_error].
void write_correspondence_csv(const std::filesystem::path& path, const CorrespondenceMap& map);

}  // namespace mca
