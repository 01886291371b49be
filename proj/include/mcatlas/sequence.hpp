#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mcatlas/types.hpp"

namespace mca {

// Ordered point-cloud frames with optional ground-truth material ids: point k
// of frame i corresponds to every point with the same id in other frames.
struct PointCloudSequence {
  std::vector<PointSet> frames;
  std::optional<std::vector<std::vector<int>>> ids;

  // Provenance.
  std::vector<std::string> source_files;
  double scale = 1.0;               // applied after translation
  Vec3 offset = Vec3::Zero();       // subtracted before scaling
  std::vector<double> alignment_degrees;

  std::size_t size() const { return frames.size(); }
  bool has_ids() const { return ids.has_value(); }

  // Throws DataError when an invariant is broken.
  void validate() const;
};

}  // namespace mca
