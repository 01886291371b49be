#include "mcatlas/sequence.hpp"

#include <string>

#include "mcatlas/errors.hpp"

namespace mca {

void PointCloudSequence::validate() const {
  if (frames.empty()) throw DataError("sequence has no frames");
  for (std::size_t k = 0; k < frames.size(); ++k) {
    if (frames[k].rows() == 0) throw DataError("frame " + std::to_string(k) + " is empty");
    if (!frames[k].allFinite()) throw DataError("frame " + std::to_string(k) + " has non-finite coordinates");
  }
  if (ids) {
    if (ids->size() != frames.size()) throw DataError("ids: expected one id list per frame");
    for (std::size_t k = 0; k < frames.size(); ++k) {
      if (static_cast<Eigen::Index>((*ids)[k].size()) != frames[k].rows()) {
        throw DataError("ids: frame " + std::to_string(k) + " has " + std::to_string((*ids)[k].size()) +
                        " ids for " + std::to_string(frames[k].rows()) + " points");
      }
    }
  }
}

}  // namespace mca
