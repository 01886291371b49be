#pragma once

#include <filesystem>
#include <vector>

#include "mcatlas/atlas_model.hpp"
#include "mcatlas/sequence.hpp"

namespace mca {

// size x size RGB checkerboard of cells x cells squares (two colors).
void write_checkerboard_png(const std::filesystem::path& path, int size = 512, int cells = 8);

struct ExportOptions {
  int samples_per_frame = 3125;  // grid vertices over all active patches
  int texture_size = 512;
  int checker_cells = 8;
  int area_samples = 1024;
};

// Per frame an OBJ of per-patch UV grids (vt = canonical uv, shared by all
// frames) referencing a checkerboard texture; with ground-truth ids also
// errors.csv for the maps frame 0 -> k. Returns the written files.
std::vector<std::filesystem::path> export_visualization(const AtlasModel& model, const PointCloudSequence& seq,
                                                        const std::filesystem::path& dir,
                                                        const ExportOptions& options, Rng& rng);

}  // namespace mca
