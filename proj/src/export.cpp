#include "mcatlas/export.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "mcatlas/correspondence.hpp"
#include "mcatlas/io.hpp"

namespace mca {

namespace fs = std::filesystem;

void write_checkerboard_png(const fs::path& path, int size, int cells) {
  if (size < 1 || cells < 1 || size % cells != 0) {
    throw std::invalid_argument("checkerboard size must be a positive multiple of the cell count");
  }
  ensure_parent_directory(path);
  FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (!fp) throw std::runtime_error("cannot write '" + path.string() + "'");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw std::runtime_error("PNG encoding failed for '" + path.string() + "'");
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(size), static_cast<png_uint_32>(size), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const int cell = size / cells;
  std::vector<png_byte> row(static_cast<std::size_t>(3 * size));
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const bool dark = ((x / cell) + (y / cell)) % 2 == 0;
      const png_byte c[3] = {static_cast<png_byte>(dark ? 40 : 235), static_cast<png_byte>(dark ? 40 : 200),
                             static_cast<png_byte>(dark ? 90 : 60)};
      std::copy(c, c + 3, row.begin() + 3 * x);
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fclose(fp) != 0) throw std::runtime_error("cannot finish '" + path.string() + "'");
}

std::vector<fs::path> export_visualization(const AtlasModel& model, const PointCloudSequence& seq, const fs::path& dir,
                                           const ExportOptions& options, Rng& rng) {
  seq.validate();
  if (seq.size() == 0) throw std::invalid_argument("export needs at least one frame");
  std::vector<Latent> latents;
  for (const auto& f : seq.frames) latents.push_back(encode(model, f));

  std::vector<double> mean(static_cast<std::size_t>(model.patches()), 0.0);
  for (const auto& z : latents) {
    const auto a = patch_areas(model, z, rng, options.area_samples);
    for (std::size_t k = 0; k < a.size(); ++k) mean[k] += a[k] / static_cast<double>(latents.size());
  }
  const std::vector<int> active = filter_patches(mean);
  const int grid = std::max(
      2, static_cast<int>(std::floor(std::sqrt(static_cast<double>(options.samples_per_frame) / active.size()))));

  ObjMesh mesh;
  std::vector<UvSample> tokens;
  for (int patch : active) {
    const int base = static_cast<int>(tokens.size());
    for (int r = 0; r < grid; ++r) {
      for (int c = 0; c < grid; ++c) {
        tokens.push_back(UvSample{patch, Vec2(static_cast<double>(c) / (grid - 1), static_cast<double>(r) / (grid - 1))});
      }
    }
    for (int r = 0; r + 1 < grid; ++r) {
      for (int c = 0; c + 1 < grid; ++c) {
        const int a = base + r * grid + c;
        mesh.faces.push_back({a, a + 1, a + grid + 1});
        mesh.faces.push_back({a, a + grid + 1, a + grid});
      }
    }
  }
  mesh.face_uvs = mesh.faces;
  mesh.uvs.resize(static_cast<Eigen::Index>(tokens.size()), 2);
  for (std::size_t k = 0; k < tokens.size(); ++k) mesh.uvs.row(static_cast<Eigen::Index>(k)) = tokens[k].uv.transpose();

  std::vector<fs::path> written;
  fs::create_directories(dir);
  write_checkerboard_png(dir / "checkerboard.png", options.texture_size, options.checker_cells);
  written.push_back(dir / "checkerboard.png");
  {
    std::ofstream mtl(dir / "atlas.mtl");
    mtl << "newmtl atlas\nKa 1 1 1\nKd 1 1 1\nmap_Kd checkerboard.png\n";
    if (!mtl) throw std::runtime_error("cannot write material library in '" + dir.string() + "'");
    written.push_back(dir / "atlas.mtl");
  }
  for (std::size_t k = 0; k < seq.size(); ++k) {
    mesh.vertices = decode(model, latents[k], tokens);
    char name[32];
    std::snprintf(name, sizeof name, "frame_%03zu.obj", k);
    write_obj(dir / name, mesh, "atlas.mtl", "atlas");
    written.push_back(dir / name);
  }

  if (seq.has_ids() && seq.size() > 1) {
    const UvLayout layout = regular_uv_layout(mean, options.samples_per_frame, rng);
    const SurfaceSampleSet s0 = surface_samples_from_layout(model, latents[0], layout, 0);
    std::ofstream csv(dir / "errors.csv");
    csv << "source,target,point,predicted,truth,squared_error\n";
    char buf[128];
    for (std::size_t k = 1; k < seq.size(); ++k) {
      const SurfaceSampleSet sk = surface_samples_from_layout(model, latents[k], layout, static_cast<int>(k));
      CorrespondenceMap map = map_correspondence(seq.frames[0], seq.frames[k], s0, sk);
      const auto truth = ground_truth_targets((*seq.ids)[0], (*seq.ids)[k]);
      attach_ground_truth(map, seq.frames[k], truth);
      for (std::size_t p = 0; p < truth.size(); ++p) {
        if (truth[p] < 0) continue;
        const int n = std::snprintf(buf, sizeof buf, "0,%zu,%zu,%ld,%ld,%.9g\n", k, p,
                                    static_cast<long>(map.target_index[p]), static_cast<long>(truth[p]),
                                    map.squared_error[p]);
        csv.write(buf, n);
      }
    }
    if (!csv) throw std::runtime_error("cannot write errors.csv in '" + dir.string() + "'");
    written.push_back(dir / "errors.csv");
  }
  return written;
}

}  // namespace mca
