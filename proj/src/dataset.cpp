#include "mcatlas/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <stdexcept>

#include <json.hpp>

#include "mcatlas/errors.hpp"
#include "mcatlas/io.hpp"
#include "mcatlas/kdtree.hpp"
#include "mcatlas/objectives.hpp"
#include "mcatlas/sampling.hpp"

namespace mca {

namespace fs = std::filesystem;

FileFormat parse_file_format(const std::string& s) {
  if (s == "auto") return FileFormat::Auto;
  if (s == "ply") return FileFormat::Ply;
  if (s == "xyz") return FileFormat::Xyz;
  if (s == "obj") return FileFormat::Obj;
  throw std::invalid_argument("unknown file format '" + s + "' (expected auto|ply|xyz|obj)");
}

namespace {

FileFormat format_of(const fs::path& p, FileFormat requested) {
  if (requested != FileFormat::Auto) return requested;
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".ply") return FileFormat::Ply;
  if (ext == ".xyz" || ext == ".txt" || ext == ".pts") return FileFormat::Xyz;
  if (ext == ".obj") return FileFormat::Obj;
  throw DataError("cannot infer the format of '" + p.string() + "' from its extension");
}

struct SurfaceDraw {
  int triangle;
  double a, b, c;
};

std::vector<SurfaceDraw> draw_surface_points(const TriangleMesh& mesh, int n, Rng& rng, const fs::path& path) {
  std::vector<double> area(mesh.faces.size());
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& t = mesh.faces[f];
    const Vec3 p0 = mesh.vertices.row(t[0]).transpose();
    const Vec3 p1 = mesh.vertices.row(t[1]).transpose();
    const Vec3 p2 = mesh.vertices.row(t[2]).transpose();
    area[f] = 0.5 * (p1 - p0).cross(p2 - p0).norm();
  }
  double total = 0.0;
  for (double a : area) total += a;
  if (!(total > 0.0)) throw DataError(path.string() + ": mesh has zero surface area");
  std::discrete_distribution<int> pick(area.begin(), area.end());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<SurfaceDraw> out(static_cast<std::size_t>(n));
  for (auto& d : out) {
    d.triangle = pick(rng);
    const double r1 = std::sqrt(unit(rng));
    const double r2 = unit(rng);
    d.a = 1.0 - r1;
    d.b = r1 * (1.0 - r2);
    d.c = r1 * r2;
  }
  return out;
}

PointSet apply_draws(const TriangleMesh& mesh, const std::vector<SurfaceDraw>& draws) {
  PointSet p(static_cast<Eigen::Index>(draws.size()), 3);
  for (std::size_t k = 0; k < draws.size(); ++k) {
    const auto& d = draws[k];
    const auto& t = mesh.faces[static_cast<std::size_t>(d.triangle)];
    p.row(static_cast<Eigen::Index>(k)) =
        d.a * mesh.vertices.row(t[0]) + d.b * mesh.vertices.row(t[1]) + d.c * mesh.vertices.row(t[2]);
  }
  return p;
}

std::vector<int> iota_ids(Eigen::Index n) {
  std::vector<int> ids(static_cast<std::size_t>(n));
  for (std::size_t k = 0; k < ids.size(); ++k) ids[k] = static_cast<int>(k);
  return ids;
}

}  // namespace

PointCloudSequence load_sequence(const std::vector<fs::path>& paths, const LoadOptions& options) {
  if (paths.empty()) throw DataError("no input frames given");
  if (options.obj_points < 0) throw std::invalid_argument("obj_points must be >= 0");
  PointCloudSequence seq;
  Rng rng(options.seed);
  std::vector<TriangleMesh> meshes;
  bool all_obj = true;
  for (const auto& p : paths) {
    const FileFormat f = format_of(p, options.format);
    seq.source_files.push_back(p.string());
    if (f == FileFormat::Obj) {
      ObjMesh m = read_obj(p);
      meshes.push_back(m.triangles());
      seq.frames.push_back(m.vertices);
    } else {
      all_obj = false;
      seq.frames.push_back(f == FileFormat::Ply ? read_ply(p) : read_xyz(p));
    }
  }

  bool constant_topology = all_obj;
  if (all_obj) {
    for (const auto& m : meshes) {
      if (m.vertices.rows() != meshes.front().vertices.rows() || m.faces != meshes.front().faces) {
        constant_topology = false;
      }
    }
  }
  if (all_obj && options.obj_points > 0) {
    std::vector<SurfaceDraw> shared;
    if (constant_topology) shared = draw_surface_points(meshes.front(), options.obj_points, rng, paths.front());
    for (std::size_t k = 0; k < meshes.size(); ++k) {
      seq.frames[k] = apply_draws(meshes[k], constant_topology
                                                 ? shared
                                                 : draw_surface_points(meshes[k], options.obj_points, rng, paths[k]));
    }
  }

  if (options.ids_file) {
    seq.ids = read_ids(*options.ids_file);
    if (seq.ids->size() != seq.frames.size()) {
      throw DataError(options.ids_file->string() + ": " + std::to_string(seq.ids->size()) + " id rows for " +
                      std::to_string(seq.frames.size()) + " frames");
    }
  } else if (constant_topology) {
    seq.ids.emplace();
    for (const auto& f : seq.frames) seq.ids->push_back(iota_ids(f.rows()));
  } else if (options.require_ids) {
    if (all_obj) throw DataError("ground-truth ids requested but the meshes have inconsistent vertex counts or faces");
    throw DataError("ground-truth ids requested but no ids file was given");
  }
  seq.validate();
  if (options.unit_cube) normalize_to_unit_cube(seq);
  return seq;
}

void normalize_to_unit_cube(PointCloudSequence& seq) {
  if (seq.frames.empty() || seq.frames.front().rows() == 0) throw DataError("first frame is empty");
  const PointSet& first = seq.frames.front();
  const Vec3 lo = first.colwise().minCoeff().transpose();
  const Vec3 hi = first.colwise().maxCoeff().transpose();
  const double extent = (hi - lo).maxCoeff();
  if (!(extent > 0.0)) throw DataError("first frame has zero extent; cannot scale to the unit cube");
  const Vec3 center = 0.5 * (lo + hi);
  const double s = 1.0 / extent;
  for (auto& f : seq.frames) f = ((f.rowwise() - center.transpose()) * s).eval();
  // Compose with any earlier normalization: x_new = (x_orig - offset') * scale'.
  seq.offset = seq.offset + center / seq.scale;
  seq.scale *= s;
}

Eigen::Matrix3d rotation_about_axis(int axis, double degrees) {
  if (axis < 0 || axis > 2) throw std::invalid_argument("rotation axis must be 0 (x), 1 (y) or 2 (z)");
  return Eigen::AngleAxisd(degrees * std::numbers::pi / 180.0, Vec3::Unit(axis)).toRotationMatrix();
}

Eigen::Matrix3d rotation_about_y(double degrees) { return rotation_about_axis(1, degrees); }

PointCloudSequence align_sequence(const PointCloudSequence& seq, double resolution_degrees, int up_axis) {
  if (seq.size() < 2) throw DataError("alignment needs at least 2 frames");
  if (!(resolution_degrees > 0.0 && resolution_degrees <= 180.0)) {
    throw std::invalid_argument("angle resolution must lie in (0, 180]");
  }
  std::vector<double> candidates{0.0};
  for (int k = 1;; ++k) {
    const double a = k * resolution_degrees;
    if (a > 180.0 + 1e-9) break;
    candidates.push_back(-a);
    if (a < 180.0 - 1e-9) candidates.push_back(a);
  }
  PointCloudSequence out = seq;
  out.alignment_degrees.assign(seq.size(), 0.0);
  for (std::size_t k = 1; k < seq.size(); ++k) {
    const PointSet& ref = out.frames[k - 1];
    double best = std::numeric_limits<double>::infinity();
    double best_angle = 0.0;
    for (double a : candidates) {
      const PointSet rotated = (seq.frames[k] * rotation_about_axis(up_axis, a).transpose()).eval();
      const double cd = chamfer_distance(rotated, ref);
      if (cd < best) {
        best = cd;
        best_angle = a;
      }
    }
    out.frames[k] = (seq.frames[k] * rotation_about_axis(up_axis, best_angle).transpose()).eval();
    out.alignment_degrees[k] = best_angle;
  }
  return out;
}

SynthKind parse_synth_kind(const std::string& s) {
  if (s == "bending-plane") return SynthKind::BendingPlane;
  if (s == "articulated-cylinder") return SynthKind::ArticulatedCylinder;
  if (s == "swinging-arm") return SynthKind::SwingingArm;
  throw std::invalid_argument("unknown synthetic kind '" + s +
                              "' (expected bending-plane|articulated-cylinder|swinging-arm)");
}

std::string to_string(SynthKind k) {
  switch (k) {
    case SynthKind::BendingPlane: return "bending-plane";
    case SynthKind::ArticulatedCylinder: return "articulated-cylinder";
    case SynthKind::SwingingArm: return "swinging-arm";
  }
  return "?";
}

namespace {

Vec3 bend_plane(double s, double t, double kappa) {
  if (std::abs(kappa) < 1e-12) return {s - 0.5, t, 0.0};
  const double theta = kappa * (s - 0.5);
  return {std::sin(theta) / kappa, t, (1.0 - std::cos(theta)) / kappa};
}

// Rotation about +z through `pivot`.
Vec3 swing(const Vec3& p, const Vec3& pivot, double radians) {
  const double c = std::cos(radians);
  const double s = std::sin(radians);
  const Vec3 d = p - pivot;
  return pivot + Vec3(c * d.x() - s * d.y(), s * d.x() + c * d.y(), d.z());
}

// A point on a capsule along +y from the origin: cylinder of height `len`
// capped by hemispheres, chosen area-proportionally.
Vec3 capsule_point(double len, double r, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double cyl = 2.0 * std::numbers::pi * r * len;
  const double caps = 4.0 * std::numbers::pi * r * r;
  const double pick = unit(rng) * (cyl + caps);
  const double phi = 2.0 * std::numbers::pi * unit(rng);
  if (pick < cyl) return {r * std::cos(phi), len * unit(rng), r * std::sin(phi)};
  const double h = unit(rng);  // uniform height on a sphere is area-uniform
  const double ring = r * std::sqrt(1.0 - h * h);
  const bool top = pick < cyl + 0.5 * caps;
  return {ring * std::cos(phi), top ? len + r * h : -r * h, ring * std::sin(phi)};
}

}  // namespace

PointCloudSequence generate_synthetic(SynthKind kind, int frames, int points, double amplitude, Rng& rng) {
  if (frames < 2) throw std::invalid_argument("synthetic sequences need at least 2 frames");
  if (points < 10) throw std::invalid_argument("synthetic sequences need at least 10 points");
  if (!std::isfinite(amplitude)) throw std::invalid_argument("amplitude must be finite");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto n = static_cast<std::size_t>(points);

  PointCloudSequence seq;
  seq.ids.emplace();
  std::vector<double> t(static_cast<std::size_t>(frames));
  for (int k = 0; k < frames; ++k) t[static_cast<std::size_t>(k)] = static_cast<double>(k) / (frames - 1);

  auto emit = [&](auto&& position) {
    for (int k = 0; k < frames; ++k) {
      PointSet f(points, 3);
      for (std::size_t i = 0; i < n; ++i) f.row(static_cast<Eigen::Index>(i)) = position(i, t[static_cast<std::size_t>(k)]).transpose();
      seq.frames.push_back(std::move(f));
      seq.ids->push_back(iota_ids(points));
    }
  };

  switch (kind) {
    case SynthKind::BendingPlane: {
      std::vector<Vec2> st(n);
      for (auto& p : st) {
        const double s = unit(rng);
        p = Vec2(s, unit(rng));
      }
      emit([&](std::size_t i, double time) {
        return bend_plane(st[i].x(), st[i].y(), amplitude * std::numbers::pi * time);
      });
      break;
    }
    case SynthKind::ArticulatedCylinder: {
      constexpr double kRadius = 0.15;
      const Vec3 joint(0.0, 0.5, 0.0);
      std::vector<Vec3> base(n);
      for (auto& p : base) {
        const double phi = 2.0 * std::numbers::pi * unit(rng);
        p = Vec3(kRadius * std::cos(phi), unit(rng), kRadius * std::sin(phi));
      }
      emit([&](std::size_t i, double time) {
        const Vec3& p = base[i];
        return p.y() <= joint.y() ? p : swing(p, joint, amplitude * 0.5 * std::numbers::pi * time);
      });
      break;
    }
    case SynthKind::SwingingArm: {
      constexpr double kLength = 0.4;
      constexpr double kRadius = 0.08;
      const Vec3 joint(0.0, kLength + kRadius, 0.0);
      std::vector<Vec3> base(n);
      std::vector<bool> upper(n);
      for (std::size_t i = 0; i < n; ++i) {
        upper[i] = i % 2 == 1;
        base[i] = capsule_point(kLength, kRadius, rng);
        if (upper[i]) base[i] += joint + Vec3(0.0, kRadius, 0.0);
      }
      emit([&](std::size_t i, double time) {
        if (!upper[i]) return base[i];
        return swing(base[i], joint, amplitude * std::numbers::pi / 3.0 * std::sin(2.0 * std::numbers::pi * time));
      });
      break;
    }
  }
  seq.validate();
  return seq;
}

void write_sequence(const fs::path& dir, const PointCloudSequence& seq) {
  seq.validate();
  fs::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = "mcatlas-sequence";
  manifest["frames"] = nlohmann::json::array();
  for (std::size_t k = 0; k < seq.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%03zu.ply", k);
    write_ply(dir / name, seq.frames[k]);
    manifest["frames"].push_back(name);
  }
  if (seq.has_ids()) {
    write_ids(dir / "ids.txt", *seq.ids);
    manifest["ids"] = "ids.txt";
  }
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << '\n';
  if (!out) throw std::runtime_error("cannot write manifest in '" + dir.string() + "'");
}

PointCloudSequence load_manifest(const fs::path& manifest_or_dir, const LoadOptions& options) {
  const fs::path file = fs::is_directory(manifest_or_dir) ? manifest_or_dir / "manifest.json" : manifest_or_dir;
  std::ifstream in(file);
  if (!in) throw DataError("cannot open sequence manifest '" + file.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(file.string() + ": " + e.what());
  }
  if (!j.contains("frames") || !j["frames"].is_array()) throw DataError(file.string() + ": missing 'frames' list");
  const fs::path base = file.parent_path();
  std::vector<fs::path> paths;
  for (const auto& f : j["frames"]) {
    if (!f.is_string()) throw DataError(file.string() + ": frame entries must be strings");
    paths.push_back(base / f.get<std::string>());
  }
  LoadOptions opt = options;
  if (!opt.ids_file && j.contains("ids") && j["ids"].is_string()) opt.ids_file = base / j["ids"].get<std::string>();
  return load_sequence(paths, opt);
}

}  // namespace mca
