#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mcatlas/sequence.hpp"
#include "mcatlas/types.hpp"

namespace mca {

enum class FileFormat { Auto, Ply, Xyz, Obj };

FileFormat parse_file_format(const std::string& s);

struct LoadOptions {
  FileFormat format = FileFormat::Auto;  // Auto: by extension
  // OBJ only: sample this many surface points per frame (0 keeps the vertices).
  // Constant-topology sequences reuse the first frame's triangle/barycentric
  // draws, so sampled points keep exact ids.
  int obj_points = 0;
  std::optional<std::filesystem::path> ids_file;
  bool require_ids = false;
  bool unit_cube = true;
  std::uint64_t seed = 0;
};

// Reads the frames in order, attaches ids (from `ids_file` or from constant
// mesh topology) and applies the unit-cube rule.
PointCloudSequence load_sequence(const std::vector<std::filesystem::path>& paths, const LoadOptions& options = {});

// Translates the first frame's bounding-box center to the origin and scales
// every frame so that box's longest side is 1. Records offset and scale.
void normalize_to_unit_cube(PointCloudSequence& seq);

// Rotation about +y by `degrees` (right-handed).
Eigen::Matrix3d rotation_about_y(double degrees);
// axis 0, 1, 2 = x, y, z
Eigen::Matrix3d rotation_about_axis(int axis, double degrees);

// Greedy sequential alignment: frame k >= 1 is rotated about the vertical axis
// by the grid angle (multiples of `resolution_degrees` within +-180) that
// minimizes Chamfer distance to the aligned frame k - 1. Ties go to the
// smaller |angle|, then to the negative one.
PointCloudSequence align_sequence(const PointCloudSequence& seq, double resolution_degrees = 1.0, int up_axis = 1);

enum class SynthKind { BendingPlane, ArticulatedCylinder, SwingingArm };

SynthKind parse_synth_kind(const std::string& s);
std::string to_string(SynthKind k);

// K frames of the same n material points (ids 0..n-1) under an analytic
// deformation. Amplitude 0 gives identical frames.
//   bending-plane: unit square rolled with curvature amplitude * pi * t.
//   articulated-cylinder: upper half of a cylinder bent at mid-height by
//     amplitude * 90deg * t.
//   swinging-arm: two capsules, the second swinging about the joint by
//     amplitude * 60deg * sin(2 pi t).
// with t = k / (K - 1).
PointCloudSequence generate_synthetic(SynthKind kind, int frames, int points, double amplitude, Rng& rng);

// Sequence directory layout: frame_NNN.ply files, optional ids.txt and a
// manifest.json naming them in order.
void write_sequence(const std::filesystem::path& dir, const PointCloudSequence& seq);
// Loads the frames named by a manifest (or by the manifest inside a directory).
PointCloudSequence load_manifest(const std::filesystem::path& manifest_or_dir, const LoadOptions& options = {});

}  // namespace mca
