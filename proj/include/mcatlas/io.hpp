#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "mcatlas/sampling.hpp"
#include "mcatlas/types.hpp"

namespace mca {

enum class PlyEncoding { Ascii, BinaryLittleEndian };

// Vertex x/y/z of a PLY file (ascii or binary_little_endian; any scalar
// property types, other elements skipped).
PointSet read_ply(const std::filesystem::path& path);
// x y z as 32-bit float properties.
void write_ply(const std::filesystem::path& path, const PointSet& points,
               PlyEncoding encoding = PlyEncoding::BinaryLittleEndian);

// One whitespace-separated triple per line; blank lines and '#' comments skipped.
PointSet read_xyz(const std::filesystem::path& path);
void write_xyz(const std::filesystem::path& path, const PointSet& points);

struct ObjMesh {
  PointSet vertices;
  Eigen::MatrixX2d uvs;                         // vt entries
  std::vector<std::array<int, 3>> faces;        // polygons fan-triangulated
  std::vector<std::array<int, 3>> face_uvs;     // -1 where a corner has no vt

  TriangleMesh triangles() const { return {vertices, faces}; }
};

ObjMesh read_obj(const std::filesystem::path& path);
void write_obj(const std::filesystem::path& path, const ObjMesh& mesh, const std::string& material_library = {},
               const std::string& material = {});

// One line per frame, whitespace-separated integer ids.
std::vector<std::vector<int>> read_ids(const std::filesystem::path& path);
void write_ids(const std::filesystem::path& path, const std::vector<std::vector<int>>& ids);

// Creates the missing parent directories of `path`.
void ensure_parent_directory(const std::filesystem::path& path);

}  // namespace mca
