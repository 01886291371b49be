#include "mcatlas/io.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "mcatlas/errors.hpp"

namespace mca {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void fail(const fs::path& path, const std::string& where, const std::string& what) {
  throw DataError(path.string() + ":" + where + ": " + what);
}

std::string line_tag(std::size_t line) { return std::to_string(line); }

std::ifstream open_in(const fs::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return in;
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  ensure_parent_directory(path);
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  return out;
}

void finish(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

void check_finite(const PointSet& p, const fs::path& path) {
  if (!p.allFinite()) throw DataError(path.string() + ": non-finite coordinate");
}

// --- PLY -------------------------------------------------------------------

enum class Scalar { I8, U8, I16, U16, I32, U32, F32, F64 };

Scalar parse_scalar(const std::string& t, const fs::path& path, std::size_t line) {
  if (t == "char" || t == "int8") return Scalar::I8;
  if (t == "uchar" || t == "uint8") return Scalar::U8;
  if (t == "short" || t == "int16") return Scalar::I16;
  if (t == "ushort" || t == "uint16") return Scalar::U16;
  if (t == "int" || t == "int32") return Scalar::I32;
  if (t == "uint" || t == "uint32") return Scalar::U32;
  if (t == "float" || t == "float32") return Scalar::F32;
  if (t == "double" || t == "float64") return Scalar::F64;
  fail(path, line_tag(line), "unknown PLY scalar type '" + t + "'");
}

std::size_t scalar_size(Scalar s) {
  switch (s) {
    case Scalar::I8:
    case Scalar::U8: return 1;
    case Scalar::I16:
    case Scalar::U16: return 2;
    case Scalar::I32:
    case Scalar::U32:
    case Scalar::F32: return 4;
    case Scalar::F64: return 8;
  }
  return 0;
}

template <typename T>
T load_le(const unsigned char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
    auto* b = reinterpret_cast<unsigned char*>(&v);
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
  }
  return v;
}

double decode_scalar(Scalar s, const unsigned char* p) {
  switch (s) {
    case Scalar::I8: return load_le<std::int8_t>(p);
    case Scalar::U8: return load_le<std::uint8_t>(p);
    case Scalar::I16: return load_le<std::int16_t>(p);
    case Scalar::U16: return load_le<std::uint16_t>(p);
    case Scalar::I32: return load_le<std::int32_t>(p);
    case Scalar::U32: return load_le<std::uint32_t>(p);
    case Scalar::F32: return load_le<float>(p);
    case Scalar::F64: return load_le<double>(p);
  }
  return 0.0;
}

struct PlyProperty {
  std::string name;
  Scalar type = Scalar::F32;
  bool list = false;
  Scalar count_type = Scalar::U8;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
};

}  // namespace

PointSet read_ply(const fs::path& path) {
  std::ifstream in = open_in(path, std::ios::in | std::ios::binary);
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };
  if (!next_line() || line != "ply") fail(path, "1", "missing 'ply' magic");
  bool ascii = false;
  bool have_format = false;
  std::vector<PlyElement> elements;
  for (;;) {
    if (!next_line()) fail(path, line_tag(line_no), "header not terminated by end_header");
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key.empty() || key == "comment" || key == "obj_info") continue;
    if (key == "end_header") break;
    if (key == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "ascii") {
        ascii = true;
      } else if (fmt != "binary_little_endian") {
        fail(path, line_tag(line_no), "unsupported PLY format '" + fmt + "'");
      }
      have_format = true;
    } else if (key == "element") {
      PlyElement e;
      long long count = -1;
      ls >> e.name >> count;
      if (!ls || count < 0) fail(path, line_tag(line_no), "malformed element line");
      e.count = static_cast<std::size_t>(count);
      elements.push_back(e);
    } else if (key == "property") {
      if (elements.empty()) fail(path, line_tag(line_no), "property before any element");
      PlyProperty p;
      std::string t;
      ls >> t;
      if (t == "list") {
        std::string ct, vt;
        ls >> ct >> vt >> p.name;
        p.list = true;
        p.count_type = parse_scalar(ct, path, line_no);
        p.type = parse_scalar(vt, path, line_no);
      } else {
        p.type = parse_scalar(t, path, line_no);
        ls >> p.name;
      }
      if (p.name.empty()) fail(path, line_tag(line_no), "property without a name");
      elements.back().properties.push_back(p);
    } else {
      fail(path, line_tag(line_no), "unexpected header keyword '" + key + "'");
    }
  }
  if (!have_format) fail(path, line_tag(line_no), "missing format line");

  PointSet points;
  bool have_vertices = false;
  const std::size_t header_lines = line_no;
  std::size_t data_line = header_lines;
  std::vector<unsigned char> buf;

  for (const auto& e : elements) {
    const bool vertex = e.name == "vertex";
    int ix = -1, iy = -1, iz = -1;
    if (vertex) {
      for (std::size_t k = 0; k < e.properties.size(); ++k) {
        const auto& p = e.properties[k];
        if (p.list) continue;
        if (p.name == "x") ix = static_cast<int>(k);
        if (p.name == "y") iy = static_cast<int>(k);
        if (p.name == "z") iz = static_cast<int>(k);
      }
      if (ix < 0 || iy < 0 || iz < 0) fail(path, "header", "vertex element lacks x/y/z properties");
      points.resize(static_cast<Eigen::Index>(e.count), 3);
      have_vertices = true;
    }
    for (std::size_t r = 0; r < e.count; ++r) {
      std::vector<double> values(e.properties.size(), 0.0);
      if (ascii) {
        if (!next_line()) fail(path, line_tag(line_no + 1), "unexpected end of file in element '" + e.name + "'");
        data_line = line_no;
        std::istringstream ls(line);
        for (std::size_t k = 0; k < e.properties.size(); ++k) {
          const auto& p = e.properties[k];
          if (p.list) {
            long long n = -1;
            ls >> n;
            if (!ls || n < 0) fail(path, line_tag(data_line), "malformed list count");
            double skip;
            for (long long c = 0; c < n; ++c) ls >> skip;
          } else {
            ls >> values[k];
            if (p.type == Scalar::F32) values[k] = static_cast<float>(values[k]);
          }
          if (!ls) fail(path, line_tag(data_line), "malformed value for property '" + p.name + "'");
        }
      } else {
        for (std::size_t k = 0; k < e.properties.size(); ++k) {
          const auto& p = e.properties[k];
          const auto offset = static_cast<long long>(in.tellg());
          if (p.list) {
            buf.resize(scalar_size(p.count_type));
            if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()))) {
              fail(path, "byte " + std::to_string(offset), "truncated list in element '" + e.name + "'");
            }
            const double n = decode_scalar(p.count_type, buf.data());
            if (n < 0) fail(path, "byte " + std::to_string(offset), "negative list length");
            in.ignore(static_cast<std::streamsize>(n * static_cast<double>(scalar_size(p.type))));
          } else {
            buf.resize(scalar_size(p.type));
            if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()))) {
              fail(path, "byte " + std::to_string(offset), "truncated data in element '" + e.name + "'");
            }
            values[k] = decode_scalar(p.type, buf.data());
          }
        }
      }
      if (vertex) {
        const auto row = static_cast<Eigen::Index>(r);
        points(row, 0) = values[static_cast<std::size_t>(ix)];
        points(row, 1) = values[static_cast<std::size_t>(iy)];
        points(row, 2) = values[static_cast<std::size_t>(iz)];
      }
    }
    if (vertex) break;
  }
  if (!have_vertices) fail(path, "header", "no vertex element");
  check_finite(points, path);
  return points;
}

void write_ply(const fs::path& path, const PointSet& points, PlyEncoding encoding) {
  std::ofstream out = open_out(path, std::ios::out | std::ios::binary);
  out << "ply\n"
      << (encoding == PlyEncoding::Ascii ? "format ascii 1.0\n" : "format binary_little_endian 1.0\n")
      << "element vertex " << points.rows() << "\n"
      << "property float x\nproperty float y\nproperty float z\nend_header\n";
  if (encoding == PlyEncoding::Ascii) {
    char buf[64];
    for (Eigen::Index r = 0; r < points.rows(); ++r) {
      const int n = std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g\n", static_cast<double>(static_cast<float>(points(r, 0))),
                                  static_cast<double>(static_cast<float>(points(r, 1))),
                                  static_cast<double>(static_cast<float>(points(r, 2))));
      out.write(buf, n);
    }
  } else {
    for (Eigen::Index r = 0; r < points.rows(); ++r) {
      for (int c = 0; c < 3; ++c) {
        auto v = std::bit_cast<std::uint32_t>(static_cast<float>(points(r, c)));
        unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
        out.write(reinterpret_cast<const char*>(b), 4);
      }
    }
  }
  finish(out, path);
}

PointSet read_xyz(const fs::path& path) {
  std::ifstream in = open_in(path);
  std::vector<double> v;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    double x, y, z;
    if (!(ls >> x)) continue;
    if (!(ls >> y >> z)) fail(path, line_tag(line_no), "expected three coordinates");
    std::string extra;
    if (ls >> extra) fail(path, line_tag(line_no), "trailing token '" + extra + "'");
    v.insert(v.end(), {x, y, z});
  }
  PointSet p(static_cast<Eigen::Index>(v.size() / 3), 3);
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    for (int c = 0; c < 3; ++c) p(r, c) = v[static_cast<std::size_t>(3 * r + c)];
  }
  check_finite(p, path);
  return p;
}

void write_xyz(const fs::path& path, const PointSet& points) {
  std::ofstream out = open_out(path);
  char buf[96];
  for (Eigen::Index r = 0; r < points.rows(); ++r) {
    const int n = std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", points(r, 0), points(r, 1), points(r, 2));
    out.write(buf, n);
  }
  finish(out, path);
}

namespace {

// OBJ index: 1-based, negative counts back from the current end.
int resolve_index(const std::string& token, std::size_t count, const fs::path& path, std::size_t line) {
  std::size_t used = 0;
  long long i = 0;
  try {
    i = std::stoll(token, &used);
  } catch (const std::exception&) {
    fail(path, line_tag(line), "bad index '" + token + "'");
  }
  if (used != token.size() || i == 0) fail(path, line_tag(line), "bad index '" + token + "'");
  const long long r = i > 0 ? i - 1 : static_cast<long long>(count) + i;
  if (r < 0 || r >= static_cast<long long>(count)) fail(path, line_tag(line), "index " + token + " out of range");
  return static_cast<int>(r);
}

}  // namespace

ObjMesh read_obj(const fs::path& path) {
  std::ifstream in = open_in(path);
  std::vector<double> v, vt;
  ObjMesh mesh;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    if (key == "v") {
      double x, y, z;
      if (!(ls >> x >> y >> z)) fail(path, line_tag(line_no), "vertex needs three coordinates");
      v.insert(v.end(), {x, y, z});
    } else if (key == "vt") {
      double s, t = 0.0;
      if (!(ls >> s)) fail(path, line_tag(line_no), "texture coordinate needs a value");
      ls >> t;
      vt.insert(vt.end(), {s, t});
    } else if (key == "f") {
      std::vector<int> pos, tex;
      std::string corner;
      while (ls >> corner) {
        const auto s1 = corner.find('/');
        pos.push_back(resolve_index(corner.substr(0, s1), v.size() / 3, path, line_no));
        int t = -1;
        if (s1 != std::string::npos) {
          const auto s2 = corner.find('/', s1 + 1);
          const std::string ts = corner.substr(s1 + 1, s2 == std::string::npos ? std::string::npos : s2 - s1 - 1);
          if (!ts.empty()) t = resolve_index(ts, vt.size() / 2, path, line_no);
        }
        tex.push_back(t);
      }
      if (pos.size() < 3) fail(path, line_tag(line_no), "face with fewer than 3 corners");
      for (std::size_t k = 1; k + 1 < pos.size(); ++k) {
        mesh.faces.push_back({pos[0], pos[k], pos[k + 1]});
        mesh.face_uvs.push_back({tex[0], tex[k], tex[k + 1]});
      }
    }
  }
  mesh.vertices.resize(static_cast<Eigen::Index>(v.size() / 3), 3);
  for (Eigen::Index r = 0; r < mesh.vertices.rows(); ++r) {
    for (int c = 0; c < 3; ++c) mesh.vertices(r, c) = v[static_cast<std::size_t>(3 * r + c)];
  }
  mesh.uvs.resize(static_cast<Eigen::Index>(vt.size() / 2), 2);
  for (Eigen::Index r = 0; r < mesh.uvs.rows(); ++r) {
    for (int c = 0; c < 2; ++c) mesh.uvs(r, c) = vt[static_cast<std::size_t>(2 * r + c)];
  }
  check_finite(mesh.vertices, path);
  return mesh;
}

void write_obj(const fs::path& path, const ObjMesh& mesh, const std::string& material_library,
               const std::string& material) {
  std::ofstream out = open_out(path);
  if (!material_library.empty()) out << "mtllib " << material_library << "\n";
  char buf[96];
  for (Eigen::Index r = 0; r < mesh.vertices.rows(); ++r) {
    const int n = std::snprintf(buf, sizeof buf, "v %.17g %.17g %.17g\n", mesh.vertices(r, 0), mesh.vertices(r, 1),
                                mesh.vertices(r, 2));
    out.write(buf, n);
  }
  for (Eigen::Index r = 0; r < mesh.uvs.rows(); ++r) {
    const int n = std::snprintf(buf, sizeof buf, "vt %.17g %.17g\n", mesh.uvs(r, 0), mesh.uvs(r, 1));
    out.write(buf, n);
  }
  if (!material.empty()) out << "usemtl " << material << "\n";
  const bool textured = mesh.face_uvs.size() == mesh.faces.size();
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    out << 'f';
    for (int c = 0; c < 3; ++c) {
      out << ' ' << mesh.faces[f][static_cast<std::size_t>(c)] + 1;
      if (textured && mesh.face_uvs[f][static_cast<std::size_t>(c)] >= 0) {
        out << '/' << mesh.face_uvs[f][static_cast<std::size_t>(c)] + 1;
      }
    }
    out << '\n';
  }
  finish(out, path);
}

std::vector<std::vector<int>> read_ids(const fs::path& path) {
  std::ifstream in = open_in(path);
  std::vector<std::vector<int>> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::vector<int> row;
    std::string tok;
    while (ls >> tok) {
      std::size_t used = 0;
      long long v = 0;
      try {
        v = std::stoll(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tok.size() || v < INT32_MIN || v > INT32_MAX) {
        fail(path, line_tag(line_no), "bad id '" + tok + "'");
      }
      row.push_back(static_cast<int>(v));
    }
    ids.push_back(std::move(row));
  }
  while (!ids.empty() && ids.back().empty()) ids.pop_back();
  return ids;
}

void write_ids(const fs::path& path, const std::vector<std::vector<int>>& ids) {
  std::ofstream out = open_out(path);
  for (const auto& row : ids) {
    for (std::size_t k = 0; k < row.size(); ++k) out << (k ? " " : "") << row[k];
    out << '\n';
  }
  finish(out, path);
}

void ensure_parent_directory(const fs::path& path) {
  const fs::path parent = path.parent_path();
  if (parent.empty()) return;
  std::error_code ec;
  fs::create_directories(parent, ec);
  if (ec) throw std::runtime_error("cannot create directory '" + parent.string() + "': " + ec.message());
}

}  // namespace mca
