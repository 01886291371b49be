#include "mcatlas/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <vector>

#include <json.hpp>
#include <zlib.h>

#include "mcatlas/config.hpp"
#include "mcatlas/io.hpp"

namespace mca {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'M', 'C', 'A', 'T', 'L', 'A', 'S', '\0'};

template <typename T>
void put_le(std::vector<unsigned char>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

template <typename T>
T get_le(const unsigned char* p) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(p[i]) << (8 * i));
  return v;
}

void put_block(std::vector<unsigned char>& out, const ad::Matrix& m) {
  // Row-major order.
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(m(r, c))));
  }
}

std::uint32_t crc_of(const unsigned char* data, std::size_t size) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (size > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

Rng Checkpoint::rng() const {
  Rng r;
  std::istringstream in(rng_state);
  in >> r;
  if (!in) throw CheckpointError("checkpoint RNG state is malformed");
  return r;
}

Checkpoint make_checkpoint(const TrainingSnapshot& s) {
  Checkpoint c;
  c.config = s.config;
  c.parameters = s.model.parameters();
  c.optimizer = s.state;
  c.iteration = s.iteration;
  std::ostringstream out;
  out << s.rng;
  c.rng_state = out.str();
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto& p = ckpt.parameters;
  if (ckpt.optimizer.first_moment.size() != p.size() || ckpt.optimizer.second_moment.size() != p.size()) {
    throw std::invalid_argument("checkpoint optimizer state does not match the parameters");
  }
  json header;
  header["format"] = "mcatlas-checkpoint";
  header["config"] = to_json(ckpt.config);
  header["iteration"] = ckpt.iteration;
  header["rng"] = ckpt.rng_state;
  header["optimizer"] = {{"step", ckpt.optimizer.step}, {"lr", ckpt.optimizer.lr}};
  json blocks = json::array();
  std::vector<unsigned char> payload;
  const char* kinds[] = {"param", "adam_m", "adam_v"};
  for (int kind = 0; kind < 3; ++kind) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      const ad::Matrix& m = kind == 0   ? p.value(i)
                            : kind == 1 ? ckpt.optimizer.first_moment[i]
                                        : ckpt.optimizer.second_moment[i];
      if (m.rows() != p.value(i).rows() || m.cols() != p.value(i).cols()) {
        throw std::invalid_argument("checkpoint block shape mismatch for '" + p.name(i) + "'");
      }
      blocks.push_back({{"name", p.name(i)}, {"kind", kinds[kind]}, {"rows", m.rows()}, {"cols", m.cols()}});
      put_block(payload, m);
    }
  }
  header["blocks"] = blocks;
  const std::string text = header.dump();

  std::vector<unsigned char> out(kMagic, kMagic + 8);
  put_le(out, ckpt.version_major);
  put_le(out, ckpt.version_minor);
  put_le(out, static_cast<std::uint64_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), payload.begin(), payload.end());
  put_le(out, crc_of(payload.data(), payload.size()));

  ensure_parent_directory(path);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  f.flush();
  if (!f) throw std::runtime_error("cannot write checkpoint '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const std::string where = path.string() + ": ";
  if (bytes.size() < 20) throw CheckpointError(where + "truncated checkpoint header");
  if (std::memcmp(bytes.data(), kMagic, 8) != 0) throw CheckpointError(where + "not a checkpoint (bad magic)");
  Checkpoint c;
  c.version_major = get_le<std::uint16_t>(bytes.data() + 8);
  c.version_minor = get_le<std::uint16_t>(bytes.data() + 10);
  if (c.version_major != kCheckpointMajor) {
    throw CheckpointError(where + "unsupported checkpoint version " + std::to_string(c.version_major) + "." +
                          std::to_string(c.version_minor) + " (this build reads major version " +
                          std::to_string(kCheckpointMajor) + ")");
  }
  const auto header_size = get_le<std::uint64_t>(bytes.data() + 12);
  if (header_size > bytes.size() - 20) throw CheckpointError(where + "truncated checkpoint header");
  json header;
  try {
    header = json::parse(bytes.begin() + 20, bytes.begin() + 20 + static_cast<std::ptrdiff_t>(header_size));
    c.config = config_from_json(header.at("config"));
    c.iteration = header.at("iteration").get<std::int64_t>();
    c.rng_state = header.at("rng").get<std::string>();
    c.optimizer.step = header.at("optimizer").at("step").get<std::int64_t>();
    c.optimizer.lr = header.at("optimizer").at("lr").get<double>();
  } catch (const json::exception& e) {
    throw CheckpointError(where + "malformed header: " + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(where + "malformed config: " + e.what());
  }

  // Fresh model supplies the expected names and shapes.
  const AtlasModel reference(c.config.architecture, 0);
  const ad::ParameterSet& expected = reference.parameters();
  const json& blocks = header.value("blocks", json::array());
  if (blocks.size() != 3 * expected.size()) throw CheckpointError(where + "block table does not match architecture");
  std::size_t offset = 20 + header_size;
  std::size_t payload_bytes = 0;
  for (const auto& b : blocks) payload_bytes += 4 * b.value("rows", std::size_t{0}) * b.value("cols", std::size_t{0});
  if (bytes.size() < offset + payload_bytes + 4) throw CheckpointError(where + "truncated parameter data");
  const auto stored_crc = get_le<std::uint32_t>(bytes.data() + offset + payload_bytes);
  if (crc_of(bytes.data() + offset, payload_bytes) != stored_crc) {
    throw CheckpointError(where + "checksum mismatch in parameter data");
  }

  c.parameters = expected;
  c.optimizer.first_moment = expected.zeros_like();
  c.optimizer.second_moment = expected.zeros_like();
  const char* kinds[] = {"param", "adam_m", "adam_v"};
  std::size_t k = 0;
  for (int kind = 0; kind < 3; ++kind) {
    for (std::size_t i = 0; i < expected.size(); ++i, ++k) {
      const json& b = blocks[k];
      const ad::Matrix& shape = expected.value(i);
      if (b.value("name", "") != expected.name(i) || b.value("kind", "") != kinds[kind] ||
          b.value("rows", -1) != shape.rows() || b.value("cols", -1) != shape.cols()) {
        throw CheckpointError(where + "unexpected block " + b.dump());
      }
      ad::Matrix& dst = kind == 0 ? c.parameters.value(i)
                        : kind == 1 ? c.optimizer.first_moment[i]
                                    : c.optimizer.second_moment[i];
      for (Eigen::Index r = 0; r < dst.rows(); ++r) {
        for (Eigen::Index col = 0; col < dst.cols(); ++col) {
          dst(r, col) = std::bit_cast<float>(get_le<std::uint32_t>(bytes.data() + offset));
          offset += 4;
        }
      }
    }
  }
  if (!c.rng_state.empty()) (void)c.rng();
  return c;
}

}  // namespace mca
