#include <gtest/gtest.h>
#include <png.h>

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "mcatlas/checkpoint.hpp"
#include "mcatlas/config.hpp"
#include "mcatlas/dataset.hpp"
#include "mcatlas/export.hpp"
#include "mcatlas/io.hpp"
#include "mcatlas/objectives.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;

namespace mca {
namespace {

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("mcatlas_") + info->test_suite_name() + "_" + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

using IoTest = TempDir;

TEST_F(IoTest, PlyRoundTripBothEncodings) {
  Rng rng(1);
  const PointSet p = testing::random_points(57, rng);
  const PointSet as_float = p.cast<float>().cast<double>();
  for (auto enc : {PlyEncoding::Ascii, PlyEncoding::BinaryLittleEndian}) {
    write_ply(dir_ / "a.ply", p, enc);
    EXPECT_EQ(read_ply(dir_ / "a.ply"), as_float);
  }
}

TEST_F(IoTest, PlyReadsOtherScalarTypesAndSkipsLists) {
  spit(dir_ / "m.ply",
       "ply\nformat ascii 1.0\ncomment x\nelement vertex 2\nproperty double x\nproperty uchar red\n"
       "property double y\nproperty int z\nelement face 1\nproperty list uchar int vertex_indices\n"
       "end_header\n0.5 255 1.25 3\n-1 0 2 4\n3 0 1 1\n");
  const PointSet p = read_ply(dir_ / "m.ply");
  ASSERT_EQ(p.rows(), 2);
  EXPECT_EQ(p(0, 0), 0.5);
  EXPECT_EQ(p(0, 1), 1.25);
  EXPECT_EQ(p(1, 2), 4.0);
}

TEST_F(IoTest, MalformedPlyNamesLocation) {
  spit(dir_ / "bad.ply", "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\n"
                         "property float z\nend_header\n1 2 3\n1 oops 3\n");
  try {
    read_ply(dir_ / "bad.ply");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.ply:9"), std::string::npos) << e.what();
  }
  EXPECT_THROW(read_ply(dir_ / "missing.ply"), DataError);
}

TEST_F(IoTest, XyzRoundTripIsExact) {
  Rng rng(2);
  const PointSet p = testing::random_points(33, rng);
  write_xyz(dir_ / "a.xyz", p);
  EXPECT_EQ(read_xyz(dir_ / "a.xyz"), p);
}

TEST_F(IoTest, ObjRoundTripAndPolygonFans) {
  spit(dir_ / "q.obj", "# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 1 1\nvt 0 1\n"
                       "f 1/1 2/2 3/3 -1/-1\n");
  const ObjMesh m = read_obj(dir_ / "q.obj");
  ASSERT_EQ(m.faces.size(), 2u);
  EXPECT_EQ(m.faces[1], (std::array<int, 3>{0, 2, 3}));
  EXPECT_EQ(m.face_uvs[1], (std::array<int, 3>{0, 2, 3}));
  write_obj(dir_ / "r.obj", m);
  const ObjMesh r = read_obj(dir_ / "r.obj");
  EXPECT_EQ(r.vertices, m.vertices);
  EXPECT_EQ(r.uvs, m.uvs);
  EXPECT_EQ(r.faces, m.faces);
  EXPECT_EQ(r.face_uvs, m.face_uvs);
}

TEST_F(IoTest, UnitCubeRuleOnSingleFrame) {
  spit(dir_ / "t.xyz", "0 0 0\n2 0 0\n0 2 0\n");
  const auto seq = load_sequence({dir_ / "t.xyz"});
  EXPECT_DOUBLE_EQ(seq.scale, 0.5);
  const PointSet& f = seq.frames[0];
  EXPECT_DOUBLE_EQ((f.colwise().maxCoeff() - f.colwise().minCoeff()).maxCoeff(), 1.0);
}

TEST_F(IoTest, UnitCubeScalingIsInvariantUnderRepetition) {
  Rng rng(3);
  PointCloudSequence seq;
  seq.frames = {testing::random_points(40, rng, -3, 5), testing::random_points(40, rng, -3, 5)};
  const PointCloudSequence orig = seq;
  normalize_to_unit_cube(seq);
  const PointSet once = seq.frames[1];
  normalize_to_unit_cube(seq);
  EXPECT_LT((seq.frames[1] - once).cwiseAbs().maxCoeff(), 1e-14);
  const PointSet back = (orig.frames[1].rowwise() - seq.offset.transpose()) * seq.scale;
  EXPECT_LT((back - seq.frames[1]).cwiseAbs().maxCoeff(), 1e-14);
}

TEST_F(IoTest, ObjCubeSampledOnSurface) {
  std::string s;
  for (int i = 0; i < 8; ++i) s += "v " + std::to_string(i & 1) + " " + std::to_string((i >> 1) & 1) + " " + std::to_string(i >> 2) + "\n";
  s += "f 1 2 4 3\nf 5 7 8 6\nf 1 5 6 2\nf 3 4 8 7\nf 1 3 7 5\nf 2 6 8 4\n";
  spit(dir_ / "cube.obj", s);
  LoadOptions o;
  o.obj_points = 2500;
  o.unit_cube = false;
  const auto seq = load_sequence({dir_ / "cube.obj"}, o);
  const PointSet& p = seq.frames[0];
  ASSERT_EQ(p.rows(), 2500);
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double face = std::min(p.row(i).minCoeff(), 1.0 - p.row(i).maxCoeff());
    EXPECT_NEAR(face, 0.0, 1e-12);
  }
}

TEST_F(IoTest, SequenceDirectoryRoundTrip) {
  Rng rng(4);
  const auto seq = generate_synthetic(SynthKind::SwingingArm, 3, 50, 1.0, rng);
  write_sequence(dir_ / "s", seq);
  LoadOptions o;
  o.unit_cube = false;
  const auto back = load_manifest(dir_ / "s", o);
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(*back.ids, *seq.ids);
  EXPECT_EQ(back.frames[2], seq.frames[2].cast<float>().cast<double>());
}

TEST(Align, AlreadyAlignedChoosesZero) {
  Rng rng(5);
  PointCloudSequence seq;
  const PointSet p = testing::random_points(200, rng);
  seq.frames = {p, p, p};
  const auto out = align_sequence(seq, 5.0);
  for (double a : out.alignment_degrees) EXPECT_EQ(a, 0.0);
}

TEST(Align, RecoversThirtyDegreeRotation) {
  Rng rng(6);
  PointCloudSequence seq;
  const PointSet p = testing::random_points(300, rng);
  seq.frames = {p, (p * rotation_about_y(30).transpose()).eval()};
  const auto out = align_sequence(seq, 1.0);
  EXPECT_NEAR(out.alignment_degrees[1], -30.0, 1.0);
  EXPECT_LT(chamfer_distance(out.frames[1], p), 1e-3);

  const auto coarse = align_sequence(seq, 90.0);
  const double cd0 = chamfer_distance(seq.frames[1], p);
  const double cd90 = chamfer_distance((seq.frames[1] * rotation_about_y(-90).transpose()).eval(), p);
  EXPECT_EQ(coarse.alignment_degrees[1], cd90 < cd0 ? -90.0 : 0.0);
}

TEST(Align, OtherVerticalAxis) {
  Rng rng(16);
  PointCloudSequence seq;
  const PointSet p = testing::random_points(300, rng);
  seq.frames = {p, (p * rotation_about_axis(2, 40).transpose()).eval()};
  const auto out = align_sequence(seq, 1.0, 2);
  EXPECT_NEAR(out.alignment_degrees[1], -40.0, 1.0);
  EXPECT_LT(chamfer_distance(out.frames[1], p), 1e-3);
  EXPECT_TRUE(rotation_about_axis(1, 17).isApprox(rotation_about_y(17), 1e-15));
  EXPECT_THROW(rotation_about_axis(3, 1), std::invalid_argument);
}

TEST(Synthetic, ZeroAmplitudeGivesIdenticalFrames) {
  Rng rng(7);
  const auto seq = generate_synthetic(SynthKind::BendingPlane, 5, 100, 0.0, rng);
  for (const auto& f : seq.frames) EXPECT_EQ(f, seq.frames[0]);
}

TEST(Synthetic, BendingPreservesDistancesAlongStrips) {
  Rng rng(8);
  const auto seq = generate_synthetic(SynthKind::BendingPlane, 4, 300, 1.0, rng);
  // chords of an isometric bend never exceed the flat distance
  const PointSet& flat = seq.frames[0];
  const PointSet& bent = seq.frames[3];
  for (Eigen::Index i = 0; i + 1 < flat.rows(); ++i) {
    EXPECT_LE((bent.row(i) - bent.row(i + 1)).norm(), (flat.row(i) - flat.row(i + 1)).norm() + 1e-12);
  }
  EXPECT_NEAR(bent(0, 1), flat(0, 1), 1e-12);
}

TEST(Synthetic, SeededSequencesAreBitIdentical) {
  for (auto kind : {SynthKind::BendingPlane, SynthKind::ArticulatedCylinder, SynthKind::SwingingArm}) {
    Rng a(9), b(9);
    const auto x = generate_synthetic(kind, 3, 80, 1.0, a);
    const auto y = generate_synthetic(kind, 3, 80, 1.0, b);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(x.frames[k], y.frames[k]);
    EXPECT_EQ(parse_synth_kind(to_string(kind)), kind);
  }
}

using CheckpointTest = TempDir;

Checkpoint trained_checkpoint() {
  Rng rng(10);
  auto seq = generate_synthetic(SynthKind::BendingPlane, 3, 40, 1.0, rng);
  TrainConfig c;
  c.iterations = 3;
  c.uv_samples_per_frame = 10;
  c.architecture = testing::tiny_architecture();
  std::optional<Checkpoint> out;
  train_sequence(seq, c, [&](const TrainingSnapshot& s) { out = make_checkpoint(s); });
  return *out;
}

TEST_F(CheckpointTest, RoundTripIsBitExactAtFloatPrecision) {
  const Checkpoint c = trained_checkpoint();
  save_checkpoint(dir_ / "m.ckpt", c);
  const Checkpoint r = load_checkpoint(dir_ / "m.ckpt");
  EXPECT_EQ(r.config, c.config);
  EXPECT_EQ(r.iteration, 3);
  EXPECT_EQ(r.rng_state, c.rng_state);
  EXPECT_EQ(r.optimizer.step, c.optimizer.step);
  for (std::size_t i = 0; i < c.parameters.size(); ++i) {
    EXPECT_EQ(r.parameters.value(i), c.parameters.value(i).cast<float>().cast<double>());
    EXPECT_EQ(r.optimizer.second_moment[i], c.optimizer.second_moment[i].cast<float>().cast<double>());
  }
  save_checkpoint(dir_ / "again.ckpt", r);
  EXPECT_EQ(slurp(dir_ / "again.ckpt"), slurp(dir_ / "m.ckpt"));
}

TEST_F(CheckpointTest, CorruptPayloadFailsChecksum) {
  save_checkpoint(dir_ / "m.ckpt", trained_checkpoint());
  std::string bytes = slurp(dir_ / "m.ckpt");
  bytes[bytes.size() - 20] ^= 0x40;
  spit(dir_ / "m.ckpt", bytes);
  try {
    load_checkpoint(dir_ / "m.ckpt");
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("checksum"), std::string::npos) << e.what();
  }
  spit(dir_ / "short.ckpt", bytes.substr(0, bytes.size() / 2));
  EXPECT_THROW(load_checkpoint(dir_ / "short.ckpt"), CheckpointError);
}

TEST_F(CheckpointTest, NewerMajorVersionIsRejected) {
  save_checkpoint(dir_ / "m.ckpt", trained_checkpoint());
  std::string bytes = slurp(dir_ / "m.ckpt");
  bytes[8] = static_cast<char>(kCheckpointMajor + 1);
  spit(dir_ / "m.ckpt", bytes);
  try {
    load_checkpoint(dir_ / "m.ckpt");
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos) << e.what();
  }
}

TEST(Config, JsonRoundTripAndStrictKeys) {
  TrainConfig c;
  c.alpha_mc = 0.25;
  c.strategy = PairStrategy::Random;
  c.architecture = desk_architecture();
  EXPECT_EQ(config_from_json(to_json(c)), c);
  auto j = to_json(c);
  j["alpha"] = 1.0;
  EXPECT_THROW(config_from_json(j), ConfigError);
  j = to_json(c);
  j["iterations"] = 2.5;
  EXPECT_THROW(config_from_json(j), ConfigError);
}

std::set<std::array<png_byte, 3>> png_colors(const fs::path& p, int& w, int& h) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  EXPECT_TRUE(png_image_begin_read_from_file(&img, p.c_str()));
  img.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(img));
  EXPECT_TRUE(png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr));
  w = static_cast<int>(img.width);
  h = static_cast<int>(img.height);
  std::set<std::array<png_byte, 3>> colors;
  for (std::size_t i = 0; i + 2 < buf.size(); i += 3) colors.insert({buf[i], buf[i + 1], buf[i + 2]});
  return colors;
}

using ExportTest = TempDir;

TEST_F(ExportTest, CheckerboardHasTwoColors) {
  write_checkerboard_png(dir_ / "c.png", 512, 8);
  int w = 0, h = 0;
  EXPECT_EQ(png_colors(dir_ / "c.png", w, h).size(), 2u);
  EXPECT_EQ(w, 512);
  EXPECT_EQ(h, 512);
}

std::string vt_block(const fs::path& p) {
  std::ifstream in(p);
  std::string line, out;
  while (std::getline(in, line)) {
    if (line.rfind("vt ", 0) == 0 || line.rfind("f ", 0) == 0) out += line + "\n";
  }
  return out;
}

TEST_F(ExportTest, IdenticalFramesShareUvBlocksAndReparse) {
  Rng rng(11);
  auto seq = generate_synthetic(SynthKind::BendingPlane, 2, 100, 0.0, rng);
  const AtlasModel m(testing::tiny_architecture(), 12);
  ExportOptions o;
  o.samples_per_frame = 200;
  o.area_samples = 256;
  Rng er(13);
  const auto files = export_visualization(m, seq, dir_, o, er);
  EXPECT_TRUE(fs::exists(dir_ / "errors.csv"));
  EXPECT_TRUE(fs::exists(dir_ / "atlas.mtl"));
  const std::string a = vt_block(dir_ / "frame_000.obj");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, vt_block(dir_ / "frame_001.obj"));
  const ObjMesh mesh = read_obj(dir_ / "frame_000.obj");
  LoadOptions lo;
  lo.unit_cube = false;
  const auto back = load_sequence({dir_ / "frame_000.obj"}, lo);
  EXPECT_EQ(back.frames[0].rows(), mesh.uvs.rows());
  EXPECT_EQ(mesh.vertices.rows(), 2 * 10 * 10);
}

}  // namespace
}  // namespace mca
