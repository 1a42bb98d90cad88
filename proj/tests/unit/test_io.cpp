#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "celeganser/error.hpp"
#include "celeganser/io.hpp"

namespace {

using namespace celeganser;
namespace fs = std::filesystem;

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("celeganser_io_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  std::string bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
  }

  fs::path dir;
};

TEST_F(TempDir, PgmHeaderAndBigEndianSamples) {
  ImageGrid img(1, 2, std::vector<double>{1.0, 1.0 / 65535.0});
  io::write_pgm16(dir / "a.pgm", img);
  const std::string b = bytes(dir / "a.pgm");
  const std::string header = "P5\n2 1\n65535\n";
  ASSERT_EQ(b.substr(0, header.size()), header);
  const std::string body = b.substr(header.size());
  ASSERT_EQ(body.size(), 4u);
  EXPECT_EQ(static_cast<unsigned char>(body[0]), 0xFF);
  EXPECT_EQ(static_cast<unsigned char>(body[1]), 0xFF);
  EXPECT_EQ(static_cast<unsigned char>(body[2]), 0x00);
  EXPECT_EQ(static_cast<unsigned char>(body[3]), 0x01);
}

TEST_F(TempDir, PgmRoundTripQuantized) {
  ImageGrid img(3, 5);
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<double>(i) / 14.0;
  img[0] = -0.5;  // clamped
  io::write_pgm16(dir / "b.pgm", img);
  const ImageGrid back = io::read_pgm(dir / "b.pgm");
  ASSERT_EQ(back.height(), 3);
  ASSERT_EQ(back.width(), 5);
  EXPECT_EQ(back[0], 0.0);
  for (std::size_t i = 1; i < img.size(); ++i) EXPECT_NEAR(back[i], img[i], 0.5 / 65535.0 + 1e-12);
}

TEST_F(TempDir, PgmBadMagic) {
  std::ofstream(dir / "c.pgm") << "P2\n1 1\n255\n0\n";
  try {
    io::read_pgm(dir / "c.pgm");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kBadMagic);
  }
}

TEST_F(TempDir, CguvLayout) {
  ImageGrid f(2, 3, std::vector<double>{0.5, -1.0, 2.25, 3.0, 0.0, 1e6});
  io::write_cguv(dir / "f.cguv", f);
  const std::string b = bytes(dir / "f.cguv");
  ASSERT_EQ(b.size(), 16u + 6u * 4u);
  EXPECT_EQ(b.substr(0, 4), "CGUV");
  EXPECT_EQ(static_cast<unsigned char>(b[4]), 2);   // height, LE
  EXPECT_EQ(static_cast<unsigned char>(b[8]), 3);   // width, LE
  EXPECT_EQ(static_cast<unsigned char>(b[12]), 0);  // reserved
  // 0.5f = 0x3F000000, little-endian.
  EXPECT_EQ(static_cast<unsigned char>(b[16 + 3]), 0x3F);
  EXPECT_EQ(io::read_cguv(dir / "f.cguv"), f);
}

TEST_F(TempDir, CguvTruncated) {
  std::ofstream(dir / "t.cguv", std::ios::binary) << "CGUV";
  try {
    io::read_cguv(dir / "t.cguv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kCorruptFile);
  }
}

TEST_F(TempDir, KeyValuesSkipComments) {
  io::write_key_values(dir / "kv.txt", {{"b", "2"}, {"a", "x=y"}}, {"note"});
  const auto kv = io::read_key_values(dir / "kv.txt");
  EXPECT_EQ(kv.size(), 2u);
  EXPECT_EQ(kv.at("a"), "x=y");
  EXPECT_EQ(bytes(dir / "kv.txt"), "# note\na=x=y\nb=2\n");
}

TEST(FormatDouble, ShortestRoundTrip) {
  EXPECT_EQ(io::format_double(0.1), "0.1");
  EXPECT_EQ(std::stod(io::format_double(5e-4)), 5e-4);
  EXPECT_EQ(std::stod(io::format_double(1.0 / 3.0)), 1.0 / 3.0);
}

TEST_F(TempDir, DatasetRoundTrip) {
  synth::DatasetSpec spec;
  spec.params.canvas_height = spec.params.canvas_width = 96;
  spec.params.length_max_age = 80;
  spec.params.max_extent = 80;
  spec.n_worms = 2;
  spec.timepoints = 2;
  const auto samples = synth::generate_dataset(spec);
  io::Manifest m{{1}, {0}, 2};
  io::write_dataset(dir / "ds", samples, m, {"seed=1"});
  const io::Manifest back = io::read_manifest(dir / "ds");
  EXPECT_EQ(back.train_ids, std::vector<int>{1});
  EXPECT_EQ(back.val_ids, std::vector<int>{0});
  const auto read = io::read_samples(dir / "ds", {0, 1}, 2);
  ASSERT_EQ(read.size(), 4u);
  for (std::size_t i = 0; i < read.size(); ++i) {
    EXPECT_EQ(read[i].image.height(), 96);
    EXPECT_EQ(read[i].image.width(), 96);
    EXPECT_EQ(read[i].mask, samples[i].mask);
    EXPECT_EQ(read[i].worm_id, samples[i].worm_id);
    EXPECT_EQ(read[i].age_hours, samples[i].age_hours);
    for (std::size_t k = 0; k < read[i].uv.u.size(); ++k)
      EXPECT_EQ(read[i].uv.u[k], static_cast<float>(samples[i].uv.u[k]));
  }
}

TEST_F(TempDir, MissingManifest) {
  EXPECT_THROW(io::read_manifest(dir / "nothing"), Error);
}

}  // namespace
