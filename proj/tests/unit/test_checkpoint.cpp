#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <random>

#include "celeganser/checkpoint.hpp"
#include "celeganser/error.hpp"

namespace {

using namespace celeganser;
using namespace celeganser::checkpoint;
using models::HeadSet;
using models::NetConfig;
using models::UNet;
using Tf = ad::Tensor<float>;

NetConfig tiny(HeadSet head) {
  NetConfig c;
  c.head = head;
  c.base_channels = 4;
  c.max_channels = 8;
  c.input_size = 32;
  return c;
}

Tf random_input(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<float> v(2 * 32 * 32);
  for (float& x : v) x = u(rng);
  return Tf::from_vector({2, 1, 32, 32}, std::move(v));
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kInvalidArgument;
}

TEST(Format, HeaderBytes) {
  Checkpoint c;
  c.tensors.push_back({"ab", {2}, {1.0f, -2.0f}});
  c.config["k"] = "v";
  const std::string b = encode(c);
  EXPECT_EQ(b.substr(0, 4), "CGSR");
  EXPECT_EQ(static_cast<unsigned char>(b[4]), 1);  // version, LE u16
  EXPECT_EQ(static_cast<unsigned char>(b[5]), 0);
  EXPECT_EQ(static_cast<unsigned char>(b[6]), 1);  // count, LE u32
  EXPECT_EQ(static_cast<unsigned char>(b[10]), 2);  // name length
  EXPECT_EQ(b.substr(12, 2), "ab");
  EXPECT_EQ(static_cast<unsigned char>(b[14]), 0);  // dtype
  EXPECT_EQ(static_cast<unsigned char>(b[15]), 1);  // rank
  EXPECT_EQ(static_cast<unsigned char>(b[16]), 2);  // dim
  float first;
  std::memcpy(&first, b.data() + 20, 4);
  EXPECT_EQ(first, 1.0f);
  EXPECT_EQ(b.substr(28), "k=v\n");
}

TEST(Format, EncodeDecodeRoundTrip) {
  Checkpoint c;
  c.tensors.push_back({"w", {2, 3}, {1, 2, 3, 4, 5, 6}});
  c.tensors.push_back({"s", {}, {7}});
  c.config = {{"a", "1"}, {"b", "x y"}};
  const Checkpoint d = decode(encode(c));
  ASSERT_EQ(d.tensors.size(), 2u);
  EXPECT_EQ(d.tensors[0].shape, (ad::Shape{2, 3}));
  EXPECT_EQ(d.tensors[1].data, std::vector<float>{7});
  EXPECT_EQ(d.config, c.config);
  EXPECT_EQ(encode(d), encode(c));
}

TEST(Format, CorruptMagicIsDistinct) {
  Checkpoint c;
  c.tensors.push_back({"w", {1}, {1}});
  std::string b = encode(c);
  b[0] = 'X';
  EXPECT_EQ(code_of([&] { decode(b); }), ErrorCode::kBadMagic);
}

TEST(Format, TruncationAndBadFields) {
  Checkpoint c;
  c.tensors.push_back({"w", {3}, {1, 2, 3}});
  const std::string b = encode(c);
  EXPECT_EQ(code_of([&] { decode(b.substr(0, b.size() - 2)); }), ErrorCode::kCorruptFile);
  EXPECT_EQ(code_of([&] { decode(b.substr(0, 3)); }), ErrorCode::kCorruptFile);
  std::string v = b;
  v[4] = 9;
  EXPECT_EQ(code_of([&] { decode(v); }), ErrorCode::kCorruptFile);
  std::string dt = b;
  dt[13] = 3;
  EXPECT_EQ(code_of([&] { decode(dt); }), ErrorCode::kCorruptFile);
}

TEST(Format, DuplicateNamesRejected) {
  Checkpoint c;
  c.tensors.push_back({"w", {1}, {1}});
  c.tensors.push_back({"w", {1}, {2}});
  EXPECT_EQ(code_of([&] { decode(encode(c)); }), ErrorCode::kCorruptFile);
}

TEST(Checkpoint, SaveLoadForwardBitIdentical) {
  UNet<float> net(tiny(HeadSet::SegUV), 3);
  const Tf x = random_input(4);
  net.forward(x, true);  // moves batchnorm running stats away from init
  const auto before = net.forward(x, false);
  const auto dir = std::filesystem::temp_directory_path() / "celeganser_ckpt_test";
  std::filesystem::create_directories(dir);
  save(dir / "a.cgsr", to_checkpoint(net, {{"train.seed", "3"}}));
  const Checkpoint loaded = load(dir / "a.cgsr");
  EXPECT_EQ(loaded.config.at("train.seed"), "3");
  EXPECT_EQ(loaded.config.at("net.head"), models::head_set_name(HeadSet::SegUV));
  UNet<float> back = model_from_checkpoint(loaded);
  const auto after = back.forward(x, false);
  for (int s = 0; s < 5; ++s) {
    EXPECT_EQ(0, std::memcmp(before.u[s].data().data(), after.u[s].data().data(),
                             before.u[s].numel() * sizeof(float)));
    EXPECT_EQ(0, std::memcmp(before.mask_logits[s].data().data(),
                             after.mask_logits[s].data().data(),
                             before.mask_logits[s].numel() * sizeof(float)));
  }
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, MissingFile) {
  EXPECT_EQ(code_of([] { load("/nonexistent/nothing.cgsr"); }), ErrorCode::kMissingCheckpoint);
}

TEST(Checkpoint, LoadStateRequiresExactMatch) {
  UNet<float> a(tiny(HeadSet::Seg), 1);
  UNet<float> b(tiny(HeadSet::SegUV), 1);
  EXPECT_THROW(load_state(b, to_checkpoint(a)), Error);
}

TEST(Transfer, IdenticalArchitectureMatchesEveryEncoderTensor) {
  UNet<float> src(tiny(HeadSet::SegUV), 5);
  UNet<float> dst(tiny(HeadSet::Age), 6);
  const Checkpoint c = to_checkpoint(src);
  const TransferReport r = transfer_encoder(&c, dst, InitMode::UvReg, 7);
  EXPECT_EQ(r.transferred, r.encoder_tensors);
  EXPECT_TRUE(r.skipped_shape_mismatch.empty());
  const auto& a = src.state().at("enc.l2.res0.a.conv.weight");
  const auto& b = dst.state().at("enc.l2.res0.a.conv.weight");
  EXPECT_TRUE(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
}

TEST(Transfer, ScratchIgnoresSource) {
  UNet<float> src(tiny(HeadSet::SegUV), 5);
  UNet<float> a(tiny(HeadSet::Age), 0), b(tiny(HeadSet::Age), 0);
  const Checkpoint c = to_checkpoint(src);
  transfer_encoder(&c, a, InitMode::Scratch, 9);
  transfer_encoder(nullptr, b, InitMode::Scratch, 9);
  EXPECT_EQ(encode(to_checkpoint(a)), encode(to_checkpoint(b)));
}

TEST(Transfer, ShapeMismatchSkippedAndReported) {
  NetConfig wide = tiny(HeadSet::SegUV);
  wide.max_channels = 16;
  UNet<float> src(wide, 1);
  UNet<float> dst(tiny(HeadSet::Age), 2);
  const Checkpoint c = to_checkpoint(src);
  const TransferReport r = transfer_encoder(&c, dst, InitMode::Generic, 3);
  EXPECT_GT(r.transferred, 0);
  EXPECT_FALSE(r.skipped_shape_mismatch.empty());
  EXPECT_EQ(r.transferred + static_cast<int>(r.skipped_shape_mismatch.size()), r.encoder_tensors);
  const std::string& name = r.skipped_shape_mismatch.front();
  const NamedTensor* s = c.find(name);
  EXPECT_NE(s->shape, dst.state().at(name).shape());
}

TEST(Transfer, Errors) {
  UNet<float> dst(tiny(HeadSet::Age), 2);
  EXPECT_EQ(code_of([&] { transfer_encoder(nullptr, dst, InitMode::UvReg, 1); }),
            ErrorCode::kMissingCheckpoint);
  Checkpoint unrelated;
  unrelated.tensors.push_back({"other.w", {1}, {0}});
  EXPECT_EQ(code_of([&] { transfer_encoder(&unrelated, dst, InitMode::Generic, 1); }),
            ErrorCode::kShapeMismatch);
}

TEST(InitMode, Names) {
  EXPECT_EQ(parse_init_mode("uvreg"), InitMode::UvReg);
  EXPECT_EQ(init_mode_name(InitMode::Generic), "generic");
  EXPECT_THROW(parse_init_mode("imagenet"), Error);
}

}  // namespace
