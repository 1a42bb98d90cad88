#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "celeganser/error.hpp"
#include "celeganser/models.hpp"

namespace {

using namespace celeganser;
using namespace celeganser::models;
using Tf = ad::Tensor<float>;

NetConfig tiny(HeadSet head, int input = 32) {
  NetConfig c;
  c.head = head;
  c.base_channels = 4;
  c.max_channels = 8;
  c.input_size = input;
  return c;
}

Tf random_input(int n, int side, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<float> v(static_cast<std::size_t>(n) * side * side);
  for (float& x : v) x = u(rng);
  return Tf::from_vector({n, 1, side, side}, std::move(v));
}

std::size_t conv_bn_params(int in, int out) { return 9u * in * out + 2u * out; }
std::size_t head_params(int in, int out) { return std::size_t(in) * out + out; }

TEST(NetConfig, Validation) {
  NetConfig c = tiny(HeadSet::Seg, 128);
  EXPECT_NO_THROW(c.validate());
  c.input_size = 100;
  EXPECT_THROW(c.validate(), Error);
  c.input_size = 128;
  c.num_scales = 0;
  EXPECT_THROW(c.validate(), Error);
}

TEST(NetConfig, ChannelsCapAtMax) {
  NetConfig c = tiny(HeadSet::Seg);
  EXPECT_EQ(c.channels_at(0), 4);
  EXPECT_EQ(c.channels_at(1), 8);
  EXPECT_EQ(c.channels_at(4), 8);
}

TEST(NetConfig, EchoRoundTrip) {
  NetConfig c = tiny(HeadSet::SegUV, 64);
  c.blocks_per_stage = 2;
  const NetConfig back = NetConfig::from_echo(c.echo());
  EXPECT_EQ(back.head, HeadSet::SegUV);
  EXPECT_EQ(back.blocks_per_stage, 2);
  EXPECT_EQ(back.input_size, 64);
  EXPECT_EQ(back.echo(), c.echo());
}

TEST(CoarseNet, OutputShapesPerScale) {
  NetConfig c = tiny(HeadSet::Seg, 128);
  UNet<float> net = build_coarse_net(c, 1);
  const auto out = net.forward(random_input(1, 128, 2), false);
  ASSERT_EQ(out.mask_logits.size(), 5u);
  for (int s = 0; s < 5; ++s)
    EXPECT_EQ(out.mask_logits[s].shape(), (ad::Shape{1, 1, 128 >> s, 128 >> s}));
  EXPECT_EQ(net.encoder_output_shape(1, 128), (ad::Shape{1, 8, 8, 8}));
}

TEST(CoarseNet, ZeroWeightsGiveHalfProbability) {
  UNet<float> net = build_coarse_net(tiny(HeadSet::Seg), 1);
  net.zero_weights();
  const auto out = net.forward(random_input(2, 32, 3), false);
  for (const Tf& logits : out.mask_logits) {
    const Tf probs = ad::sigmoid(logits);
    for (float v : probs.data()) EXPECT_EQ(v, 0.5f);
  }
}

TEST(CoarseNet, ParameterCountMatchesLayerSum) {
  const NetConfig c = tiny(HeadSet::Seg);
  std::size_t expected = conv_bn_params(1, 4);
  for (int l = 1; l < 5; ++l)
    expected += conv_bn_params(c.channels_at(l - 1), c.channels_at(l)) +
                2 * conv_bn_params(c.channels_at(l), c.channels_at(l));
  for (int l = 0; l < 4; ++l)
    expected += conv_bn_params(c.channels_at(l + 1) + c.channels_at(l), c.channels_at(l));
  for (int s = 0; s < 5; ++s) expected += head_params(c.channels_at(s), 1);
  EXPECT_EQ(build_coarse_net(c).parameter_count(), expected);
}

TEST(CoarseNet, BuilderRejectsWrongHead) {
  EXPECT_THROW(build_coarse_net(tiny(HeadSet::Age)), Error);
  EXPECT_THROW(build_fine_net(tiny(HeadSet::Seg)), Error);
}

TEST(FineNet, ThreeOutputsPerScale) {
  UNet<float> net = build_fine_net(tiny(HeadSet::SegUV, 128), 4);
  const auto out = net.forward(random_input(1, 128, 5), false);
  ASSERT_EQ(out.mask_logits.size(), 5u);
  ASSERT_EQ(out.u.size(), 5u);
  ASSERT_EQ(out.v.size(), 5u);
  for (int s = 0; s < 5; ++s) {
    EXPECT_EQ(out.u[s].shape(), (ad::Shape{1, 1, 128 >> s, 128 >> s}));
    EXPECT_EQ(out.v[s].shape(), out.u[s].shape());
  }
}

TEST(FineNet, UVHeadsAreLinear) {
  // Scaling the head weights and biases scales U linearly; a sigmoid would saturate.
  UNet<float> net = build_fine_net(tiny(HeadSet::SegUV), 6);
  const Tf x = random_input(1, 32, 7);
  const auto a = net.forward(x, false);
  for (auto& [name, t] : net.state())
    if (name.rfind("head.", 0) == 0)
      for (float& v : t.mutable_data()) v *= 3.0f;
  const auto b = net.forward(x, false);
  for (std::size_t i = 0; i < a.u[0].numel(); ++i)
    EXPECT_NEAR(b.u[0].data()[i], 3.0f * a.u[0].data()[i], 1e-3f * (1.0f + std::abs(a.u[0].data()[i])));
}

TEST(FineNet, ForwardIsDeterministic) {
  UNet<float> a = build_fine_net(tiny(HeadSet::SegUV), 8);
  UNet<float> b = build_fine_net(tiny(HeadSet::SegUV), 8);
  const Tf x = random_input(2, 32, 9);
  const auto oa = a.forward(x, false), ob = b.forward(x, false);
  for (int s = 0; s < 5; ++s) {
    EXPECT_TRUE(std::equal(oa.u[s].data().begin(), oa.u[s].data().end(), ob.u[s].data().begin()));
    EXPECT_TRUE(std::equal(oa.mask_logits[s].data().begin(), oa.mask_logits[s].data().end(),
                           ob.mask_logits[s].data().begin()));
  }
}

TEST(AgeNet, ScalarPerItem) {
  UNet<float> net = build_age_net(tiny(HeadSet::Age), 10);
  const auto out = net.forward(random_input(3, 32, 11), false);
  EXPECT_EQ(out.age.shape(), (ad::Shape{3}));
  EXPECT_TRUE(out.mask_logits.empty());
}

TEST(AgeNet, ZeroWeightsGiveZero) {
  UNet<float> net = build_age_net(tiny(HeadSet::Age), 12);
  net.zero_weights();
  const auto out = net.forward(random_input(2, 32, 13), false);
  for (float v : out.age.data()) EXPECT_EQ(v, 0.0f);
}

TEST(AgeNet, GradientReachesFirstConv) {
  UNet<float> net = build_age_net(tiny(HeadSet::Age), 14);
  const auto out = net.forward(random_input(2, 32, 15), true);
  const Tf target = Tf::from_vector({2}, {120.0f, 250.0f});
  ad::backward(ad::mean(ad::abs(ad::sub(out.age, target))));
  const Tf& w = net.state().at("enc.stem.conv.weight");
  double norm = 0.0;
  for (float g : w.grad()) norm += std::abs(g);
  EXPECT_GT(norm, 0.0);
}

TEST(UNet, InitIsSeeded) {
  UNet<float> a(tiny(HeadSet::Seg), 1), b(tiny(HeadSet::Seg), 1), c(tiny(HeadSet::Seg), 2);
  const auto& wa = a.state().at("enc.l1.down.conv.weight");
  const auto& wb = b.state().at("enc.l1.down.conv.weight");
  const auto& wc = c.state().at("enc.l1.down.conv.weight");
  EXPECT_TRUE(std::equal(wa.data().begin(), wa.data().end(), wb.data().begin()));
  EXPECT_FALSE(std::equal(wa.data().begin(), wa.data().end(), wc.data().begin()));
  // He-uniform bound for fan_in = 4 * 9.
  const float bound = std::sqrt(6.0f / 36.0f);
  for (float v : wa.data()) EXPECT_LE(std::abs(v), bound);
  for (float v : a.state().at("enc.l1.down.bn.weight").data()) EXPECT_EQ(v, 1.0f);
  EXPECT_FALSE(a.is_trainable("enc.l1.down.bn.running_mean"));
}

TEST(UNet, EncoderNamesArePrefixed) {
  UNet<float> net(tiny(HeadSet::Age), 0);
  int enc = 0;
  for (const auto& [name, t] : net.state()) enc += name.rfind("enc.", 0) == 0;
  EXPECT_EQ(enc, 5 * (1 + 4 * 3));  // 5 tensors per conv-bn; stem, then down + 2 per level
}

TEST(UNet, SingleScaleNet) {
  NetConfig c = tiny(HeadSet::Seg, 16);
  c.num_scales = 1;
  UNet<float> net(c, 0);
  const auto out = net.forward(random_input(1, 16, 1), false);
  ASSERT_EQ(out.mask_logits.size(), 1u);
  EXPECT_EQ(out.mask_logits[0].shape(), (ad::Shape{1, 1, 16, 16}));
}

}  // namespace
