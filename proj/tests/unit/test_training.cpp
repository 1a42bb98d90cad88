#include <gtest/gtest.h>

#include <cmath>

#include "celeganser/models.hpp"
#include "celeganser/training.hpp"

namespace {

using namespace celeganser;
using models::HeadSet;
using models::NetConfig;

NetConfig tiny(HeadSet head) {
  NetConfig c;
  c.head = head;
  c.base_channels = 4;
  c.max_channels = 8;
  c.input_size = 16;
  return c;
}

// A 16x16 sample whose top `rows` rows are foreground.
training::Example striped(int rows, double age) {
  training::Example e;
  e.input = ImageGrid(16, 16, 0.2);
  e.mask = ImageGrid(16, 16, 0.0);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < 16; ++c) {
      e.mask.at(r, c) = 1.0;
      e.input.at(r, c) = 0.7;
    }
  e.u = ImageGrid(16, 16, 0.0);
  e.v = ImageGrid(16, 16, 0.0);
  e.age_hours = age;
  return e;
}

TEST(Training, MaskBiasStartsAtForegroundLogOdds) {
  auto net = models::build_coarse_net(tiny(HeadSet::Seg), 1);
  const std::vector<training::Example> set = {striped(4, 0), striped(2, 0)};
  training::TrainOptions opt;
  opt.epochs = 0;
  training::train(net, set, set, opt);
  const double p = 6.0 / 32.0;
  for (int s = 1; s <= 5; ++s)
    EXPECT_NEAR(net.state().at("head.s" + std::to_string(s) + ".bias").data()[0],
                std::log(p / (1 - p)), 1e-6);
}

TEST(Training, MaskBiasInitSkipsFineNetAndCanBeTurnedOff) {
  auto fine = models::build_fine_net(tiny(HeadSet::SegUV), 1);
  auto coarse = models::build_coarse_net(tiny(HeadSet::Seg), 1);
  const float fine_before = fine.state().at("head.s1.bias").data()[0];
  const float coarse_before = coarse.state().at("head.s1.bias").data()[0];
  const std::vector<training::Example> set = {striped(4, 0)};
  training::TrainOptions opt;
  opt.epochs = 0;
  training::train(fine, set, set, opt);
  EXPECT_EQ(fine.state().at("head.s1.bias").data()[0], fine_before);
  opt.init_mask_bias = false;
  training::train(coarse, set, set, opt);
  EXPECT_EQ(coarse.state().at("head.s1.bias").data()[0], coarse_before);
}

TEST(Training, AgeBiasStartsAtMeanAge) {
  auto net = models::build_age_net(tiny(HeadSet::Age), 1);
  const std::vector<training::Example> set = {striped(4, 100), striped(4, 300)};
  training::TrainOptions opt;
  opt.epochs = 0;
  training::train(net, set, set, opt);
  EXPECT_NEAR(net.state().at("age.fc.bias").data()[0], 200.0 / net.config().age_scale, 1e-6);
}

TEST(Training, LogHasOneRowPerEpochAndLossDrops) {
  auto net = models::build_coarse_net(tiny(HeadSet::Seg), 1);
  const std::vector<training::Example> set = {striped(4, 0), striped(8, 0), striped(6, 0)};
  training::TrainOptions opt;
  opt.epochs = 6;
  opt.batch_size = 3;
  opt.lr0 = 1e-2;
  const auto log = training::train(net, set, set, opt);
  ASSERT_EQ(log.size(), 6u);
  EXPECT_LT(log.back().train_loss, log.front().train_loss);
}

}  // namespace
