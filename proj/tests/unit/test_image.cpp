#include <gtest/gtest.h>

#include "celeganser/error.hpp"
#include "celeganser/image.hpp"

namespace {

using celeganser::Error;
using celeganser::ImageGrid;

TEST(ImageGrid, RejectsWrongDataLength) {
  EXPECT_THROW(ImageGrid(2, 3, std::vector<double>(5)), Error);
}

TEST(ImageGrid, BinaryAndCount) {
  ImageGrid m(2, 2, std::vector<double>{0, 1, 1, 0});
  EXPECT_TRUE(m.is_binary());
  EXPECT_EQ(m.count_nonzero(), 2u);
  m.at(0, 0) = 0.5;
  EXPECT_FALSE(m.is_binary());
}

TEST(Bilinear, IntegerCoordinatesAreExact) {
  ImageGrid img(3, 4);
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = 0.1 * static_cast<double>(i * i);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) EXPECT_EQ(celeganser::sample_bilinear(img, r, c), img.at(r, c));
}

TEST(Bilinear, MidpointAveragesFourNeighbours) {
  ImageGrid img(2, 2, std::vector<double>{0, 1, 2, 3});
  EXPECT_DOUBLE_EQ(celeganser::sample_bilinear(img, 0.5, 0.5), 1.5);
}

TEST(Resize, TwoByTwoToOneIsTheMean) {
  ImageGrid img(2, 2, std::vector<double>{0, 1, 2, 3});
  const ImageGrid out = celeganser::resize_bilinear(img, 1, 1);
  EXPECT_DOUBLE_EQ(out.at(0, 0), 1.5);
}

TEST(Resize, ConstantStaysConstant) {
  const ImageGrid out = celeganser::resize_bilinear(ImageGrid(7, 5, 0.25), 3, 11);
  for (double v : out.data()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Crop, FillsOutsideCells) {
  ImageGrid img(2, 2, std::vector<double>{1, 2, 3, 4});
  const ImageGrid c = celeganser::crop(img, -1, 1, 3, 2, -7.0);
  EXPECT_EQ(c.at(0, 0), -7.0);
  EXPECT_EQ(c.at(1, 0), 2.0);
  EXPECT_EQ(c.at(2, 0), 4.0);
  EXPECT_EQ(c.at(1, 1), -7.0);
}

TEST(Threshold, StrictlyAbove) {
  ImageGrid img(1, 3, std::vector<double>{0.4, 0.5, 0.6});
  const ImageGrid t = celeganser::threshold(img, 0.5);
  EXPECT_EQ(t, ImageGrid(1, 3, std::vector<double>{0, 0, 1}));
}

TEST(Downsample, MajorityCountsHalfAsForeground) {
  // Cells hold 0, 1, 2 and 4 foreground pixels out of 4.
  ImageGrid m(2, 8, std::vector<double>{0, 0, 1, 0, 1, 1, 1, 1,  //
                                        0, 0, 0, 0, 0, 0, 1, 1});
  const ImageGrid d = celeganser::downsample_majority(m, 2);
  EXPECT_EQ(d, ImageGrid(1, 4, std::vector<double>{0, 0, 1, 1}));
  EXPECT_THROW(celeganser::downsample_majority(m, 3), Error);
}

TEST(Downsample, MaskedMeanIgnoresBackground) {
  ImageGrid f(2, 4, std::vector<double>{1, 100, 5, 5, 3, 100, 7, 9});
  ImageGrid m(2, 4, std::vector<double>{1, 0, 0, 0, 1, 0, 0, 1});
  const ImageGrid d = celeganser::downsample_masked_mean(f, m, 2);
  EXPECT_DOUBLE_EQ(d.at(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(d.at(0, 1), 9.0);
}

TEST(Downsample, MaskedMeanEmptyCellIsZero) {
  ImageGrid f(2, 2, 5.0);
  const ImageGrid d = celeganser::downsample_masked_mean(f, ImageGrid(2, 2), 2);
  EXPECT_EQ(d.at(0, 0), 0.0);
}

}  // namespace
