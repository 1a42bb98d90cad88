#include "celeganser/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "celeganser/error.hpp"

namespace celeganser {

ImageGrid::ImageGrid(int height, int width, double fill)
    : height_(height), width_(width) {
  require(height >= 0 && width >= 0, ErrorCode::kInvalidArgument,
          "negative image dimensions");
  data_.assign(static_cast<std::size_t>(height) * static_cast<std::size_t>(width),
               fill);
}

ImageGrid::ImageGrid(int height, int width, std::vector<double> data)
    : height_(height), width_(width), data_(std::move(data)) {
  require(height >= 0 && width >= 0, ErrorCode::kInvalidArgument,
          "negative image dimensions");
  require(data_.size() == static_cast<std::size_t>(height) *
                              static_cast<std::size_t>(width),
          ErrorCode::kShapeMismatch, "image data length != height * width");
}

bool ImageGrid::is_binary() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return v == 0.0 || v == 1.0; });
}

std::size_t ImageGrid::count_nonzero() const {
  return static_cast<std::size_t>(
      std::count_if(data_.begin(), data_.end(), [](double v) { return v != 0.0; }));
}

double ImageGrid::max_value() const {
  if (data_.empty()) return 0.0;
  return *std::max_element(data_.begin(), data_.end());
}

double sample_bilinear(const ImageGrid& image, double row, double col) {
  const int h = image.height();
  const int w = image.width();
  row = std::clamp(row, 0.0, static_cast<double>(h - 1));
  col = std::clamp(col, 0.0, static_cast<double>(w - 1));
  const int r0 = static_cast<int>(std::floor(row));
  const int c0 = static_cast<int>(std::floor(col));
  const int r1 = std::min(r0 + 1, h - 1);
  const int c1 = std::min(c0 + 1, w - 1);
  const double fr = row - r0;
  const double fc = col - c0;
  const double top = image.at(r0, c0) * (1.0 - fc) + image.at(r0, c1) * fc;
  const double bottom = image.at(r1, c0) * (1.0 - fc) + image.at(r1, c1) * fc;
  return top * (1.0 - fr) + bottom * fr;
}

ImageGrid resize_bilinear(const ImageGrid& image, int out_height, int out_width) {
  require(out_height > 0 && out_width > 0, ErrorCode::kInvalidArgument,
          "resize target must be positive");
  require(!image.empty(), ErrorCode::kInvalidArgument, "resize of empty image");
  ImageGrid out(out_height, out_width);
  const double sr = static_cast<double>(image.height()) / out_height;
  const double sc = static_cast<double>(image.width()) / out_width;
  for (int r = 0; r < out_height; ++r) {
    const double src_r = (r + 0.5) * sr - 0.5;
    for (int c = 0; c < out_width; ++c) {
      out.at(r, c) = sample_bilinear(image, src_r, (c + 0.5) * sc - 0.5);
    }
  }
  return out;
}

ImageGrid crop(const ImageGrid& image, int top, int left, int height, int width,
               double fill) {
  ImageGrid out(height, width, fill);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      if (image.contains(top + r, left + c)) out.at(r, c) = image.at(top + r, left + c);
    }
  }
  return out;
}

ImageGrid threshold(const ImageGrid& image, double level) {
  ImageGrid out(image.height(), image.width());
  for (std::size_t i = 0; i < image.size(); ++i) out[i] = image[i] > level ? 1.0 : 0.0;
  return out;
}

ImageGrid downsample_majority(const ImageGrid& mask, int factor) {
  require(factor >= 1 && mask.height() % factor == 0 && mask.width() % factor == 0,
          ErrorCode::kInvalidArgument,
          "downsample factor must divide the mask dimensions");
  const int h = mask.height() / factor;
  const int w = mask.width() / factor;
  const int cell = factor * factor;
  ImageGrid out(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      int fg = 0;
      for (int dr = 0; dr < factor; ++dr)
        for (int dc = 0; dc < factor; ++dc)
          fg += mask.at(r * factor + dr, c * factor + dc) != 0.0 ? 1 : 0;
      out.at(r, c) = 2 * fg >= cell ? 1.0 : 0.0;
    }
  }
  return out;
}

ImageGrid downsample_masked_mean(const ImageGrid& field, const ImageGrid& mask,
                                 int factor) {
  require(field.same_dims(mask), ErrorCode::kShapeMismatch,
          "field and mask dimensions differ");
  require(factor >= 1 && mask.height() % factor == 0 && mask.width() % factor == 0,
          ErrorCode::kInvalidArgument,
          "downsample factor must divide the field dimensions");
  const int h = mask.height() / factor;
  const int w = mask.width() / factor;
  ImageGrid out(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double sum = 0.0;
      int n = 0;
      for (int dr = 0; dr < factor; ++dr) {
        for (int dc = 0; dc < factor; ++dc) {
          const int rr = r * factor + dr;
          const int cc = c * factor + dc;
          if (mask.at(rr, cc) != 0.0) {
            sum += field.at(rr, cc);
            ++n;
          }
        }
      }
      out.at(r, c) = n > 0 ? sum / n : 0.0;
    }
  }
  return out;
}

}  // namespace celeganser
