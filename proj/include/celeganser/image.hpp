#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace celeganser {

/// Row-major 2-D scalar raster. Carries images, masks, and coordinate fields.
class ImageGrid {
 public:
  ImageGrid() = default;
  ImageGrid(int height, int width, double fill = 0.0);
  ImageGrid(int height, int width, std::vector<double> data);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(int row, int col) { return data_[index(row, col)]; }
  double at(int row, int col) const { return data_[index(row, col)]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  bool contains(int row, int col) const {
    return row >= 0 && col >= 0 && row < height_ && col < width_;
  }
  bool same_dims(const ImageGrid& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  /// True if every value is exactly 0 or 1.
  bool is_binary() const;
  std::size_t count_nonzero() const;
  double max_value() const;

  bool operator==(const ImageGrid&) const = default;

 private:
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(col);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

/// Bilinear sample at (row, col) in pixel-center coordinates. Coordinates are
/// clamped to the grid edge.
double sample_bilinear(const ImageGrid& image, double row, double col);

/// Bilinear resize with half-pixel centers: output pixel o maps to input
/// coordinate (o + 0.5) * in / out - 0.5, clamped.
ImageGrid resize_bilinear(const ImageGrid& image, int out_height, int out_width);

/// Window copy; cells outside the source are filled with `fill`.
ImageGrid crop(const ImageGrid& image, int top, int left, int height, int width,
               double fill = 0.0);

ImageGrid threshold(const ImageGrid& image, double level);

/// Binary downsample by an integer factor: a cell is 1 iff at least half of
/// its source pixels are foreground.
ImageGrid downsample_majority(const ImageGrid& mask, int factor);

/// Average of `field` over the foreground pixels of each factor x factor cell;
/// 0 where the cell has no foreground.
ImageGrid downsample_masked_mean(const ImageGrid& field, const ImageGrid& mask,
                                 int factor);

}  // namespace celeganser
