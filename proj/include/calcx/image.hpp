#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace calcx {

// Single-channel raster, row-major, values in [0,1]. The universal pixel
// container for every stage of the pipeline.
class Image {
 public:
  Image() = default;
  Image(int width, int height, float fill = 0.0f);
  Image(int width, int height, std::vector<float> data);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }

  float& at(int x, int y) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  float at(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }

  std::vector<float>& data() { return data_; }
  const std::vector<float>& data() const { return data_; }

  bool same_shape(const Image& o) const { return width_ == o.width_ && height_ == o.height_; }
  bool operator==(const Image& o) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<float> data_;
};

// Binary raster marking a region (inpainting hole, thresholding foreground,
// phantom ground truth). Bits are 0 or 1.
class Mask {
 public:
  Mask() = default;
  Mask(int width, int height, std::uint8_t fill = 0);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return bits_.size(); }

  std::uint8_t& at(int x, int y) { return bits_[static_cast<std::size_t>(y) * width_ + x]; }
  std::uint8_t at(int x, int y) const { return bits_[static_cast<std::size_t>(y) * width_ + x]; }

  std::vector<std::uint8_t>& bits() { return bits_; }
  const std::vector<std::uint8_t>& bits() const { return bits_; }

  // Number of set pixels.
  std::size_t count() const;

  bool operator==(const Mask& o) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

// Per-pixel a - b clamped to [0,1]. Negative residue is discarded: the
// subject of the subtraction is always brighter than its reconstruction.
Image subtract(const Image& a, const Image& b);

// Convolution with a normalized 5x5 Gaussian kernel (sigma = 1.0), borders
// handled by edge replication. Requires width and height >= 5.
Image gaussian5x5(const Image& img);

// The normalized 1D kernel row used by gaussian5x5; exposed for inspection.
std::array<double, 5> gaussian5x5_kernel1d();

struct OtsuResult {
  Mask mask;          // pixels whose quantized bin lies above threshold_bin
  int threshold_bin;  // chosen histogram bin, in [0, levels-1]
  double threshold;   // lower edge of the first foreground bin: (bin+1)/levels
};

// Histogram threshold maximizing between-class variance over a `levels`-bin
// quantization of [0,1]. Smallest maximizing bin wins ties; a single-bin
// (constant) histogram yields the top bin and an empty foreground mask.
OtsuResult otsu_binarize(const Image& img, int levels = 256);

// Pixel kept where mask = 1, zero elsewhere.
Image intersect(const Image& img, const Mask& mask);

// size x size patch centered at (cx, cy); windows extending past the borders
// are shifted inward. size must fit within the image.
Image crop(const Image& img, int cx, int cy, int size);

// Bilinear resampling to round(width*ratio) x round(height*ratio), sampling
// aligned on pixel centers. Degenerate output sizes are rejected.
Image resize(const Image& img, double ratio);
Image resize_to(const Image& img, int out_w, int out_h);

// Mean squared pixel difference.
double mse(const Image& a, const Image& b);

// 10*log10(1/mse) with peak value 1.0; +infinity for identical images.
double psnr(const Image& a, const Image& b);

// Clamp every pixel into [0,1].
Image clamp01(Image img);

}  // namespace calcx
