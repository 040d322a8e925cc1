#include "calcx/image.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "calcx/error.hpp"

namespace calcx {

Image::Image(int width, int height, float fill)
    : width_(width), height_(height), data_(static_cast<std::size_t>(width) * height, fill) {
  if (width <= 0 || height <= 0) throw ShapeError("image dimensions must be positive");
}

Image::Image(int width, int height, std::vector<float> data)
    : width_(width), height_(height), data_(std::move(data)) {
  if (width <= 0 || height <= 0) throw ShapeError("image dimensions must be positive");
  if (data_.size() != static_cast<std::size_t>(width) * height)
    throw ShapeError("image data length does not match width*height");
}

Mask::Mask(int width, int height, std::uint8_t fill)
    : width_(width), height_(height), bits_(static_cast<std::size_t>(width) * height, fill) {
  if (width <= 0 || height <= 0) throw ShapeError("mask dimensions must be positive");
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

namespace {

void require_same_shape(const Image& a, const Image& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shape mismatch (" + std::to_string(a.width()) + "x" +
                     std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                     std::to_string(b.height()) + ")");
}

}  // namespace

Image subtract(const Image& a, const Image& b) {
  require_same_shape(a, b, "subtract");
  Image out(a.width(), a.height());
  const auto& pa = a.data();
  const auto& pb = b.data();
  auto& po = out.data();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const float d = pa[i] - pb[i];
    po[i] = d < 0.0f ? 0.0f : (d > 1.0f ? 1.0f : d);
  }
  return out;
}

std::array<double, 5> gaussian5x5_kernel1d() {
  std::array<double, 5> k{};
  double sum = 0.0;
  for (int i = 0; i < 5; ++i) {
    const double d = i - 2;
    k[i] = std::exp(-0.5 * d * d);  // sigma = 1.0
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

Image gaussian5x5(const Image& img) {
  if (img.width() < 5 || img.height() < 5)
    throw ShapeError("gaussian5x5: image smaller than the 5x5 kernel");
  const auto k = gaussian5x5_kernel1d();
  const int w = img.width(), h = img.height();

  // Separable passes with edge replication; accumulation in double.
  std::vector<double> tmp(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int t = -2; t <= 2; ++t) {
        const int xx = std::clamp(x + t, 0, w - 1);
        acc += k[t + 2] * img.at(xx, y);
      }
      tmp[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  Image out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int t = -2; t <= 2; ++t) {
        const int yy = std::clamp(y + t, 0, h - 1);
        acc += k[t + 2] * tmp[static_cast<std::size_t>(yy) * w + x];
      }
      out.at(x, y) = static_cast<float>(std::clamp(acc, 0.0, 1.0));
    }
  }
  return out;
}

OtsuResult otsu_binarize(const Image& img, int levels) {
  if (levels < 2) throw ValueError("otsu_binarize: levels must be >= 2");
  const std::size_t n = img.size();
  std::vector<std::size_t> hist(static_cast<std::size_t>(levels), 0);
  auto bin_of = [levels](float v) {
    int b = static_cast<int>(v * levels);
    return std::clamp(b, 0, levels - 1);
  };
  for (float v : img.data()) ++hist[static_cast<std::size_t>(bin_of(v))];

  // Running moments; sigma_b^2(t) = (muT*w0 - sum0)^2 / (w0*(1-w0)).
  double total_mean = 0.0;
  for (int b = 0; b < levels; ++b) total_mean += static_cast<double>(b) * hist[b];
  total_mean /= static_cast<double>(n);

  double best_var = 0.0;
  int best_t = -1;
  double w0 = 0.0, sum0 = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (int t = 0; t < levels; ++t) {
    w0 += static_cast<double>(hist[t]) * inv_n;
    sum0 += static_cast<double>(t) * hist[t] * inv_n;
    if (w0 <= 0.0 || w0 >= 1.0) continue;
    const double num = total_mean * w0 - sum0;
    const double var = num * num / (w0 * (1.0 - w0));
    if (var > best_var) {
      best_var = var;
      best_t = t;
    }
  }
  if (best_t < 0) best_t = levels - 1;  // constant image: empty foreground

  OtsuResult r;
  r.threshold_bin = best_t;
  r.threshold = static_cast<double>(best_t + 1) / levels;
  r.mask = Mask(img.width(), img.height());
  auto& bits = r.mask.bits();
  const auto& px = img.data();
  for (std::size_t i = 0; i < n; ++i) bits[i] = bin_of(px[i]) > best_t ? 1 : 0;
  return r;
}

Image intersect(const Image& img, const Mask& mask) {
  if (img.width() != mask.width() || img.height() != mask.height())
    throw ShapeError("intersect: image/mask shape mismatch");
  Image out(img.width(), img.height());
  const auto& px = img.data();
  const auto& bits = mask.bits();
  auto& po = out.data();
  for (std::size_t i = 0; i < px.size(); ++i) po[i] = bits[i] ? px[i] : 0.0f;
  return out;
}

Image crop(const Image& img, int cx, int cy, int size) {
  if (size <= 0) throw ShapeError("crop: size must be positive");
  if (size > img.width() || size > img.height())
    throw ShapeError("crop: window larger than the image");
  const int x0 = std::clamp(cx - size / 2, 0, img.width() - size);
  const int y0 = std::clamp(cy - size / 2, 0, img.height() - size);
  Image out(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) out.at(x, y) = img.at(x0 + x, y0 + y);
  return out;
}

Image resize_to(const Image& img, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1) throw ShapeError("resize: degenerate output size");
  if (out_w == img.width() && out_h == img.height()) return img;
  Image out(out_w, out_h);
  const double sx = static_cast<double>(img.width()) / out_w;
  const double sy = static_cast<double>(img.height()) / out_h;
  for (int oy = 0; oy < out_h; ++oy) {
    // Pixel-center alignment: out center (oy+0.5) maps to source (oy+0.5)*sy.
    double fy = (oy + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(img.height() - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height() - 1);
    const double wy = fy - y0;
    for (int ox = 0; ox < out_w; ++ox) {
      double fx = (ox + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(img.width() - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width() - 1);
      const double wx = fx - x0;
      const double v = (1.0 - wy) * ((1.0 - wx) * img.at(x0, y0) + wx * img.at(x1, y0)) +
                       wy * ((1.0 - wx) * img.at(x0, y1) + wx * img.at(x1, y1));
      out.at(ox, oy) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return out;
}

Image resize(const Image& img, double ratio) {
  if (!(ratio > 0.0)) throw ValueError("resize: ratio must be positive");
  const int ow = static_cast<int>(std::llround(img.width() * ratio));
  const int oh = static_cast<int>(std::llround(img.height() * ratio));
  if (ow < 1 || oh < 1) throw ShapeError("resize: degenerate output size");
  return resize_to(img, ow, oh);
}

double mse(const Image& a, const Image& b) {
  require_same_shape(a, b, "mse");
  const auto& pa = a.data();
  const auto& pb = b.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const double d = static_cast<double>(pa[i]) - pb[i];
    acc += d * d;
  }
  return acc / static_cast<double>(pa.size());
}

double psnr(const Image& a, const Image& b) {
  const double e = mse(a, b);
  if (e <= 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / e);
}

Image clamp01(Image img) {
  for (float& v : img.data()) v = std::clamp(v, 0.0f, 1.0f);
  return img;
}

}  // namespace calcx
