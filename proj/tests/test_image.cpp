#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "calcx/error.hpp"
#include "calcx/image.hpp"
#include "calcx/rng.hpp"
#include "doctest.h"

using namespace calcx;

namespace {

Image random_image(int w, int h, Rng& rng) {
  Image img(w, h);
  for (float& v : img.data()) v = static_cast<float>(rng.uniform(0.0, 1.0));
  return img;
}

// Direct O(n^2 k^2) convolution with edge replication, the reference the
// separable implementation must match.
Image brute_gaussian(const Image& img) {
  const std::array<double, 5> k1 = gaussian5x5_kernel1d();
  double k2[5][5];
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) k2[i][j] = k1[i] * k1[j];
  Image out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      double acc = 0.0;
      for (int dy = -2; dy <= 2; ++dy)
        for (int dx = -2; dx <= 2; ++dx) {
          const int sx = std::clamp(x + dx, 0, img.width() - 1);
          const int sy = std::clamp(y + dy, 0, img.height() - 1);
          acc += k2[dy + 2][dx + 2] * img.at(sx, sy);
        }
      out.at(x, y) = static_cast<float>(acc);
    }
  return out;
}

// Exhaustive Otsu: evaluate between-class variance at every candidate bin.
int brute_otsu_bin(const Image& img, int levels) {
  std::vector<long> hist(levels, 0);
  for (float v : img.data()) {
    int bin = static_cast<int>(v * levels);
    bin = std::clamp(bin, 0, levels - 1);
    ++hist[bin];
  }
  const double total = static_cast<double>(img.size());
  double best = -1.0;
  int best_bin = levels - 1;
  for (int t = 0; t < levels; ++t) {
    double w0 = 0.0, sum0 = 0.0, w1 = 0.0, sum1 = 0.0;
    for (int b = 0; b <= t; ++b) {
      w0 += hist[b];
      sum0 += static_cast<double>(hist[b]) * b;
    }
    for (int b = t + 1; b < levels; ++b) {
      w1 += hist[b];
      sum1 += static_cast<double>(hist[b]) * b;
    }
    if (w0 == 0.0 || w1 == 0.0) continue;
    const double m0 = sum0 / w0, m1 = sum1 / w1;
    const double var = (w0 / total) * (w1 / total) * (m0 - m1) * (m0 - m1);
    if (var > best) {  // strictly greater: smallest maximizing bin wins ties
      best = var;
      best_bin = t;
    }
  }
  return best_bin;
}

}  // namespace

TEST_SUITE("image") {

TEST_CASE("subtract clamps negatives and matches constants") {
  Image a(4, 4, 0.8f), b(4, 4, 0.3f);
  const Image d = subtract(a, b);
  for (float v : d.data()) CHECK(v == doctest::Approx(0.5f));
  const Image z = subtract(b, a);  // negative residue discarded
  for (float v : z.data()) CHECK(v == 0.0f);
  CHECK(subtract(a, a).data() == std::vector<float>(16, 0.0f));
}

TEST_CASE("subtract rejects shape mismatch") {
  CHECK_THROWS_AS(subtract(Image(4, 4), Image(4, 5)), ShapeError);
}

TEST_CASE("gaussian kernel is normalized and symmetric") {
  const auto k = gaussian5x5_kernel1d();
  CHECK(k[0] == doctest::Approx(k[4]));
  CHECK(k[1] == doctest::Approx(k[3]));
  double sum = 0.0;
  for (double v : k) sum += v;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(k[2] > k[1]);
  CHECK(k[1] > k[0]);
}

TEST_CASE("gaussian preserves constant images") {
  const Image c(7, 9, 0.37f);
  const Image g = gaussian5x5(c);
  for (float v : g.data()) CHECK(v == doctest::Approx(0.37f).epsilon(1e-6));
}

TEST_CASE("gaussian impulse response stamps the kernel") {
  Image img(9, 9, 0.0f);
  img.at(4, 4) = 1.0f;
  const Image g = gaussian5x5(img);
  const auto k1 = gaussian5x5_kernel1d();
  for (int dy = -2; dy <= 2; ++dy)
    for (int dx = -2; dx <= 2; ++dx)
      CHECK(g.at(4 + dx, 4 + dy) ==
            doctest::Approx(k1[dx + 2] * k1[dy + 2]).epsilon(1e-6));
  CHECK(g.at(0, 0) == 0.0f);
}

TEST_CASE("gaussian matches the brute-force oracle on random images") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const Image img = random_image(16, 16, rng);
    const Image fast = gaussian5x5(img);
    const Image ref = brute_gaussian(img);
    double max_diff = 0.0;
    for (std::size_t i = 0; i < img.size(); ++i)
      max_diff = std::max(max_diff, std::abs(double(fast.data()[i]) - ref.data()[i]));
    CHECK(max_diff < 1e-6);
  }
}

TEST_CASE("gaussian rejects images smaller than the kernel") {
  CHECK_THROWS_AS(gaussian5x5(Image(4, 8)), ShapeError);
  CHECK_THROWS_AS(gaussian5x5(Image(8, 4)), ShapeError);
}

TEST_CASE("otsu separates a two-population image exactly") {
  Image img(8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) img.at(x, y) = (y < 4) ? 0.2f : 0.8f;
  const OtsuResult r = otsu_binarize(img, 256);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) CHECK(r.mask.at(x, y) == (y < 4 ? 0 : 1));
  CHECK(r.mask.count() == 32);
  CHECK(r.threshold > 0.2);
  CHECK(r.threshold <= 0.8);
}

TEST_CASE("otsu constant image degenerates to an empty mask") {
  const OtsuResult r = otsu_binarize(Image(6, 6, 0.5f), 256);
  CHECK(r.mask.count() == 0);
  CHECK(r.threshold_bin == 255);
}

TEST_CASE("otsu matches the exhaustive scan on random images") {
  Rng rng(22);
  for (int trial = 0; trial < 50; ++trial) {
    const Image img = random_image(32, 32, rng);
    const OtsuResult r = otsu_binarize(img, 256);
    CHECK(r.threshold_bin == brute_otsu_bin(img, 256));
  }
}

TEST_CASE("otsu threshold value is the foreground bin edge") {
  Rng rng(23);
  const Image img = random_image(16, 16, rng);
  const OtsuResult r = otsu_binarize(img, 256);
  CHECK(r.threshold == doctest::Approx((r.threshold_bin + 1) / 256.0));
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      const int bin = std::clamp(static_cast<int>(img.at(x, y) * 256), 0, 255);
      CHECK(static_cast<int>(r.mask.at(x, y)) == (bin > r.threshold_bin ? 1 : 0));
    }
}

TEST_CASE("otsu rejects fewer than two levels") {
  CHECK_THROWS_AS(otsu_binarize(Image(4, 4, 0.5f), 1), ValueError);
}

TEST_CASE("intersect keeps only masked pixels") {
  Image img(3, 3, 0.7f);
  Mask m(3, 3, 0);
  m.at(1, 1) = 1;
  m.at(2, 0) = 1;
  const Image r = intersect(img, m);
  CHECK(r.at(1, 1) == 0.7f);
  CHECK(r.at(2, 0) == 0.7f);
  CHECK(r.at(0, 0) == 0.0f);
  CHECK_THROWS_AS(intersect(img, Mask(4, 3)), ShapeError);
}

TEST_CASE("crop returns the centered window and shifts at borders") {
  Image img(10, 10);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x) img.at(x, y) = static_cast<float>(y * 10 + x) / 100.0f;
  const Image c = crop(img, 5, 5, 4);
  CHECK(c.width() == 4);
  CHECK(c.height() == 4);
  CHECK(c.at(0, 0) == img.at(3, 3));
  const Image edge = crop(img, 0, 0, 4);  // window shifted inward
  CHECK(edge.at(0, 0) == img.at(0, 0));
  CHECK_THROWS_AS(crop(img, 5, 5, 11), ShapeError);
}

TEST_CASE("resize identity and constant preservation") {
  Rng rng(31);
  const Image img = random_image(12, 9, rng);
  const Image same = resize_to(img, 12, 9);
  for (std::size_t i = 0; i < img.size(); ++i)
    CHECK(same.data()[i] == doctest::Approx(img.data()[i]).epsilon(1e-6));
  const Image c = resize_to(Image(8, 8, 0.42f), 5, 13);
  for (float v : c.data()) CHECK(v == doctest::Approx(0.42f).epsilon(1e-6));
}

TEST_CASE("resize downsamples a checkerboard to its mean") {
  Image board(8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) board.at(x, y) = ((x + y) % 2) ? 1.0f : 0.0f;
  const Image half = resize(board, 0.5);
  CHECK(half.width() == 4);
  CHECK(half.height() == 4);
  // Sample points sit exactly between four alternating neighbors.
  for (float v : half.data()) CHECK(v == doctest::Approx(0.5f).epsilon(1e-6));
}

TEST_CASE("resize rejects degenerate outputs") {
  CHECK_THROWS_AS(resize(Image(8, 8, 0.1f), 0.01), ShapeError);
  CHECK_THROWS_AS(resize_to(Image(8, 8, 0.1f), 0, 4), ShapeError);
  CHECK_THROWS_AS(resize(Image(8, 8, 0.1f), -1.0), ValueError);
}

TEST_CASE("mse and psnr are consistent") {
  const Image a(4, 4, 0.5f);
  Image b = a;
  CHECK(mse(a, b) == 0.0);
  CHECK(std::isinf(psnr(a, b)));
  b.at(0, 0) = 0.9f;
  const double e = mse(a, b);
  CHECK(e == doctest::Approx(0.16 / 16.0).epsilon(1e-6));
  CHECK(psnr(a, b) == doctest::Approx(10.0 * std::log10(1.0 / e)).epsilon(1e-9));
}

TEST_CASE("psnr decreases as mse grows") {
  const Image ref(6, 6, 0.5f);
  double last_psnr = std::numeric_limits<double>::infinity();
  double last_mse = 0.0;
  for (float delta : {0.05f, 0.1f, 0.2f, 0.4f}) {
    Image noisy(6, 6, 0.5f + delta);
    const double m = mse(ref, noisy);
    const double p = psnr(ref, noisy);
    CHECK(m > last_mse);
    CHECK(p < last_psnr);
    last_mse = m;
    last_psnr = p;
  }
}

TEST_CASE("clamp01 bounds every pixel") {
  Image img(2, 2);
  img.data() = {-0.5f, 0.25f, 1.5f, 1.0f};
  const Image c = clamp01(img);
  CHECK(c.data() == std::vector<float>{0.0f, 0.25f, 1.0f, 1.0f});
}

}  // TEST_SUITE
