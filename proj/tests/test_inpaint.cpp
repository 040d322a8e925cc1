#include <cmath>
#include <filesystem>
#include <vector>

#include "calcx/error.hpp"
#include "calcx/image.hpp"
#include "calcx/inpaint.hpp"
#include "calcx/manifest.hpp"
#include "calcx/nn.hpp"
#include "calcx/phantom.hpp"
#include "calcx/rng.hpp"
#include "doctest.h"

using namespace calcx;

namespace {

std::filesystem::path temp_dir(const char* name) {
  const std::filesystem::path p = std::filesystem::temp_directory_path() / "calcx_tests" / name;
  std::filesystem::create_directories(p);
  return p;
}

Image random_image(int w, int h, std::uint64_t seed) {
  Image img(w, h);
  Rng rng(seed);
  for (float& v : img.data()) v = static_cast<float>(rng.uniform());
  return img;
}

Manifest tiny_normals(const std::filesystem::path& dir) {
  DatasetCounts counts;
  counts.n_normal = 8;
  counts.n_calcified = 2;
  counts.n_noncalcified = 2;
  PhantomRanges ranges;
  ranges.patch_size = 32;
  ranges.radius_min = 4.0;
  ranges.radius_max = 6.0;
  ranges.center_jitter = 1.0;
  ranges.val_fraction = 0.25;
  return build_dataset(counts, ranges, 31, dir);
}

}  // namespace

TEST_SUITE("inpaint") {

TEST_CASE("weight validation enforces the affine constraint") {
  CHECK_NOTHROW(validate_inpaint_weights({0.999, 0.001}));
  CHECK_NOTHROW(validate_inpaint_weights({1.0, 0.0}));
  CHECK_THROWS_AS(validate_inpaint_weights({0.9, 0.2}), ValueError);
  CHECK_THROWS_AS(validate_inpaint_weights({0.5, 0.4}), ValueError);
  CHECK_THROWS_AS(validate_inpaint_weights({-0.1, 1.1}), ValueError);
}

TEST_CASE("loss combination is the stated affine form") {
  Rng rng(11);
  for (int i = 0; i < 10; ++i) {
    const double rec = rng.uniform(0.0, 2.0);
    const double adv = rng.uniform(0.0, 2.0);
    const InpaintWeights w{0.999, 0.001};
    CHECK(std::abs(combine_inpaint_loss(rec, adv, w) - (0.999 * rec + 0.001 * adv)) <= 1e-9);
  }
}

TEST_CASE("inpaint_loss reduces to hole mse when adversarial weight is zero") {
  const Image target = random_image(16, 16, 12);
  Image pred = target;
  Mask hole(16, 16);
  for (int y = 6; y < 10; ++y)
    for (int x = 6; x < 10; ++x) hole.at(x, y) = 1;
  for (int y = 6; y < 10; ++y)
    for (int x = 6; x < 10; ++x) pred.at(x, y) += 0.1f;

  const double l = inpaint_loss(pred, target, hole, 0.0, {1.0, 0.0});
  CHECK(l == doctest::Approx(0.1 * 0.1).epsilon(1e-4));

  // Pixels outside the hole do not contribute in hole mode.
  Image pred2 = pred;
  pred2.at(0, 0) += 5.0f;
  CHECK(inpaint_loss(pred2, target, hole, 0.0, {1.0, 0.0}) == doctest::Approx(l));
  // ... but do in full-image mode.
  CHECK(inpaint_loss(pred2, target, hole, 0.0, {1.0, 0.0}, true) > l);

  Mask empty(16, 16);
  CHECK_THROWS_AS(inpaint_loss(pred, target, empty, 0.0, {1.0, 0.0}), ValueError);
}

TEST_CASE("mask_region hole matches the requested fraction and stays inside") {
  Rng rng(13);
  const Image img = random_image(40, 40, 14);
  for (int trial = 0; trial < 20; ++trial) {
    auto [masked, hole] = mask_region(img, 0.2, rng);
    REQUIRE(hole.width() == 40);
    int on = 0;
    int min_x = 40, max_x = -1, min_y = 40, max_y = -1;
    for (int y = 0; y < 40; ++y)
      for (int x = 0; x < 40; ++x)
        if (hole.at(x, y)) {
          ++on;
          min_x = std::min(min_x, x);
          max_x = std::max(max_x, x);
          min_y = std::min(min_y, y);
          max_y = std::max(max_y, y);
        }
    const int side = max_x - min_x + 1;
    CHECK(side == max_y - min_y + 1);
    CHECK(on == side * side);
    CHECK(side == static_cast<int>(std::lround(std::sqrt(0.2 * 40 * 40))));
    for (int y = 0; y < 40; ++y)
      for (int x = 0; x < 40; ++x) {
        if (hole.at(x, y))
          CHECK(masked.at(x, y) == 0.0f);
        else
          CHECK(masked.at(x, y) == img.at(x, y));
      }
  }
  CHECK_THROWS_AS(mask_region(img, 0.0, rng), ValueError);
  CHECK_THROWS_AS(mask_region(img, 1.5, rng), ValueError);
}

TEST_CASE("centered_hole is centered and sized like mask_region") {
  const Mask hole = centered_hole(32, 32, 0.25);
  int min_x = 32, max_x = -1, min_y = 32, max_y = -1;
  int on = 0;
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      if (hole.at(x, y)) {
        ++on;
        min_x = std::min(min_x, x);
        max_x = std::max(max_x, x);
        min_y = std::min(min_y, y);
        max_y = std::max(max_y, y);
      }
  const int side = static_cast<int>(std::lround(std::sqrt(0.25 * 32 * 32)));
  CHECK(on == side * side);
  CHECK(std::abs(min_x - (32 - 1 - max_x)) <= 1);  // margins match within rounding
  CHECK(std::abs(min_y - (32 - 1 - max_y)) <= 1);
  CHECK(max_x - min_x + 1 == side);
}

TEST_CASE("compose_inpaint only touches hole pixels") {
  const Image original = random_image(20, 20, 15);
  const Image pred = random_image(20, 20, 16);
  Mask hole(20, 20);
  for (int y = 5; y < 12; ++y)
    for (int x = 3; x < 9; ++x) hole.at(x, y) = 1;
  const Image out = compose_inpaint(original, pred, hole);
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 20; ++x) {
      if (hole.at(x, y))
        CHECK(out.at(x, y) == pred.at(x, y));
      else
        CHECK(out.at(x, y) == original.at(x, y));
    }
}

TEST_CASE("classical inpaint fills a hole in a linear ramp exactly") {
  // Harmonic interior of a linear function is the function itself.
  Image img(24, 24);
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 24; ++x) img.at(x, y) = (0.3f * x + 0.5f * y) / 24.0f;
  Mask hole(24, 24);
  for (int y = 9; y < 15; ++y)
    for (int x = 8; x < 14; ++x) hole.at(x, y) = 1;
  Image broken = img;
  for (int y = 9; y < 15; ++y)
    for (int x = 8; x < 14; ++x) broken.at(x, y) = 0.0f;

  const Image filled = classical_inpaint(broken, hole);
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 24; ++x) {
      if (hole.at(x, y))
        CHECK(std::abs(filled.at(x, y) - img.at(x, y)) < 2e-3f);
      else
        CHECK(filled.at(x, y) == broken.at(x, y));
    }
}

TEST_CASE("classical inpaint is idempotent") {
  const Image img = random_image(28, 28, 17);
  Mask hole(28, 28);
  for (int y = 10; y < 18; ++y)
    for (int x = 11; x < 19; ++x) hole.at(x, y) = 1;
  const Image once = classical_inpaint(img, hole);
  const Image twice = classical_inpaint(once, hole);
  for (int i = 0; i < once.size(); ++i)
    CHECK(std::abs(once.data()[i] - twice.data()[i]) <= 2e-5f);
}

TEST_CASE("classical inpaint rejects a hole covering everything") {
  const Image img = random_image(8, 8, 18);
  Mask hole(8, 8);
  for (auto& v : hole.bits()) v = 1;
  CHECK_THROWS_AS(classical_inpaint(img, hole), ValueError);
}

TEST_CASE("generator preserves the input size and stays in range") {
  InpaintArch arch;
  arch.enc_channels = {8, 16, 16};
  arch.enc_strides = {1, 2, 2};
  const InpaintGenerator gen(arch, 21);
  const Image img = random_image(32, 32, 22);
  const Image out = gen.predict(img);
  REQUIRE(out.width() == 32);
  REQUIRE(out.height() == 32);
  for (float v : out.data()) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
  // Odd sizes are handled by the halving arithmetic too.
  const Image odd = random_image(36, 36, 23);
  const Image out2 = gen.predict(odd);
  CHECK(out2.width() == 36);
}

TEST_CASE("generator forward/backward gradients match finite differences") {
  InpaintArch arch;
  arch.enc_channels = {4, 8};
  arch.enc_strides = {1, 2};
  InpaintGenerator gen(arch, 24);
  Rng rng(25);
  nn::Tensor x(1, 12, 12);
  for (float& v : x.v) v = static_cast<float>(rng.uniform());
  std::vector<float> coef(x.v.size());
  for (float& v : coef) v = static_cast<float>(rng.uniform(-1.0, 1.0));

  const auto loss = [&] {
    const nn::Tensor y = gen.forward(x);
    double s = 0.0;
    for (std::size_t i = 0; i < y.v.size(); ++i) s += static_cast<double>(coef[i]) * y.v[i];
    return s;
  };
  InpaintGenerator::Acts acts;
  const nn::Tensor y = gen.forward(x, &acts);
  nn::Tensor gy(y.c, y.h, y.w);
  gy.v = coef;
  nn::zero_grads(gen.params());
  gen.backward(acts, gy);

  Rng pick(26);
  auto params = gen.params();
  for (int trial = 0; trial < 16; ++trial) {
    auto* p = params[pick.below(params.size())];
    const std::size_t i = pick.below(p->count());
    const float keep = p->w[i];
    const double eps = 1e-3;
    p->w[i] = static_cast<float>(keep + eps);
    const double up = loss();
    p->w[i] = static_cast<float>(keep - eps);
    const double down = loss();
    p->w[i] = keep;
    const double fd = (up - down) / (2.0 * eps);
    const double an = p->g[i];
    CAPTURE(p->name);
    CHECK(std::abs(an - fd) <= 3e-2 * std::max(1.0, std::max(std::abs(an), std::abs(fd))));
  }
}

TEST_CASE("discriminator gradcheck and input binding") {
  Discriminator disc({4, 8}, 16, 27);
  Rng rng(28);
  nn::Tensor x(1, 16, 16);
  for (float& v : x.v) v = static_cast<float>(rng.uniform());

  Discriminator::Acts acts;
  const double logit = disc.forward(x, &acts);
  CHECK(std::isfinite(logit));
  nn::zero_grads(disc.params());
  disc.backward(acts, 1.0);

  const auto loss = [&] { return disc.forward(x); };
  auto params = disc.params();
  Rng pick(29);
  for (int trial = 0; trial < 12; ++trial) {
    auto* p = params[pick.below(params.size())];
    const std::size_t i = pick.below(p->count());
    const float keep = p->w[i];
    const double eps = 1e-3;
    p->w[i] = static_cast<float>(keep + eps);
    const double up = loss();
    p->w[i] = static_cast<float>(keep - eps);
    const double down = loss();
    p->w[i] = keep;
    const double fd = (up - down) / (2.0 * eps);
    const double g = p->g[i];
    CHECK(std::abs(g - fd) <= 3e-2 * std::max({1.0, std::abs(g), std::abs(fd)}));
  }

  nn::Tensor wrong(1, 20, 20);
  CHECK_THROWS_AS(disc.forward(wrong), ShapeError);
}

TEST_CASE("tiny training run logs a baseline and improves the hole fill") {
  const auto dir = temp_dir("inpaint_train");
  const Manifest m = tiny_normals(dir / "data");

  InpaintTrainConfig cfg;
  cfg.arch.enc_channels = {8, 16};
  cfg.arch.enc_strides = {1, 2};
  cfg.disc_channels = {8, 16};
  cfg.input_size = 32;
  cfg.iterations = 30;
  cfg.batch = 4;
  cfg.lr = 1e-3;
  cfg.mask_fraction = 0.2;
  cfg.seed = 5;

  const auto log_csv = dir / "train.csv";
  const InpaintTrainResult result = train_inpainter(m, cfg, log_csv);
  REQUIRE_FALSE(result.log.empty());
  CHECK(result.log.front().iteration == 0);
  for (const auto& row : result.log) {
    CHECK(std::isfinite(row.l_rec));
    CHECK(std::isfinite(row.l_inpaint));
    CHECK(std::isfinite(row.val_mse));
    // psnr and mse must order inversely within the log.
  }
  for (std::size_t i = 1; i < result.log.size(); ++i) {
    const auto& a = result.log[i - 1];
    const auto& b = result.log[i];
    if (a.val_mse != b.val_mse)
      CHECK((a.val_mse < b.val_mse) == (a.val_psnr > b.val_psnr));
  }
  CHECK(result.log.back().val_mse < result.log.front().val_mse);
  CHECK(std::filesystem::exists(log_csv));

  // Determinism: the same config reproduces the same final log row.
  const InpaintTrainResult again = train_inpainter(m, cfg);
  CHECK(again.log.back().val_mse == result.log.back().val_mse);
  CHECK(again.log.back().l_inpaint == result.log.back().l_inpaint);
}

TEST_CASE("zero adversarial weight leaves the discriminator untouched") {
  const auto dir = temp_dir("inpaint_noadv");
  const Manifest m = tiny_normals(dir / "data");

  InpaintTrainConfig cfg;
  cfg.arch.enc_channels = {8, 16};
  cfg.arch.enc_strides = {1, 2};
  cfg.disc_channels = {8, 16};
  cfg.input_size = 32;
  cfg.iterations = 8;
  cfg.batch = 4;
  cfg.weights = {1.0, 0.0};
  cfg.seed = 6;

  const InpaintTrainResult result = train_inpainter(m, cfg);
  // Training seeds the discriminator from stream 12 of the run seed.
  Discriminator fresh({8, 16}, 32, derive_seed(cfg.seed, 12));
  auto trained = const_cast<InpaintTrainResult&>(result).discriminator.params();
  auto init = fresh.params();
  REQUIRE(trained.size() == init.size());
  for (std::size_t i = 0; i < trained.size(); ++i) {
    REQUIRE(trained[i]->w.size() == init[i]->w.size());
    CHECK(trained[i]->w == init[i]->w);
  }
  for (const auto& row : result.log) CHECK(row.l_adv == 0.0);
}

TEST_CASE("inpainter checkpoint round trips through disk") {
  const auto dir = temp_dir("inpaint_ckpt");
  const Manifest m = tiny_normals(dir / "data");
  InpaintTrainConfig cfg;
  cfg.arch.enc_channels = {8, 16};
  cfg.arch.enc_strides = {1, 2};
  cfg.disc_channels = {8, 16};
  cfg.input_size = 32;
  cfg.iterations = 4;
  cfg.batch = 4;
  cfg.seed = 7;
  InpaintTrainResult result = train_inpainter(m, cfg);

  const Checkpoint ck = inpaint_checkpoint(result, cfg, "digest123");
  CHECK(ck.kind == "inpainter");
  CHECK(ck.manifest_digest == "digest123");
  ck.save(dir / "inpaint.ckpt");
  const Checkpoint back = Checkpoint::load(dir / "inpaint.ckpt");
  auto [gen, disc] = load_inpainter(back);

  const Image probe = random_image(32, 32, 30);
  const Image a = result.generator.predict(probe);
  const Image b = gen.predict(probe);
  CHECK(a.data() == b.data());
  nn::Tensor t(1, 32, 32);
  Rng rng(31);
  for (float& v : t.v) v = static_cast<float>(rng.uniform());
  CHECK(result.discriminator.forward(t) == disc.forward(t));
}

}  // TEST_SUITE
