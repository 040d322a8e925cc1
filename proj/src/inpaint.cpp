#include "calcx/inpaint.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "calcx/error.hpp"
#include "calcx/image_io.hpp"
#include "calcx/util.hpp"

namespace calcx {

void validate_inpaint_weights(const InpaintWeights& w) {
  if (w.lambda_rec < 0.0 || w.lambda_adv < 0.0)
    throw ValueError("inpaint weights: lambda_rec and lambda_adv must be >= 0");
  if (std::abs(w.lambda_rec + w.lambda_adv - 1.0) > 1e-9)
    throw ValueError("inpaint weights: lambda_rec + lambda_adv must sum to 1");
}

std::pair<Image, Mask> mask_region(const Image& img, double fraction, Rng& rng) {
  if (fraction <= 0.0 || fraction >= 1.0)
    throw ValueError("mask_region: fraction must lie strictly inside (0, 1)");
  const double area = fraction * img.width() * img.height();
  const int side = static_cast<int>(std::llround(std::sqrt(area)));
  if (side < 1 || side > img.width() || side > img.height())
    throw ValueError("mask_region: hole side " + std::to_string(side) +
                     " does not fit the image");
  const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(img.width() - side + 1)));
  const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(img.height() - side + 1)));
  Image out = img;
  Mask hole(img.width(), img.height());
  for (int y = y0; y < y0 + side; ++y)
    for (int x = x0; x < x0 + side; ++x) {
      out.at(x, y) = 0.f;
      hole.at(x, y) = 1;
    }
  return {std::move(out), std::move(hole)};
}

Mask centered_hole(int width, int height, double fraction) {
  if (fraction <= 0.0 || fraction >= 1.0)
    throw ValueError("centered_hole: fraction must lie strictly inside (0, 1)");
  const double area = fraction * width * height;
  const int side = static_cast<int>(std::llround(std::sqrt(area)));
  if (side < 1 || side > width || side > height)
    throw ValueError("centered_hole: hole side does not fit the image");
  const int x0 = (width - side) / 2;
  const int y0 = (height - side) / 2;
  Mask hole(width, height);
  for (int y = y0; y < y0 + side; ++y)
    for (int x = x0; x < x0 + side; ++x) hole.at(x, y) = 1;
  return hole;
}

Image compose_inpaint(const Image& original, const Image& prediction, const Mask& hole) {
  if (!original.same_shape(prediction) || original.width() != hole.width() ||
      original.height() != hole.height())
    throw ShapeError("compose_inpaint: dimension mismatch");
  Image out = original;
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x)
      if (hole.at(x, y)) out.at(x, y) = prediction.at(x, y);
  return out;
}

double combine_inpaint_loss(double l_rec, double l_adv, const InpaintWeights& w) {
  validate_inpaint_weights(w);
  return w.lambda_rec * l_rec + w.lambda_adv * l_adv;
}

double inpaint_loss(const Image& pred, const Image& target, const Mask& hole,
                    double d_logit, const InpaintWeights& w, bool rec_full_image) {
  validate_inpaint_weights(w);
  if (!pred.same_shape(target) || pred.width() != hole.width() ||
      pred.height() != hole.height())
    throw ShapeError("inpaint_loss: dimension mismatch");
  const std::size_t n_hole = hole.count();
  if (n_hole == 0) throw ValueError("inpaint_loss: empty hole mask");

  double sum = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < pred.height(); ++y)
    for (int x = 0; x < pred.width(); ++x) {
      if (!rec_full_image && !hole.at(x, y)) continue;
      const double d = static_cast<double>(pred.at(x, y)) - target.at(x, y);
      sum += d * d;
      ++n;
    }
  const double l_rec = sum / static_cast<double>(n);
  const double l_adv = nn::bce_with_logit(d_logit, 1.0, nullptr);
  return combine_inpaint_loss(l_rec, l_adv, w);
}

Image classical_inpaint(const Image& img, const Mask& hole) {
  if (img.width() != hole.width() || img.height() != hole.height())
    throw ShapeError("classical_inpaint: dimension mismatch");
  const std::size_t n_hole = hole.count();
  if (n_hole == img.size())
    throw ValueError("classical_inpaint: hole covers the entire image");
  if (n_hole == 0) return img;

  const int w = img.width(), h = img.height();
  std::vector<double> cur(img.data().begin(), img.data().end());
  std::vector<double> next = cur;
  std::vector<int> hole_px;
  hole_px.reserve(n_hole);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (hole.at(x, y)) hole_px.push_back(y * w + x);

  constexpr double kTol = 1e-5;
  constexpr int kMaxIter = 40000;
  for (int it = 0; it < kMaxIter; ++it) {
    double max_change = 0.0;
    for (int p : hole_px) {
      const int x = p % w, y = p / w;
      double sum = 0.0;
      int n = 0;
      if (x > 0) { sum += cur[p - 1]; ++n; }
      if (x + 1 < w) { sum += cur[p + 1]; ++n; }
      if (y > 0) { sum += cur[p - w]; ++n; }
      if (y + 1 < h) { sum += cur[p + w]; ++n; }
      const double v = sum / n;
      max_change = std::max(max_change, std::abs(v - cur[p]));
      next[p] = v;
    }
    for (int p : hole_px) cur[p] = next[p];
    if (max_change < kTol) break;
  }

  Image out = img;
  for (int p : hole_px)
    out.data()[static_cast<std::size_t>(p)] =
        static_cast<float>(std::clamp(cur[static_cast<std::size_t>(p)], 0.0, 1.0));
  return out;
}

namespace {

constexpr float kLeakySlope = 0.2f;

void validate_arch(const InpaintArch& a) {
  if (a.enc_channels.empty() || a.enc_channels.size() != a.enc_strides.size())
    throw ValueError("inpaint arch: channel and stride schedules must match and be non-empty");
  if (a.kernel < 2 || a.kernel % 2 != 0)
    throw ValueError("inpaint arch: kernel must be even and >= 2");
  int down = 0;
  for (std::size_t i = 0; i < a.enc_strides.size(); ++i) {
    if (a.enc_strides[i] != 1 && a.enc_strides[i] != 2)
      throw ValueError("inpaint arch: strides must be 1 or 2");
    if (a.enc_channels[i] < 1) throw ValueError("inpaint arch: channels must be >= 1");
    if (a.enc_strides[i] == 2) ++down;
  }
  if (down < 1) throw ValueError("inpaint arch: at least one stride-2 stage required");
}

}  // namespace

InpaintGenerator::InpaintGenerator(const InpaintArch& arch, std::uint64_t init_seed)
    : arch_(arch) {
  validate_arch(arch_);
  const int k = arch_.kernel;
  int in_c = 1;
  int down = 0;
  for (std::size_t i = 0; i < arch_.enc_channels.size(); ++i) {
    const int stride = arch_.enc_strides[i];
    nn::Conv2d conv("enc" + std::to_string(i + 1), in_c, arch_.enc_channels[i], k, stride, 0);
    // Padding keeps size at stride 1 and halves it at stride 2; even kernels
    // need one extra pixel on the bottom/right at stride 1.
    const int total = stride == 1 ? k - 1 : k - 2;
    conv.set_padding(total / 2, total / 2, total - total / 2, total - total / 2);
    enc_.push_back(std::move(conv));
    in_c = arch_.enc_channels[i];
    if (stride == 2) ++down;
  }
  const int n = static_cast<int>(arch_.enc_channels.size());
  for (int i = 0; i < down; ++i) {
    const int out_c = i < down - 1 ? arch_.enc_channels[n - 2 - i] : 1;
    dec_.emplace_back("dec" + std::to_string(i + 1), in_c, out_c, k, 2, (k - 2) / 2);
    in_c = out_c;
  }
  Rng rng(derive_seed(init_seed, 0));
  for (auto& l : enc_) l.init(rng);
  for (auto& l : dec_) l.init(rng);
}

nn::Tensor InpaintGenerator::forward(const nn::Tensor& x, Acts* acts) const {
  if (x.c != 1) throw ShapeError("inpaint forward: expected a single-channel tensor");
  Acts local;
  Acts& a = acts ? *acts : local;
  a.enc_in.clear();
  a.enc_pre.clear();
  a.dec_in.clear();
  a.dec_pre.clear();

  nn::Tensor t = x;
  for (std::size_t i = 0; i < enc_.size(); ++i) {
    if (enc_[i].stride == 2 && (t.h % 2 != 0 || t.w % 2 != 0))
      throw ShapeError("inpaint forward: input size not divisible by the stride schedule");
    a.enc_in.push_back(t);
    nn::Tensor pre = enc_[i].forward(t);
    a.enc_pre.push_back(pre);
    t = nn::leaky_relu(pre, kLeakySlope);
  }
  for (std::size_t i = 0; i < dec_.size(); ++i) {
    a.dec_in.push_back(t);
    nn::Tensor pre = dec_[i].forward(t);
    a.dec_pre.push_back(pre);
    t = i + 1 < dec_.size() ? nn::relu(pre) : nn::sigmoid(pre);
  }
  a.out = t;
  return t;
}

nn::Tensor InpaintGenerator::backward(const Acts& acts, const nn::Tensor& grad_out) {
  nn::Tensor g = nn::sigmoid_backward_from_output(acts.out, grad_out);
  for (int i = static_cast<int>(dec_.size()) - 1; i >= 0; --i) {
    g = dec_[static_cast<std::size_t>(i)].backward(acts.dec_in[static_cast<std::size_t>(i)], g);
    if (i > 0) g = nn::relu_backward(acts.dec_pre[static_cast<std::size_t>(i - 1)], g);
  }
  for (int i = static_cast<int>(enc_.size()) - 1; i >= 0; --i) {
    g = nn::leaky_relu_backward(acts.enc_pre[static_cast<std::size_t>(i)], g, kLeakySlope);
    g = enc_[static_cast<std::size_t>(i)].backward(acts.enc_in[static_cast<std::size_t>(i)], g);
  }
  return g;
}

Image InpaintGenerator::predict(const Image& masked) const {
  return nn::image_from_tensor(forward(nn::tensor_from_image(masked)));
}

std::vector<nn::ParamTensor*> InpaintGenerator::params() {
  std::vector<nn::ParamTensor*> ps;
  for (auto& l : enc_)
    for (auto* p : l.params()) ps.push_back(p);
  for (auto& l : dec_)
    for (auto* p : l.params()) ps.push_back(p);
  return ps;
}

ParamSection InpaintGenerator::to_section() const {
  auto* self = const_cast<InpaintGenerator*>(this);
  return section_from_params("generator", self->params());
}

void InpaintGenerator::load_section(const ParamSection& sec) {
  params_from_section(sec, params());
}

Discriminator::Discriminator(const std::vector<int>& channels, int input_size,
                             std::uint64_t init_seed)
    : channels_(channels), input_size_(input_size) {
  if (channels_.empty()) throw ValueError("discriminator: empty channel schedule");
  int size = input_size_;
  int in_c = 1;
  for (std::size_t i = 0; i < channels_.size(); ++i) {
    if (size % 2 != 0)
      throw ValueError("discriminator: input size not divisible by the conv stack");
    conv_.emplace_back("conv" + std::to_string(i + 1), in_c, channels_[i], 4, 2, 1);
    in_c = channels_[i];
    size /= 2;
  }
  if (size < 1) throw ValueError("discriminator: conv stack collapses the input");
  head_ = nn::Linear("head", in_c * size * size, 1);
  Rng rng(derive_seed(init_seed, 0));
  for (auto& l : conv_) l.init(rng);
  head_.init(rng);
}

double Discriminator::forward(const nn::Tensor& x, Acts* acts) const {
  if (x.c != 1 || x.h != input_size_ || x.w != input_size_)
    throw ShapeError("discriminator: input size mismatch");
  Acts local;
  Acts& a = acts ? *acts : local;
  a.conv_in.clear();
  a.conv_pre.clear();

  nn::Tensor t = x;
  for (const auto& conv : conv_) {
    a.conv_in.push_back(t);
    nn::Tensor pre = conv.forward(t);
    a.conv_pre.push_back(pre);
    t = nn::leaky_relu(pre, kLeakySlope);
  }
  a.flat = nn::flatten(t);
  return head_.forward(a.flat)[0];
}

nn::Tensor Discriminator::backward(const Acts& acts, double dlogit) {
  std::vector<float> gflat = head_.backward(acts.flat, {static_cast<float>(dlogit)});
  const nn::Tensor& last = acts.conv_pre.back();
  nn::Tensor g = nn::unflatten(last.c, last.h, last.w, gflat);
  for (int i = static_cast<int>(conv_.size()) - 1; i >= 0; --i) {
    g = nn::leaky_relu_backward(acts.conv_pre[static_cast<std::size_t>(i)], g, kLeakySlope);
    g = conv_[static_cast<std::size_t>(i)].backward(acts.conv_in[static_cast<std::size_t>(i)], g);
  }
  return g;
}

std::vector<nn::ParamTensor*> Discriminator::params() {
  std::vector<nn::ParamTensor*> ps;
  for (auto& l : conv_)
    for (auto* p : l.params()) ps.push_back(p);
  for (auto* p : head_.params()) ps.push_back(p);
  return ps;
}

ParamSection Discriminator::to_section() const {
  auto* self = const_cast<Discriminator*>(this);
  return section_from_params("discriminator", self->params());
}

void Discriminator::load_section(const ParamSection& sec) {
  params_from_section(sec, params());
}

namespace {

double hole_mse(const Image& pred, const Image& target, const Mask& hole) {
  double sum = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < pred.height(); ++y)
    for (int x = 0; x < pred.width(); ++x) {
      if (!hole.at(x, y)) continue;
      const double d = static_cast<double>(pred.at(x, y)) - target.at(x, y);
      sum += d * d;
      ++n;
    }
  return n ? sum / static_cast<double>(n) : 0.0;
}

Image zero_hole(const Image& img, const Mask& hole) {
  Image out = img;
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x)
      if (hole.at(x, y)) out.at(x, y) = 0.f;
  return out;
}

[[noreturn]] void nan_abort(const std::string& which, int iteration) {
  throw NumericError("inpaint training: " + which + " became NaN at iteration " +
                     std::to_string(iteration));
}

}  // namespace

InpaintTrainResult train_inpainter(const Manifest& manifest, const InpaintTrainConfig& cfg,
                                   const std::filesystem::path& log_csv) {
  validate_inpaint_weights(cfg.weights);
  if (cfg.batch < 1) throw ValueError("inpaint training: batch must be >= 1");
  if (cfg.iterations < 0) throw ValueError("inpaint training: iterations must be >= 0");

  std::vector<Image> train, held;
  for (const ManifestRow* row : manifest.select("normal", "train"))
    train.push_back(load_image(manifest.resolve(row->image)));
  for (const ManifestRow* row : manifest.select("normal", "val")) {
    if (held.size() >= 8) break;
    held.push_back(load_image(manifest.resolve(row->image)));
  }
  if (train.empty()) throw ValueError("inpaint training: needs at least one normal training sample");
  if (held.empty()) {
    // No validation normals: hold out up to 4 training patches from the end.
    while (train.size() > 1 && held.size() < 4) {
      held.push_back(std::move(train.back()));
      train.pop_back();
    }
    if (held.empty()) held.push_back(train.front());
  }
  for (const Image& img : train)
    if (img.width() != cfg.input_size || img.height() != cfg.input_size)
      throw ShapeError("inpaint training: patch size does not match the configured input size");

  InpaintTrainResult result{InpaintGenerator(cfg.arch, derive_seed(cfg.seed, 11)),
                            Discriminator(cfg.disc_channels, cfg.input_size,
                                          derive_seed(cfg.seed, 12)),
                            {}};
  InpaintGenerator& gen = result.generator;
  Discriminator& disc = result.discriminator;
  const bool adversarial = cfg.weights.lambda_adv > 0.0;

  nn::Adam adam_g, adam_d;
  adam_g.lr = cfg.lr;
  adam_d.lr = cfg.lr;
  auto gen_params = gen.params();
  auto disc_params = disc.params();
  adam_g.init(gen_params);
  adam_d.init(disc_params);

  Rng rng(derive_seed(cfg.seed, 10));
  const Mask val_hole = centered_hole(cfg.input_size, cfg.input_size, cfg.mask_fraction);

  auto evaluate_held = [&]() {
    double sum = 0.0;
    for (const Image& img : held) {
      const Image pred = gen.predict(zero_hole(img, val_hole));
      sum += hole_mse(pred, img, val_hole);
    }
    return sum / static_cast<double>(held.size());
  };

  // One generator pass over a batch. When update is false this only measures
  // losses (the pre-training baseline row).
  auto gen_batch = [&](bool update, int iteration) {
    double sum_rec = 0.0, sum_adv = 0.0;
    if (update) nn::zero_grads(gen_params);
    for (int b = 0; b < cfg.batch; ++b) {
      const Image& target = train[rng.below(train.size())];
      auto [masked, hole] = mask_region(target, cfg.mask_fraction, rng);
      InpaintGenerator::Acts acts;
      const nn::Tensor pred = gen.forward(nn::tensor_from_image(masked), &acts);

      const std::size_t n_hole = hole.count();
      const std::size_t n_rec = cfg.rec_full_image ? target.size() : n_hole;
      double l_rec = 0.0;
      nn::Tensor dpred(pred.c, pred.h, pred.w);
      for (int y = 0; y < target.height(); ++y)
        for (int x = 0; x < target.width(); ++x) {
          if (!cfg.rec_full_image && !hole.at(x, y)) continue;
          const double d = static_cast<double>(pred.at(0, y, x)) - target.at(x, y);
          l_rec += d * d;
          dpred.at(0, y, x) = static_cast<float>(cfg.weights.lambda_rec * 2.0 * d /
                                                 static_cast<double>(n_rec));
        }
      l_rec /= static_cast<double>(n_rec);

      double l_adv = 0.0;
      if (adversarial) {
        const Image composed = compose_inpaint(target, nn::image_from_tensor(pred), hole);
        Discriminator::Acts dacts;
        const double logit = disc.forward(nn::tensor_from_image(composed), &dacts);
        double dlogit = 0.0;
        l_adv = nn::bce_with_logit(logit, 1.0, &dlogit);
        if (update) {
          const nn::Tensor gin = disc.backward(dacts, dlogit);
          for (int y = 0; y < target.height(); ++y)
            for (int x = 0; x < target.width(); ++x)
              if (hole.at(x, y))
                dpred.at(0, y, x) += static_cast<float>(cfg.weights.lambda_adv) * gin.at(0, y, x);
        }
      }
      if (update) gen.backward(acts, dpred);
      sum_rec += l_rec;
      sum_adv += l_adv;
    }
    if (update) adam_g.step(gen_params, 1.0 / cfg.batch);

    InpaintLogRow row;
    row.iteration = iteration;
    row.l_rec = sum_rec / cfg.batch;
    row.l_adv = sum_adv / cfg.batch;
    row.l_inpaint = combine_inpaint_loss(row.l_rec, row.l_adv, cfg.weights);
    if (std::isnan(row.l_rec)) nan_abort("L_rec", iteration);
    if (std::isnan(row.l_adv)) nan_abort("L_adv", iteration);
    row.val_mse = evaluate_held();
    if (std::isnan(row.val_mse)) nan_abort("validation MSE", iteration);
    row.val_psnr = row.val_mse > 0.0 ? 10.0 * std::log10(1.0 / row.val_mse)
                                     : std::numeric_limits<double>::infinity();
    result.log.push_back(row);
  };

  gen_batch(false, 0);  // baseline before any update

  for (int it = 1; it <= cfg.iterations; ++it) {
    if (adversarial) {
      nn::zero_grads(disc_params);
      for (int b = 0; b < cfg.batch; ++b) {
        const Image& target = train[rng.below(train.size())];
        auto [masked, hole] = mask_region(target, cfg.mask_fraction, rng);
        const Image fake = compose_inpaint(target, gen.predict(masked), hole);

        Discriminator::Acts acts;
        double dlogit = 0.0;
        const double logit_real = disc.forward(nn::tensor_from_image(target), &acts);
        nn::bce_with_logit(logit_real, 1.0, &dlogit);
        disc.backward(acts, dlogit);

        const double logit_fake = disc.forward(nn::tensor_from_image(fake), &acts);
        nn::bce_with_logit(logit_fake, 0.0, &dlogit);
        disc.backward(acts, dlogit);
      }
      adam_d.step(disc_params, 1.0 / cfg.batch);
    }
    gen_batch(true, it);
  }

  if (!log_csv.empty()) {
    std::vector<std::vector<std::string>> rows;
    for (const InpaintLogRow& r : result.log)
      rows.push_back({std::to_string(r.iteration), format_number(r.l_rec),
                      format_number(r.l_adv), format_number(r.l_inpaint),
                      format_number(r.val_mse), format_number(r.val_psnr)});
    write_csv(log_csv, "inpaint-train-v1",
              {"iteration", "l_rec", "l_adv", "l_inpaint", "val_mse", "val_psnr"}, rows);
  }
  return result;
}

Checkpoint inpaint_checkpoint(const InpaintTrainResult& result, const InpaintTrainConfig& cfg,
                              const std::string& manifest_digest) {
  Checkpoint ck;
  ck.kind = "inpainter";
  ck.seed = cfg.seed;
  ck.manifest_digest = manifest_digest;
  const InpaintArch& a = result.generator.arch();
  ck.schedule.push_back(static_cast<int>(a.enc_channels.size()));
  for (int c : a.enc_channels) ck.schedule.push_back(c);
  for (int s : a.enc_strides) ck.schedule.push_back(s);
  ck.schedule.push_back(a.kernel);
  ck.schedule.push_back(cfg.input_size);
  ck.schedule.push_back(static_cast<int>(result.discriminator.channels().size()));
  for (int c : result.discriminator.channels()) ck.schedule.push_back(c);
  ck.sections.push_back(result.generator.to_section());
  ck.sections.push_back(result.discriminator.to_section());
  return ck;
}

std::pair<InpaintGenerator, Discriminator> load_inpainter(const Checkpoint& ck) {
  if (ck.kind != "inpainter")
    throw IoError("checkpoint kind '" + ck.kind + "' is not an inpainter");
  const std::vector<int>& s = ck.schedule;
  std::size_t pos = 0;
  auto take = [&]() {
    if (pos >= s.size()) throw IoError("inpainter checkpoint: truncated schedule");
    return s[pos++];
  };
  InpaintArch arch;
  const int n = take();
  arch.enc_channels.assign(static_cast<std::size_t>(n), 0);
  arch.enc_strides.assign(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n; ++i) arch.enc_channels[static_cast<std::size_t>(i)] = take();
  for (int i = 0; i < n; ++i) arch.enc_strides[static_cast<std::size_t>(i)] = take();
  arch.kernel = take();
  const int input_size = take();
  const int nd = take();
  std::vector<int> disc_channels;
  for (int i = 0; i < nd; ++i) disc_channels.push_back(take());

  InpaintGenerator gen(arch, 0);
  Discriminator disc(disc_channels, input_size, 0);
  const ParamSection* gsec = ck.find_section("generator");
  const ParamSection* dsec = ck.find_section("discriminator");
  if (!gsec || !dsec) throw IoError("inpainter checkpoint: missing parameter sections");
  gen.load_section(*gsec);
  disc.load_section(*dsec);
  return {std::move(gen), std::move(disc)};
}

}  // namespace calcx
