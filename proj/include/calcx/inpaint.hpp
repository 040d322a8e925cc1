#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "calcx/checkpoint.hpp"
#include "calcx/image.hpp"
#include "calcx/manifest.hpp"
#include "calcx/nn.hpp"
#include "calcx/rng.hpp"

namespace calcx {

struct InpaintWeights {
  double lambda_rec = 0.999;
  double lambda_adv = 0.001;
};

// Rejects weights unless both are >= 0 and they sum to 1 (within 1e-9).
void validate_inpaint_weights(const InpaintWeights& w);

// Square hole of area = fraction * image area (side rounded), placed uniformly
// at random fully inside the image. Returns the image with the hole zeroed
// plus the hole mask.
std::pair<Image, Mask> mask_region(const Image& img, double fraction, Rng& rng);

// Same hole geometry, centered. Used at extraction time where the nodule is
// known to sit at the patch center.
Mask centered_hole(int width, int height, double fraction);

// original outside the hole, prediction inside: pixels outside the hole are
// never touched by inpainting.
Image compose_inpaint(const Image& original, const Image& prediction, const Mask& hole);

// Weighted inpainting objective: lambda_rec * L_rec + lambda_adv * L_adv with
// L_rec the mean squared error over hole pixels (or the full image when
// rec_full_image) and L_adv the generator-side cross-entropy pushing d_logit
// toward "real". The hole must be non-empty.
double inpaint_loss(const Image& pred, const Image& target, const Mask& hole,
                    double d_logit, const InpaintWeights& w, bool rec_full_image = false);

// The affine combination used by inpaint_loss, exposed for direct checks.
double combine_inpaint_loss(double l_rec, double l_adv, const InpaintWeights& w);

// Deterministic fallback engine: iterative harmonic fill. Hole pixels are
// repeatedly replaced by the mean of their in-bounds 4-neighbors until the
// largest per-iteration change drops below 1e-5 (or an iteration cap).
// Initial hole values are taken as-is, which makes the fill idempotent.
Image classical_inpaint(const Image& img, const Mask& hole);

// Encoder-decoder inpainting network: conv stages with stride schedule
// (strides of 1 keep size, 2 halve it), mirrored up-conv stages restoring the
// input size, sigmoid output. Stride-1 stages use asymmetric padding so even
// kernels preserve dimensions.
struct InpaintArch {
  std::vector<int> enc_channels{8, 16, 16, 32, 32, 32};
  std::vector<int> enc_strides{1, 2, 2, 2, 2, 2};
  int kernel = 4;
};

class InpaintGenerator {
 public:
  struct Acts {
    std::vector<nn::Tensor> enc_in;   // input to each encoder conv
    std::vector<nn::Tensor> enc_pre;  // pre-activation outputs
    std::vector<nn::Tensor> dec_in;
    std::vector<nn::Tensor> dec_pre;
    nn::Tensor out;  // post-sigmoid
  };

  InpaintGenerator() = default;
  InpaintGenerator(const InpaintArch& arch, std::uint64_t init_seed);

  nn::Tensor forward(const nn::Tensor& x, Acts* acts = nullptr) const;
  // Accumulates parameter gradients; returns the gradient w.r.t. the input.
  nn::Tensor backward(const Acts& acts, const nn::Tensor& grad_out);

  // Runs the network on a hole-zeroed image and returns the raw prediction.
  Image predict(const Image& masked) const;

  std::vector<nn::ParamTensor*> params();
  const InpaintArch& arch() const { return arch_; }

  ParamSection to_section() const;
  void load_section(const ParamSection& sec);

 private:
  InpaintArch arch_;
  std::vector<nn::Conv2d> enc_;
  std::vector<nn::ConvT2d> dec_;
};

// Real/fake critic: conv stages (4x4, stride 2) followed by a linear layer
// emitting one logit. Bound to a fixed input size by the final flatten.
class Discriminator {
 public:
  struct Acts {
    std::vector<nn::Tensor> conv_in;
    std::vector<nn::Tensor> conv_pre;
    std::vector<float> flat;
  };

  Discriminator() = default;
  Discriminator(const std::vector<int>& channels, int input_size, std::uint64_t init_seed);

  double forward(const nn::Tensor& x, Acts* acts = nullptr) const;
  // Accumulates parameter gradients; returns the gradient w.r.t. the input.
  nn::Tensor backward(const Acts& acts, double dlogit);

  std::vector<nn::ParamTensor*> params();
  int input_size() const { return input_size_; }
  const std::vector<int>& channels() const { return channels_; }

  ParamSection to_section() const;
  void load_section(const ParamSection& sec);

 private:
  std::vector<int> channels_;
  int input_size_ = 0;
  std::vector<nn::Conv2d> conv_;
  nn::Linear head_;
};

struct InpaintTrainConfig {
  InpaintArch arch;
  std::vector<int> disc_channels{8, 16, 32, 64, 64};
  InpaintWeights weights;
  double mask_fraction = 0.20;
  int iterations = 300;
  int batch = 8;
  double lr = 2e-4;
  bool rec_full_image = false;  // reconstruction loss over the hole only by default
  int input_size = 64;
  std::uint64_t seed = 1;
};

struct InpaintLogRow {
  int iteration;
  double l_rec, l_adv, l_inpaint;
  double val_mse, val_psnr;  // held-out hole-region reconstruction quality
};

struct InpaintTrainResult {
  InpaintGenerator generator;
  Discriminator discriminator;
  std::vector<InpaintLogRow> log;
};

// Alternating discriminator/generator training on the manifest's normal
// patches (train split; val normals serve as the held-out set). Deterministic
// for a fixed seed. Row 0 of the log is the pre-training baseline. Aborts
// with a diagnostic naming the iteration if any loss turns NaN. When
// lambda_adv = 0 the discriminator is never touched.
InpaintTrainResult train_inpainter(const Manifest& manifest, const InpaintTrainConfig& cfg,
                                   const std::filesystem::path& log_csv = {});

// Checkpoint packing: generator + discriminator + training provenance.
Checkpoint inpaint_checkpoint(const InpaintTrainResult& result, const InpaintTrainConfig& cfg,
                              const std::string& manifest_digest);
std::pair<InpaintGenerator, Discriminator> load_inpainter(const Checkpoint& ck);

}  // namespace calcx
