#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "calcx/checkpoint.hpp"
#include "calcx/image.hpp"
#include "calcx/manifest.hpp"
#include "calcx/nn.hpp"

namespace calcx {

// Class indices used by every classifier artifact in this library.
constexpr int kClassNonCalcified = 0;
constexpr int kClassCalcified = 1;

// Maps a dataset label to its class index; "normal" rows carry no
// calcification ground truth and are rejected.
int class_index_from_label(const std::string& label);

struct FusionConfig {
  int input_size = 128;
  std::vector<int> channels = {8, 16, 32, 64};  // one stride-2 conv stage each
  int epochs = 100;
  int batch = 32;
  double lr = 1e-5;
  // When false (default) the fused head's loss stops at the feature boundary
  // and encoders learn only from their own branch losses.
  bool joint_gradients = false;
  std::uint64_t seed = 1;
};

void validate_fusion_config(const FusionConfig& cfg);

struct EncoderActs {
  nn::Tensor input;
  std::vector<nn::Tensor> pre;   // conv outputs, pre-activation
  std::vector<nn::Tensor> post;  // after ReLU
  std::vector<float> features;   // pooled deep feature
};

// One classification branch: conv stages with stride-2 downsampling, global
// average pooling into a deep feature, and an auxiliary 2-class linear head.
struct Encoder {
  std::vector<nn::Conv2d> convs;
  nn::Linear aux;

  Encoder() = default;
  Encoder(const std::string& tag, const std::vector<int>& channels, std::uint64_t init_seed);

  int feature_dim() const { return convs.empty() ? 0 : convs.back().out_c; }
  std::vector<float> forward(const nn::Tensor& x, EncoderActs* acts = nullptr) const;
  // Accumulates parameter gradients from a gradient on the pooled feature.
  void backward(const EncoderActs& acts, const std::vector<float>& dfeatures);
  std::vector<nn::ParamTensor*> params();
};

struct FusionOutput {
  std::vector<float> logits_raw;
  std::vector<float> logits_refined;
  std::vector<float> logits_fused;
  std::vector<float> features;  // concatenated [raw | refined] deep features
};

// Dual-branch calcification classifier: per-branch encoders with auxiliary
// heads plus a linear fused head over the concatenated deep features.
struct FusionModel {
  int input_size = 0;
  std::vector<int> channels;
  Encoder enc_raw;
  Encoder enc_refined;
  nn::Linear head;

  FusionModel() = default;
  explicit FusionModel(const FusionConfig& cfg);

  FusionOutput forward(const Image& raw, const Image& refined) const;
  std::vector<nn::ParamTensor*> params();
};

struct FusionPrediction {
  double p_calcified = 0.0;  // fused head probability of the calcified class
  double p_raw = 0.0;        // branch-head probabilities, kept for explanation
  double p_refined = 0.0;
};

FusionPrediction predict(const FusionModel& model, const Image& raw, const Image& refined);

struct FusionLogRow {
  int epoch = 0;
  double l_ce1 = 0.0;  // raw branch
  double l_ce2 = 0.0;  // refined branch
  double l_ce3 = 0.0;  // fused head
  double val_acc = 0.0;
  double val_auc = 0.0;
};

struct FusionTrainResult {
  FusionModel model;  // parameters from the best-validation-AUC epoch
  std::vector<FusionLogRow> log;
  int best_epoch = 0;
  double best_val_auc = 0.0;
};

// Trains both encoders and the fused head on the manifest's train split
// (labelled rows only; every row needs a refined patch). Per epoch the mean
// of each loss plus validation accuracy/AUC of the fused head are logged,
// and the epoch with the best validation AUC (earliest on ties) supplies the
// returned parameters. NaN in any loss aborts, naming the loss.
FusionTrainResult train_fusion(const Manifest& manifest, const FusionConfig& cfg,
                               const std::filesystem::path& log_csv = {});

struct ScoredSample {
  std::string id;
  int label = 0;
  double p_raw = 0.0;
  double p_refined = 0.0;
  double p_fused = 0.0;
};

// Scores every labelled row of one split. Pass an empty split to take all
// labelled rows.
std::vector<ScoredSample> score_manifest(const FusionModel& model, const Manifest& manifest,
                                         const std::string& split);

// Largest class count divided by smallest over a split's labelled rows.
// Infinity when a class is absent; the CLI warns above 1.5.
double imbalance_ratio(const Manifest& manifest, const std::string& split = "train");

Checkpoint fusion_checkpoint(const FusionModel& model, std::uint64_t seed,
                             const std::string& manifest_digest);
FusionModel load_fusion(const Checkpoint& ck);

}  // namespace calcx
