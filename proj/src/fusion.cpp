#include "calcx/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "calcx/error.hpp"
#include "calcx/image_io.hpp"
#include "calcx/metrics.hpp"
#include "calcx/rng.hpp"
#include "calcx/util.hpp"

namespace calcx {

int class_index_from_label(const std::string& label) {
  if (label == "non_calcified") return kClassNonCalcified;
  if (label == "calcified") return kClassCalcified;
  throw ValueError("label '" + label + "' has no class index");
}

void validate_fusion_config(const FusionConfig& cfg) {
  if (cfg.input_size < 8) throw ValueError("fusion: input_size must be at least 8");
  if (cfg.channels.empty()) throw ValueError("fusion: empty channel schedule");
  for (int c : cfg.channels)
    if (c <= 0) throw ValueError("fusion: channel counts must be positive");
  if (cfg.epochs <= 0) throw ValueError("fusion: epochs must be positive");
  if (cfg.batch <= 0) throw ValueError("fusion: batch must be positive");
  if (!(cfg.lr > 0.0)) throw ValueError("fusion: learning rate must be positive");
}

// Leaky activations keep both branches trainable: low-contrast patches are
// near-constant, so with a hard ReLU a conv channel is alive or dead globally
// and an unlucky init can silence a whole encoder for good.
constexpr float kEncoderLeakySlope = 0.2f;

Encoder::Encoder(const std::string& tag, const std::vector<int>& channels,
                 std::uint64_t init_seed) {
  if (channels.empty()) throw ValueError("encoder: empty channel schedule");
  Rng rng(init_seed);
  int in_c = 1;
  for (std::size_t i = 0; i < channels.size(); ++i) {
    convs.emplace_back(tag + ".conv" + std::to_string(i), in_c, channels[i], 3, 2, 1);
    convs.back().init(rng);
    in_c = channels[i];
  }
  aux = nn::Linear(tag + ".aux", in_c, 2);
  aux.init(rng);
}

std::vector<float> Encoder::forward(const nn::Tensor& x, EncoderActs* acts) const {
  if (acts) {
    acts->input = x;
    acts->pre.clear();
    acts->post.clear();
  }
  nn::Tensor cur = x;
  for (const nn::Conv2d& conv : convs) {
    nn::Tensor pre = conv.forward(cur);
    cur = nn::leaky_relu(pre, kEncoderLeakySlope);
    if (acts) {
      acts->pre.push_back(std::move(pre));
      acts->post.push_back(cur);
    }
  }
  std::vector<float> feat = nn::global_avg_pool(cur);
  if (acts) acts->features = feat;
  return feat;
}

void Encoder::backward(const EncoderActs& acts, const std::vector<float>& dfeatures) {
  const nn::Tensor& last = acts.post.back();
  nn::Tensor g = nn::global_avg_pool_backward(last.c, last.h, last.w, dfeatures);
  for (std::size_t i = convs.size(); i-- > 0;) {
    g = nn::leaky_relu_backward(acts.pre[i], g, kEncoderLeakySlope);
    const nn::Tensor& in = i == 0 ? acts.input : acts.post[i - 1];
    g = convs[i].backward(in, g);
  }
}

std::vector<nn::ParamTensor*> Encoder::params() {
  std::vector<nn::ParamTensor*> ps;
  for (nn::Conv2d& c : convs)
    for (nn::ParamTensor* p : c.params()) ps.push_back(p);
  for (nn::ParamTensor* p : aux.params()) ps.push_back(p);
  return ps;
}

FusionModel::FusionModel(const FusionConfig& cfg) {
  validate_fusion_config(cfg);
  input_size = cfg.input_size;
  channels = cfg.channels;
  enc_raw = Encoder("raw", channels, derive_seed(cfg.seed, 21));
  enc_refined = Encoder("refined", channels, derive_seed(cfg.seed, 22));
  head = nn::Linear("fused.head", 2 * enc_raw.feature_dim(), 2);
  Rng rng(derive_seed(cfg.seed, 23));
  head.init(rng);
}

namespace {

nn::Tensor input_tensor(const Image& img, int input_size, const char* which) {
  if (img.width() != input_size || img.height() != input_size)
    throw ShapeError(std::string(which) + " patch is " + std::to_string(img.width()) + "x" +
                     std::to_string(img.height()) + ", model expects " +
                     std::to_string(input_size) + "x" + std::to_string(input_size));
  return nn::tensor_from_image(img);
}

std::vector<float> concat_features(const std::vector<float>& a, const std::vector<float>& b) {
  std::vector<float> f;
  f.reserve(a.size() + b.size());
  f.insert(f.end(), a.begin(), a.end());
  f.insert(f.end(), b.begin(), b.end());
  return f;
}

}  // namespace

FusionOutput FusionModel::forward(const Image& raw, const Image& refined) const {
  const nn::Tensor xr = input_tensor(raw, input_size, "raw");
  const nn::Tensor xf = input_tensor(refined, input_size, "refined");
  FusionOutput out;
  const std::vector<float> fr = enc_raw.forward(xr);
  const std::vector<float> ff = enc_refined.forward(xf);
  out.logits_raw = enc_raw.aux.forward(fr);
  out.logits_refined = enc_refined.aux.forward(ff);
  out.features = concat_features(fr, ff);
  out.logits_fused = head.forward(out.features);
  return out;
}

std::vector<nn::ParamTensor*> FusionModel::params() {
  std::vector<nn::ParamTensor*> ps = enc_raw.params();
  for (nn::ParamTensor* p : enc_refined.params()) ps.push_back(p);
  for (nn::ParamTensor* p : head.params()) ps.push_back(p);
  return ps;
}

FusionPrediction predict(const FusionModel& model, const Image& raw, const Image& refined) {
  const FusionOutput out = model.forward(raw, refined);
  FusionPrediction p;
  p.p_calcified = nn::softmax(out.logits_fused)[kClassCalcified];
  p.p_raw = nn::softmax(out.logits_raw)[kClassCalcified];
  p.p_refined = nn::softmax(out.logits_refined)[kClassCalcified];
  return p;
}

namespace {

struct Sample {
  std::string id;
  int label = 0;
  nn::Tensor raw;
  nn::Tensor refined;
};

Image load_patch(const Manifest& manifest, const std::string& rel, int input_size) {
  Image img = load_image(manifest.resolve(rel));
  if (img.width() != input_size || img.height() != input_size)
    img = resize_to(img, input_size, input_size);
  return img;
}

std::vector<Sample> load_split(const Manifest& manifest, const std::string& split,
                               int input_size) {
  std::vector<Sample> out;
  for (const ManifestRow& row : manifest.rows) {
    if (row.label == "normal") continue;
    if (!split.empty() && row.split != split) continue;
    if (row.refined.empty())
      throw IoError("row '" + row.id +
                    "' has no refined patch; produce one with the extract command");
    Sample s;
    s.id = row.id;
    s.label = class_index_from_label(row.label);
    s.raw = nn::tensor_from_image(load_patch(manifest, row.image, input_size));
    s.refined = nn::tensor_from_image(load_patch(manifest, row.refined, input_size));
    out.push_back(std::move(s));
  }
  return out;
}

[[noreturn]] void nan_abort(const char* loss, int epoch) {
  throw NumericError("fusion training diverged: " + std::string(loss) + " is NaN at epoch " +
                     std::to_string(epoch));
}

}  // namespace

FusionTrainResult train_fusion(const Manifest& manifest, const FusionConfig& cfg,
                               const std::filesystem::path& log_csv) {
  validate_fusion_config(cfg);
  std::vector<Sample> train = load_split(manifest, "train", cfg.input_size);
  std::vector<Sample> val = load_split(manifest, "val", cfg.input_size);
  if (train.empty()) throw ValueError("fusion training: no labelled train rows in manifest");
  if (val.empty()) throw ValueError("fusion training: no labelled val rows in manifest");

  FusionTrainResult result;
  FusionModel model(cfg);
  const int feat = model.enc_raw.feature_dim();

  nn::Adam opt;
  opt.lr = cfg.lr;
  opt.init(model.params());

  const auto evaluate_val = [&](double* acc, double* auc) {
    std::vector<std::pair<double, int>> scored;
    scored.reserve(val.size());
    for (const Sample& s : val) {
      const std::vector<float> fr = model.enc_raw.forward(s.raw);
      const std::vector<float> ff = model.enc_refined.forward(s.refined);
      const std::vector<float> logits = model.head.forward(concat_features(fr, ff));
      scored.emplace_back(nn::softmax(logits)[kClassCalcified], s.label);
    }
    const EvalReport rep = evaluate(scored);
    *acc = rep.accuracy;
    *auc = rep.auc;
  };

  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  double best_auc = -std::numeric_limits<double>::infinity();
  bool snapshotted = false;
  FusionModel best = model;
  int best_epoch = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng shuffle(derive_seed(cfg.seed, 100 + static_cast<std::uint64_t>(epoch)));
    for (std::size_t j = order.size(); j > 1; --j)
      std::swap(order[j - 1], order[shuffle.below(j)]);

    double sum1 = 0.0, sum2 = 0.0, sum3 = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch);
      nn::zero_grads(model.params());
      for (std::size_t b = start; b < stop; ++b) {
        const Sample& s = train[order[b]];
        EncoderActs acts_raw, acts_ref;
        const std::vector<float> fr = model.enc_raw.forward(s.raw, &acts_raw);
        const std::vector<float> ff = model.enc_refined.forward(s.refined, &acts_ref);
        const std::vector<float> logits_raw = model.enc_raw.aux.forward(fr);
        const std::vector<float> logits_ref = model.enc_refined.aux.forward(ff);
        const std::vector<float> concat = concat_features(fr, ff);
        const std::vector<float> logits_fused = model.head.forward(concat);

        std::vector<float> d1, d2, d3;
        const double l1 = nn::softmax_cross_entropy(logits_raw, s.label, &d1);
        const double l2 = nn::softmax_cross_entropy(logits_ref, s.label, &d2);
        const double l3 = nn::softmax_cross_entropy(logits_fused, s.label, &d3);
        if (std::isnan(l1)) nan_abort("l_ce1", epoch);
        if (std::isnan(l2)) nan_abort("l_ce2", epoch);
        if (std::isnan(l3)) nan_abort("l_ce3", epoch);
        sum1 += l1;
        sum2 += l2;
        sum3 += l3;

        std::vector<float> dfr = model.enc_raw.aux.backward(fr, d1);
        std::vector<float> dff = model.enc_refined.aux.backward(ff, d2);
        const std::vector<float> dconcat = model.head.backward(concat, d3);
        if (cfg.joint_gradients) {
          for (int i = 0; i < feat; ++i) {
            dfr[i] += dconcat[i];
            dff[i] += dconcat[feat + i];
          }
        }
        model.enc_raw.backward(acts_raw, dfr);
        model.enc_refined.backward(acts_ref, dff);
      }
      opt.step(model.params(), 1.0 / static_cast<double>(stop - start));
    }

    FusionLogRow row;
    row.epoch = epoch;
    const double n = static_cast<double>(train.size());
    row.l_ce1 = sum1 / n;
    row.l_ce2 = sum2 / n;
    row.l_ce3 = sum3 / n;
    evaluate_val(&row.val_acc, &row.val_auc);
    result.log.push_back(row);

    if (row.val_auc > best_auc) {
      best_auc = row.val_auc;
      best = model;
      best_epoch = epoch;
      snapshotted = true;
    }
  }

  if (!snapshotted) {  // degenerate validation split, keep the final state
    best = model;
    best_epoch = cfg.epochs;
    best_auc = std::numeric_limits<double>::quiet_NaN();
  }
  result.model = std::move(best);
  result.best_epoch = best_epoch;
  result.best_val_auc = best_auc;

  if (!log_csv.empty()) {
    std::vector<std::vector<std::string>> rows;
    for (const FusionLogRow& r : result.log)
      rows.push_back({std::to_string(r.epoch), format_number(r.l_ce1), format_number(r.l_ce2),
                      format_number(r.l_ce3), format_number(r.val_acc),
                      format_number(r.val_auc)});
    write_csv(log_csv, "fusion-train-v1",
              {"epoch", "l_ce1", "l_ce2", "l_ce3", "val_acc", "val_auc"}, rows);
  }
  return result;
}

std::vector<ScoredSample> score_manifest(const FusionModel& model, const Manifest& manifest,
                                         const std::string& split) {
  std::vector<ScoredSample> out;
  for (const ManifestRow& row : manifest.rows) {
    if (row.label == "normal") continue;
    if (!split.empty() && row.split != split) continue;
    if (row.refined.empty())
      throw IoError("row '" + row.id +
                    "' has no refined patch; produce one with the extract command");
    const Image raw = load_patch(manifest, row.image, model.input_size);
    const Image refined = load_patch(manifest, row.refined, model.input_size);
    const FusionPrediction p = predict(model, raw, refined);
    out.push_back({row.id, class_index_from_label(row.label), p.p_raw, p.p_refined,
                   p.p_calcified});
  }
  return out;
}

double imbalance_ratio(const Manifest& manifest, const std::string& split) {
  long counts[2] = {0, 0};
  for (const ManifestRow& row : manifest.rows) {
    if (row.label == "normal" || row.split != split) continue;
    ++counts[class_index_from_label(row.label)];
  }
  if (counts[0] + counts[1] == 0)
    throw ValueError("imbalance_ratio: no labelled rows in split '" + split + "'");
  const long lo = std::min(counts[0], counts[1]);
  const long hi = std::max(counts[0], counts[1]);
  if (lo == 0) return std::numeric_limits<double>::infinity();
  return static_cast<double>(hi) / static_cast<double>(lo);
}

Checkpoint fusion_checkpoint(const FusionModel& model, std::uint64_t seed,
                             const std::string& manifest_digest) {
  Checkpoint ck;
  ck.kind = "fusion";
  ck.seed = seed;
  ck.manifest_digest = manifest_digest;
  ck.schedule.push_back(model.input_size);
  ck.schedule.push_back(static_cast<int>(model.channels.size()));
  for (int c : model.channels) ck.schedule.push_back(c);
  FusionModel& m = const_cast<FusionModel&>(model);
  ck.sections.push_back(section_from_params("encoder-raw", m.enc_raw.params()));
  ck.sections.push_back(section_from_params("encoder-refined", m.enc_refined.params()));
  ck.sections.push_back(section_from_params("fusion-head", m.head.params()));
  return ck;
}

FusionModel load_fusion(const Checkpoint& ck) {
  if (ck.kind != "fusion")
    throw IoError("checkpoint kind '" + ck.kind + "' is not a fusion model");
  std::size_t at = 0;
  const auto take = [&]() -> int {
    if (at >= ck.schedule.size()) throw IoError("fusion checkpoint: truncated schedule");
    return ck.schedule[at++];
  };
  FusionConfig cfg;
  cfg.input_size = take();
  const int n = take();
  if (n <= 0 || n > 64) throw IoError("fusion checkpoint: bad channel count");
  cfg.channels.clear();
  for (int i = 0; i < n; ++i) cfg.channels.push_back(take());
  cfg.seed = ck.seed;
  FusionModel model(cfg);
  const char* names[3] = {"encoder-raw", "encoder-refined", "fusion-head"};
  std::vector<nn::ParamTensor*> groups[3] = {model.enc_raw.params(),
                                             model.enc_refined.params(), model.head.params()};
  for (int i = 0; i < 3; ++i) {
    const ParamSection* sec = ck.find_section(names[i]);
    if (!sec)
      throw IoError(std::string("fusion checkpoint: missing section ") + names[i]);
    params_from_section(*sec, groups[i]);
  }
  return model;
}

}  // namespace calcx
