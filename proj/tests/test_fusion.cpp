#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "calcx/error.hpp"
#include "calcx/extract.hpp"
#include "calcx/fusion.hpp"
#include "calcx/image.hpp"
#include "calcx/manifest.hpp"
#include "calcx/nn.hpp"
#include "calcx/phantom.hpp"
#include "calcx/rng.hpp"
#include "calcx/util.hpp"
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

FusionConfig small_config() {
  FusionConfig cfg;
  cfg.input_size = 16;
  cfg.channels = {4, 8};
  cfg.epochs = 2;
  cfg.batch = 4;
  cfg.lr = 1e-3;
  cfg.seed = 3;
  return cfg;
}

// Nodule dataset with refined patches, ready for fusion training.
Manifest fusion_corpus(const std::filesystem::path& dir, int per_class,
                       std::uint64_t seed) {
  DatasetCounts counts;
  counts.n_normal = 0;
  counts.n_calcified = per_class;
  counts.n_noncalcified = per_class;
  PhantomRanges ranges;
  ranges.patch_size = 32;
  ranges.radius_min = 5.0;
  ranges.radius_max = 7.0;
  ranges.center_jitter = 1.0;
  ranges.val_fraction = 0.25;
  const Manifest base = build_dataset(counts, ranges, seed, dir / "data");
  return batch_extract(base, classical_filler(), dir / "extract", 0.2, false, nullptr);
}

}  // namespace

TEST_SUITE("fusion") {

TEST_CASE("label mapping covers both classes and rejects normals") {
  CHECK(class_index_from_label("non_calcified") == kClassNonCalcified);
  CHECK(class_index_from_label("calcified") == kClassCalcified);
  CHECK_THROWS_AS(class_index_from_label("normal"), ValueError);
  CHECK_THROWS_AS(class_index_from_label(""), ValueError);
}

TEST_CASE("config validation rejects bad shapes and rates") {
  CHECK_NOTHROW(validate_fusion_config(small_config()));
  FusionConfig bad = small_config();
  bad.input_size = 4;
  CHECK_THROWS_AS(validate_fusion_config(bad), ValueError);
  bad = small_config();
  bad.channels = {};
  CHECK_THROWS_AS(validate_fusion_config(bad), ValueError);
  bad = small_config();
  bad.lr = 0.0;
  CHECK_THROWS_AS(validate_fusion_config(bad), ValueError);
  bad = small_config();
  bad.epochs = 0;
  CHECK_THROWS_AS(validate_fusion_config(bad), ValueError);
}

TEST_CASE("encoder downsamples to the stated feature dimension") {
  Encoder enc("e", {4, 8, 16}, 5);
  CHECK(enc.feature_dim() == 16);
  nn::Tensor x(1, 32, 32);
  Rng rng(6);
  for (float& v : x.v) v = static_cast<float>(rng.uniform());
  EncoderActs acts;
  const auto features = enc.forward(x, &acts);
  CHECK(features.size() == 16);
  REQUIRE(acts.post.size() == 3);
  CHECK(acts.post.back().h == 4);  // three stride-2 stages: 32 -> 4
  CHECK(acts.post.back().w == 4);
}

TEST_CASE("fused output concatenates both branch features") {
  FusionConfig cfg = small_config();
  const FusionModel model(cfg);
  const Image raw = random_image(16, 16, 7);
  const Image refined = random_image(16, 16, 8);
  const FusionOutput out = model.forward(raw, refined);
  CHECK(out.logits_raw.size() == 2);
  CHECK(out.logits_refined.size() == 2);
  CHECK(out.logits_fused.size() == 2);
  CHECK(out.features.size() == 2 * 8);  // last channel count per branch

  // The first half of the feature vector is the raw branch's pooled feature.
  EncoderActs acts;
  const auto raw_features = model.enc_raw.forward(nn::tensor_from_image(raw), &acts);
  for (std::size_t i = 0; i < raw_features.size(); ++i)
    CHECK(out.features[i] == raw_features[i]);
}

TEST_CASE("identical branch weights make branch outputs symmetric") {
  FusionConfig cfg = small_config();
  FusionModel model(cfg);
  // Copy raw branch parameters into the refined branch.
  auto raw_params = model.enc_raw.params();
  auto ref_params = model.enc_refined.params();
  REQUIRE(raw_params.size() == ref_params.size());
  for (std::size_t i = 0; i < raw_params.size(); ++i) ref_params[i]->w = raw_params[i]->w;

  const Image img = random_image(16, 16, 9);
  const FusionOutput out = model.forward(img, img);
  for (int i = 0; i < 2; ++i)
    CHECK(out.logits_raw[i] == out.logits_refined[i]);
}

TEST_CASE("prediction probabilities are proper") {
  const FusionModel model(small_config());
  const Image raw = random_image(16, 16, 10);
  const Image refined = random_image(16, 16, 11);
  const FusionPrediction p = predict(model, raw, refined);
  for (double v : {p.p_calcified, p.p_raw, p.p_refined}) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  // Zeroed fused head weights push the fused probability to exactly one half.
  FusionModel zeroed(small_config());
  std::fill(zeroed.head.weight.w.begin(), zeroed.head.weight.w.end(), 0.0f);
  std::fill(zeroed.head.bias.w.begin(), zeroed.head.bias.w.end(), 0.0f);
  CHECK(predict(zeroed, raw, refined).p_calcified == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("forward rejects mis-sized patches") {
  const FusionModel model(small_config());
  const Image ok = random_image(16, 16, 12);
  const Image wrong = random_image(20, 20, 13);
  CHECK_THROWS_AS(model.forward(wrong, ok), ShapeError);
  CHECK_THROWS_AS(model.forward(ok, wrong), ShapeError);
}

TEST_CASE("full-model gradients match finite differences") {
  FusionConfig cfg = small_config();
  cfg.joint_gradients = true;  // exercise every gradient path at once
  FusionModel model(cfg);
  const Image raw = random_image(16, 16, 14);
  const Image refined = random_image(16, 16, 15);
  const int target = 1;

  // Composite loss: all three cross-entropies, as in training.
  const auto loss_value = [&] {
    const FusionOutput out = model.forward(raw, refined);
    return nn::softmax_cross_entropy(out.logits_raw, target, nullptr) +
           nn::softmax_cross_entropy(out.logits_refined, target, nullptr) +
           nn::softmax_cross_entropy(out.logits_fused, target, nullptr);
  };

  // Analytic pass, mirroring the training wiring with joint gradients.
  nn::zero_grads(model.params());
  EncoderActs acts_raw, acts_ref;
  const auto f_raw = model.enc_raw.forward(nn::tensor_from_image(raw), &acts_raw);
  const auto f_ref = model.enc_refined.forward(nn::tensor_from_image(refined), &acts_ref);
  std::vector<float> concat = f_raw;
  concat.insert(concat.end(), f_ref.begin(), f_ref.end());
  const auto logits_raw = model.enc_raw.aux.forward(f_raw);
  const auto logits_ref = model.enc_refined.aux.forward(f_ref);
  const auto logits_fused = model.head.forward(concat);

  std::vector<float> g1, g2, g3;
  nn::softmax_cross_entropy(logits_raw, target, &g1);
  nn::softmax_cross_entropy(logits_ref, target, &g2);
  nn::softmax_cross_entropy(logits_fused, target, &g3);
  auto d_raw = model.enc_raw.aux.backward(f_raw, g1);
  auto d_ref = model.enc_refined.aux.backward(f_ref, g2);
  const auto d_concat = model.head.backward(concat, g3);
  for (std::size_t i = 0; i < d_raw.size(); ++i) d_raw[i] += d_concat[i];
  for (std::size_t i = 0; i < d_ref.size(); ++i) d_ref[i] += d_concat[d_raw.size() + i];
  model.enc_raw.backward(acts_raw, d_raw);
  model.enc_refined.backward(acts_ref, d_ref);

  Rng pick(16);
  auto params = model.params();
  for (int trial = 0; trial < 20; ++trial) {
    auto* p = params[pick.below(params.size())];
    const std::size_t i = pick.below(p->count());
    const float keep = p->w[i];
    const double eps = 1e-2;
    p->w[i] = static_cast<float>(keep + eps);
    const double up = loss_value();
    p->w[i] = static_cast<float>(keep - eps);
    const double down = loss_value();
    p->w[i] = keep;
    const double fd = (up - down) / (2.0 * eps);
    const double an = p->g[i];
    CAPTURE(p->name);
    CHECK(std::abs(an - fd) <= 3e-2 * std::max(1.0, std::max(std::abs(an), std::abs(fd))));
  }
}

TEST_CASE("training runs, logs, snapshots the best epoch, and reproduces") {
  const auto dir = temp_dir("fusion_train");
  const Manifest m = fusion_corpus(dir, 8, 41);

  FusionConfig cfg;
  cfg.input_size = 32;
  cfg.channels = {4, 8};
  cfg.epochs = 3;
  cfg.batch = 4;
  cfg.lr = 1e-3;
  cfg.seed = 5;

  const auto log_csv = dir / "train.csv";
  const FusionTrainResult result = train_fusion(m, cfg, log_csv);
  REQUIRE(result.log.size() == 3);
  for (const auto& row : result.log) {
    CHECK(std::isfinite(row.l_ce1));
    CHECK(std::isfinite(row.l_ce2));
    CHECK(std::isfinite(row.l_ce3));
    CHECK(row.val_acc >= 0.0);
    CHECK(row.val_acc <= 1.0);
  }
  CHECK(result.best_epoch >= 1);
  CHECK(result.best_epoch <= 3);
  // The snapshot really is from the best epoch: its logged AUC matches.
  CHECK(result.best_val_auc ==
        doctest::Approx(result.log[result.best_epoch - 1].val_auc));
  for (const auto& row : result.log) CHECK(row.val_auc <= result.best_val_auc + 1e-12);

  const CsvTable log = read_csv(log_csv);
  CHECK(log.schema == "fusion-train-v1");
  CHECK(log.rows.size() == 3);

  const FusionTrainResult again = train_fusion(m, cfg);
  CHECK(again.best_epoch == result.best_epoch);
  REQUIRE(again.log.size() == result.log.size());
  for (std::size_t i = 0; i < again.log.size(); ++i) {
    CHECK(again.log[i].l_ce3 == result.log[i].l_ce3);
    CHECK(again.log[i].val_auc == result.log[i].val_auc);
  }
  // And the snapshotted parameters agree bitwise.
  auto pa = const_cast<FusionTrainResult&>(result).model.params();
  auto pb = const_cast<FusionTrainResult&>(again).model.params();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->w == pb[i]->w);
}

TEST_CASE("stopped gradients: the fused head's backward never reaches the encoders") {
  FusionModel model(small_config());
  const Image raw = random_image(16, 16, 41);
  const Image refined = random_image(16, 16, 42);
  const int target = 0;

  // Pass one: branch losses only.
  auto run_branches = [&] {
    EncoderActs ar, af;
    const auto fr = model.enc_raw.forward(nn::tensor_from_image(raw), &ar);
    const auto ff = model.enc_refined.forward(nn::tensor_from_image(refined), &af);
    std::vector<float> g1, g2;
    nn::softmax_cross_entropy(model.enc_raw.aux.forward(fr), target, &g1);
    nn::softmax_cross_entropy(model.enc_refined.aux.forward(ff), target, &g2);
    const auto dr = model.enc_raw.aux.backward(fr, g1);
    const auto df = model.enc_refined.aux.backward(ff, g2);
    model.enc_raw.backward(ar, dr);
    model.enc_refined.backward(af, df);
    return std::pair{fr, ff};
  };

  nn::zero_grads(model.params());
  run_branches();
  std::vector<std::vector<float>> grads_without;
  for (auto* p : model.enc_raw.params()) grads_without.push_back(p->g);
  for (auto* p : model.enc_refined.params()) grads_without.push_back(p->g);

  // Pass two: identical, plus the fused head loss with its input gradient
  // dropped at the feature boundary (the stop-gradient wiring).
  nn::zero_grads(model.params());
  auto [fr, ff] = run_branches();
  std::vector<float> concat = fr;
  concat.insert(concat.end(), ff.begin(), ff.end());
  std::vector<float> g3;
  nn::softmax_cross_entropy(model.head.forward(concat), target, &g3);
  model.head.backward(concat, g3);  // d_concat intentionally unused

  std::size_t at = 0;
  bool all_equal = true;
  for (auto* p : model.enc_raw.params()) all_equal = all_equal && p->g == grads_without[at++];
  for (auto* p : model.enc_refined.params())
    all_equal = all_equal && p->g == grads_without[at++];
  CHECK(all_equal);  // bitwise: head loss contributed nothing to the encoders

  bool head_has_grad = false;
  for (float g : model.head.weight.g) head_has_grad = head_has_grad || g != 0.0f;
  CHECK(head_has_grad);
}

TEST_CASE("the joint_gradients flag changes what the encoders learn") {
  const auto dir = temp_dir("fusion_stopgrad");
  const Manifest m = fusion_corpus(dir, 6, 43);

  FusionConfig cfg;
  cfg.input_size = 32;
  cfg.channels = {4, 8};
  cfg.epochs = 5;
  cfg.batch = 4;
  cfg.lr = 1e-2;
  cfg.seed = 7;
  cfg.joint_gradients = false;

  const FusionTrainResult a = train_fusion(m, cfg);
  FusionConfig joint = cfg;
  joint.joint_gradients = true;
  const FusionTrainResult c = train_fusion(m, joint);
  auto ea = const_cast<FusionTrainResult&>(a).model.enc_raw.params();
  auto ec = const_cast<FusionTrainResult&>(c).model.enc_raw.params();
  REQUIRE(ea.size() == ec.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < ea.size() && !any_diff; ++i)
    any_diff = ea[i]->w != ec[i]->w;
  CHECK(any_diff);
}

TEST_CASE("a single repeated sample is overfit to zero fused loss") {
  const auto dir = temp_dir("fusion_overfit");
  const Manifest full = fusion_corpus(dir, 4, 47);
  // Keep exactly one calcified and one non-calcified train row; reuse the
  // original val rows for validation plumbing.
  Manifest tiny;
  tiny.root = full.root;
  int kept_cal = 0, kept_non = 0;
  for (const auto& row : full.rows) {
    if (row.split == "train" && row.label == "calcified" && kept_cal++ == 0)
      tiny.rows.push_back(row);
    if (row.split == "train" && row.label == "non_calcified" && kept_non++ == 0)
      tiny.rows.push_back(row);
    if (row.split == "val") tiny.rows.push_back(row);
  }

  FusionConfig cfg;
  cfg.input_size = 32;
  cfg.channels = {4, 8};
  cfg.epochs = 300;
  cfg.batch = 2;
  cfg.lr = 1e-2;
  cfg.seed = 11;
  cfg.joint_gradients = true;  // every loss may shape every weight

  const FusionTrainResult result = train_fusion(tiny, cfg);
  CHECK(result.log.back().l_ce3 < 0.05);
  CHECK(result.log.back().l_ce3 < result.log.front().l_ce3);
}

TEST_CASE("training rejects manifests without refined patches") {
  const auto dir = temp_dir("fusion_norefined");
  DatasetCounts counts;
  counts.n_normal = 0;
  counts.n_calcified = 4;
  counts.n_noncalcified = 4;
  PhantomRanges ranges;
  ranges.patch_size = 32;
  ranges.radius_min = 5.0;
  ranges.radius_max = 7.0;
  ranges.center_jitter = 1.0;
  ranges.val_fraction = 0.25;
  const Manifest m = build_dataset(counts, ranges, 53, dir / "data");

  FusionConfig cfg;
  cfg.input_size = 32;
  cfg.channels = {4};
  cfg.epochs = 1;
  cfg.batch = 2;
  cfg.seed = 1;
  try {
    train_fusion(m, cfg);
    FAIL("expected a missing-refined error");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("produce one with the extract command") !=
          std::string::npos);
  }
}

TEST_CASE("score_manifest returns one row per labelled sample") {
  const auto dir = temp_dir("fusion_score");
  const Manifest m = fusion_corpus(dir, 4, 59);
  const FusionModel model((([&] {
    FusionConfig cfg;
    cfg.input_size = 32;
    cfg.channels = {4, 8};
    cfg.seed = 13;
    return cfg;
  })()));

  const auto all = score_manifest(model, m, "");
  CHECK(all.size() == 8);
  const auto train = score_manifest(model, m, "train");
  const auto val = score_manifest(model, m, "val");
  CHECK(train.size() + val.size() == all.size());
  CHECK(val.size() == 2);
  for (const auto& s : all) {
    CHECK((s.label == 0 || s.label == 1));
    CHECK(s.p_fused >= 0.0);
    CHECK(s.p_fused <= 1.0);
    CHECK_FALSE(s.id.empty());
  }
}

TEST_CASE("imbalance ratio flags skewed class counts") {
  Manifest m;
  ManifestRow r;
  r.split = "train";
  r.label = "calcified";
  r.id = "a";
  m.rows.push_back(r);
  r.id = "b";
  m.rows.push_back(r);
  r.label = "non_calcified";
  r.id = "c";
  m.rows.push_back(r);
  CHECK(imbalance_ratio(m, "train") == doctest::Approx(2.0));
  r.label = "normal";
  r.id = "d";
  m.rows.push_back(r);  // normals do not count
  CHECK(imbalance_ratio(m, "train") == doctest::Approx(2.0));

  Manifest single;
  r.label = "calcified";
  r.split = "train";
  single.rows.push_back(r);
  CHECK(std::isinf(imbalance_ratio(single, "train")));
  CHECK_THROWS_AS(imbalance_ratio(Manifest{}, "train"), ValueError);
}

TEST_CASE("fusion checkpoint round trips through disk") {
  const auto dir = temp_dir("fusion_ckpt");
  FusionConfig cfg;
  cfg.input_size = 32;
  cfg.channels = {4, 8};
  cfg.seed = 17;
  const FusionModel model(cfg);

  const Checkpoint ck = fusion_checkpoint(model, cfg.seed, "digestabc");
  CHECK(ck.kind == "fusion");
  CHECK(ck.seed == 17);
  CHECK(ck.find_section("encoder-raw") != nullptr);
  CHECK(ck.find_section("encoder-refined") != nullptr);
  CHECK(ck.find_section("fusion-head") != nullptr);
  ck.save(dir / "fusion.ckpt");

  const FusionModel back = load_fusion(Checkpoint::load(dir / "fusion.ckpt"));
  CHECK(back.input_size == 32);
  CHECK(back.channels == std::vector<int>{4, 8});
  const Image raw = random_image(32, 32, 18);
  const Image refined = random_image(32, 32, 19);
  const FusionOutput a = model.forward(raw, refined);
  const FusionOutput b = back.forward(raw, refined);
  CHECK(a.logits_fused == b.logits_fused);
  CHECK(a.logits_raw == b.logits_raw);
  CHECK(a.logits_refined == b.logits_refined);

  Checkpoint wrong = ck;
  wrong.kind = "inpainter";
  CHECK_THROWS_AS(load_fusion(wrong), IoError);
}

}  // TEST_SUITE
