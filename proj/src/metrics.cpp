#include "calcx/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "calcx/error.hpp"
#include "calcx/image.hpp"
#include "calcx/image_io.hpp"
#include "calcx/util.hpp"

namespace calcx {

EvalReport evaluate(const std::vector<std::pair<double, int>>& scores) {
  if (scores.empty()) throw ValueError("evaluate: no scores given");
  EvalReport r;
  for (const auto& [score, label] : scores) {
    if (label != 0 && label != 1) throw ValueError("evaluate: labels must be 0 or 1");
    if (std::isnan(score)) throw ValueError("evaluate: NaN score");
    const bool predicted = score >= 0.5;
    if (label == 1) {
      ++r.n_pos;
      predicted ? ++r.tp : ++r.fn;
    } else {
      ++r.n_neg;
      predicted ? ++r.fp : ++r.tn;
    }
  }
  const double n = static_cast<double>(scores.size());
  r.accuracy = static_cast<double>(r.tp + r.tn) / n;

  std::vector<std::pair<double, int>> sorted = scores;
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });

  // Sweep all distinct scores from high to low; each group moves the
  // cumulative (fp, tp) counts for the rule "score >= threshold is positive".
  const double inf = std::numeric_limits<double>::infinity();
  long ctp = 0, cfp = 0;
  r.best_accuracy = static_cast<double>(r.n_neg) / n;  // threshold above every score
  r.best_threshold = inf;
  const bool both = r.n_pos > 0 && r.n_neg > 0;
  if (both) r.roc.push_back({inf, 0.0, 0.0});
  double auc = 0.0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    const double v = sorted[i].first;
    while (i < sorted.size() && sorted[i].first == v) {
      sorted[i].second == 1 ? ++ctp : ++cfp;
      ++i;
    }
    const double acc = static_cast<double>(ctp + (r.n_neg - cfp)) / n;
    if (acc > r.best_accuracy) {
      r.best_accuracy = acc;
      r.best_threshold = v;
    }
    if (both) {
      const RocPoint prev = r.roc.back();
      const RocPoint cur{v, static_cast<double>(cfp) / r.n_neg,
                         static_cast<double>(ctp) / r.n_pos};
      auc += (cur.fpr - prev.fpr) * (cur.tpr + prev.tpr) * 0.5;
      r.roc.push_back(cur);
    }
  }
  r.auc = both ? auc : std::numeric_limits<double>::quiet_NaN();
  return r;
}

namespace {

void draw_line(Image& img, double x0, double y0, double x1, double y1, float value,
               int dash = 0) {
  const double len = std::max(std::abs(x1 - x0), std::abs(y1 - y0));
  const int steps = std::max(1, static_cast<int>(std::ceil(len * 2.0)));
  for (int s = 0; s <= steps; ++s) {
    if (dash > 0 && (s / dash) % 2 == 1) continue;
    const double t = static_cast<double>(s) / steps;
    const int x = static_cast<int>(std::lround(x0 + t * (x1 - x0)));
    const int y = static_cast<int>(std::lround(y0 + t * (y1 - y0)));
    if (x >= 0 && x < img.width() && y >= 0 && y < img.height()) img.at(x, y) = value;
  }
}

constexpr int kPlotMargin = 30;
constexpr int kPlotArea = 360;

double px(double fpr) { return kPlotMargin + fpr * (kPlotArea - 1); }
double py(double tpr) { return kPlotMargin + (1.0 - tpr) * (kPlotArea - 1); }

Image render_roc_plot(const std::vector<std::pair<std::string, const EvalReport*>>& models) {
  const int size = kPlotArea + 2 * kPlotMargin;
  Image img(size, size, 1.0f);

  for (int g = 1; g < 4; ++g) {
    const double f = g / 4.0;
    draw_line(img, px(f), py(0), px(f), py(1), 0.85f);
    draw_line(img, px(0), py(f), px(1), py(f), 0.85f);
  }
  draw_line(img, px(0), py(0), px(1), py(1), 0.7f, 3);  // chance diagonal
  draw_line(img, px(0), py(0), px(1), py(0), 0.0f);
  draw_line(img, px(0), py(0), px(0), py(1), 0.0f);
  draw_line(img, px(1), py(0), px(1), py(1), 0.0f);
  draw_line(img, px(0), py(1), px(1), py(1), 0.0f);

  const float shades[4] = {0.0f, 0.35f, 0.55f, 0.75f};
  for (std::size_t m = 0; m < models.size(); ++m) {
    const EvalReport& r = *models[m].second;
    const float shade = shades[std::min(m, std::size_t{3})];
    for (std::size_t i = 1; i < r.roc.size(); ++i)
      draw_line(img, px(r.roc[i - 1].fpr), py(r.roc[i - 1].tpr), px(r.roc[i].fpr),
                py(r.roc[i].tpr), shade);
  }
  return img;
}

void write_roc_csv(const EvalReport& r, const std::filesystem::path& file) {
  std::vector<std::vector<std::string>> rows;
  for (const RocPoint& p : r.roc)
    rows.push_back({format_number(p.threshold), format_number(p.fpr), format_number(p.tpr)});
  write_csv(file, "roc-v1", {"threshold", "fpr", "tpr"}, rows);
}

}  // namespace

void emit_report(const EvalReport& report, const std::filesystem::path& out_dir,
                 const std::string& model_name) {
  ensure_dir(out_dir);
  const std::string prefix = model_name.empty() ? "" : model_name + "_";

  std::vector<std::vector<std::string>> metric_rows = {
      {"accuracy", format_number(report.accuracy)},
      {"best_accuracy", format_number(report.best_accuracy)},
      {"best_threshold", format_number(report.best_threshold)},
      {"auc", format_number(report.auc)},
      {"n_pos", std::to_string(report.n_pos)},
      {"n_neg", std::to_string(report.n_neg)},
  };
  write_csv(out_dir / (prefix + "metrics.csv"), "metrics-v1", {"metric", "value"},
            metric_rows);

  write_roc_csv(report, out_dir / (prefix + "roc.csv"));

  std::vector<std::vector<std::string>> confusion_rows = {
      {"positive", "positive", std::to_string(report.tp)},
      {"positive", "negative", std::to_string(report.fn)},
      {"negative", "positive", std::to_string(report.fp)},
      {"negative", "negative", std::to_string(report.tn)},
  };
  write_csv(out_dir / (prefix + "confusion.csv"), "confusion-v1",
            {"actual", "predicted", "count"}, confusion_rows);

  save_png(render_roc_plot({{model_name, &report}}), out_dir / (prefix + "roc.png"), 8);
}

void emit_comparison(const std::vector<std::pair<std::string, const EvalReport*>>& models,
                     const std::filesystem::path& out_dir) {
  if (models.empty()) throw ValueError("emit_comparison: no models given");
  ensure_dir(out_dir);
  save_png(render_roc_plot(models), out_dir / "roc_comparison.png", 8);

  const float shades[4] = {0.0f, 0.35f, 0.55f, 0.75f};
  std::vector<std::vector<std::string>> rows;
  for (std::size_t m = 0; m < models.size(); ++m)
    rows.push_back({models[m].first,
                    format_number(shades[std::min(m, std::size_t{3})]),
                    format_number(models[m].second->auc)});
  write_csv(out_dir / "roc_comparison.csv", "roc-comparison-v1",
            {"model", "gray_level", "auc"}, rows);
}

}  // namespace calcx
