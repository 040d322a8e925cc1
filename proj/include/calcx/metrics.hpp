#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace calcx {

struct RocPoint {
  double threshold;  // score cutoff: predicted positive when score >= threshold
  double fpr;
  double tpr;
};

struct EvalReport {
  double accuracy = 0.0;       // at the fixed 0.5 threshold
  double best_accuracy = 0.0;  // best achievable over all score cutoffs
  double best_threshold = 0.5;
  double auc = 0.0;  // NaN when only one class is present
  std::vector<RocPoint> roc;
  long tp = 0, fp = 0, tn = 0, fn = 0;
  long n_pos = 0, n_neg = 0;
};

// scores: (probability of the positive class, label 0/1). Accuracy uses the
// fixed 0.5 cutoff (score >= 0.5 predicts positive). The ROC sweeps every
// distinct score, starts at (0,0) and ends at (1,1); AUC is the trapezoidal
// area, which under tie grouping equals the pair-ranking statistic with half
// credit for ties. Single-class inputs yield accuracy but a NaN AUC and an
// empty curve.
EvalReport evaluate(const std::vector<std::pair<double, int>>& scores);

// Writes metrics.csv, roc.csv, confusion.csv and a rendered roc.png into
// out_dir. A non-empty model name is used as a file prefix ("fused_...").
void emit_report(const EvalReport& report, const std::filesystem::path& out_dir,
                 const std::string& model_name = "");

// One roc csv per named model plus a combined plot (roc_comparison.png) with
// one gray level per model, darkest first.
void emit_comparison(const std::vector<std::pair<std::string, const EvalReport*>>& models,
                     const std::filesystem::path& out_dir);

}  // namespace calcx
