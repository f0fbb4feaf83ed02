#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "capsule/tensor.hpp"

namespace capsule {

// nullopt marks a 0/0 metric. Undefined values are excluded from macro
// averages rather than counted as zero.
using MaybeMetric = std::optional<double>;

// Rows are true classes, columns predicted classes.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes = 10);

  std::size_t num_classes() const noexcept { return k_; }
  std::uint64_t& at(std::size_t truth, std::size_t predicted) { return counts_.at(truth * k_ + predicted); }
  std::uint64_t at(std::size_t truth, std::size_t predicted) const { return counts_.at(truth * k_ + predicted); }
  std::uint64_t total() const;
  std::uint64_t trace() const;
  std::uint64_t support(std::size_t truth) const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t k_;
  std::vector<std::uint64_t> counts_;
};

// Throws LabelError for mismatched lengths or labels outside [0, num_classes).
ConfusionMatrix confusion(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                          std::size_t num_classes = 10);

struct ClassMetrics {
  MaybeMetric precision;
  MaybeMetric recall;  // = sensitivity
  MaybeMetric specificity;
  MaybeMetric f1;
  std::uint64_t support = 0;
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

std::vector<ClassMetrics> class_metrics(const ConfusionMatrix& cm);

// Mean recall over classes with support. Throws UndefinedMetricError when no
// class has support.
double balanced_accuracy(const ConfusionMatrix& cm);

struct AucResult {
  std::vector<MaybeMetric> per_class;
  MaybeMetric macro;
};

// One-vs-rest Mann-Whitney AUC (ties count one half) per class, using column
// c of `scores` [N,K] as the score for class c.
AucResult roc_auc_ovr(std::span<const std::size_t> truth, const Tensor64& scores);
AucResult roc_auc_ovr(std::span<const std::size_t> truth, const Tensor& scores);
// Binary AUC of `scores` for positives (`positive[i]` true) vs negatives.
MaybeMetric binary_auc(std::span<const double> scores, std::span<const bool> positive);

struct MetricsReport {
  std::vector<std::string> class_names;
  ConfusionMatrix confusion;
  std::vector<ClassMetrics> per_class;
  MaybeMetric accuracy;
  MaybeMetric balanced_accuracy;
  MaybeMetric macro_precision;
  MaybeMetric macro_recall;
  MaybeMetric macro_f1;
  AucResult auc_ovr;
  MaybeMetric loss;  // mean cross-entropy when the caller supplies it
};

MetricsReport build_report(std::span<const std::size_t> truth, const Tensor64& probabilities,
                           std::vector<std::string> class_names, MaybeMetric loss = std::nullopt);
MetricsReport build_report(std::span<const std::size_t> truth, const Tensor& probabilities,
                           std::vector<std::string> class_names, MaybeMetric loss = std::nullopt);

enum class ReportFormat { json, csv };

// JSON: full nested report. CSV: header
// `class,support,precision,recall,specificity,f1,auc`, one row per class and
// a final `macro` summary row. Numbers carry 6 decimals; undefined values are
// null (JSON) or empty cells (CSV). Throws IoError on write failure.
nlohmann::json report_to_json(const MetricsReport& report);
std::string report_to_csv(const MetricsReport& report);
void emit_report(const MetricsReport& report, const std::filesystem::path& path, ReportFormat format);

}  // namespace capsule
