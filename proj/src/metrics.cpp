#include "capsule/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

namespace capsule {

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes) : k_(num_classes), counts_(num_classes * num_classes, 0) {
  if (num_classes == 0) throw LabelError("confusion matrix needs at least one class");
}

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t t = 0;
  for (std::size_t c = 0; c < k_; ++c) t += at(c, c);
  return t;
}

std::uint64_t ConfusionMatrix::support(std::size_t truth) const {
  std::uint64_t s = 0;
  for (std::size_t p = 0; p < k_; ++p) s += at(truth, p);
  return s;
}

ConfusionMatrix confusion(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                          std::size_t num_classes) {
  if (truth.size() != predicted.size()) {
    throw LabelError("confusion: " + std::to_string(truth.size()) + " true labels vs " +
                     std::to_string(predicted.size()) + " predictions");
  }
  ConfusionMatrix cm(num_classes);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= num_classes || predicted[i] >= num_classes) {
      throw LabelError("confusion: label out of range at position " + std::to_string(i));
    }
    ++cm.at(truth[i], predicted[i]);
  }
  return cm;
}

namespace {

MaybeMetric ratio(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

MaybeMetric mean_defined(const std::vector<MaybeMetric>& values) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& v : values) {
    if (v) {
      sum += *v;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

}  // namespace

std::vector<ClassMetrics> class_metrics(const ConfusionMatrix& cm) {
  const std::size_t k = cm.num_classes();
  const std::uint64_t total = cm.total();
  std::vector<ClassMetrics> out(k);
  for (std::size_t c = 0; c < k; ++c) {
    ClassMetrics& m = out[c];
    m.tp = cm.at(c, c);
    for (std::size_t o = 0; o < k; ++o) {
      if (o == c) continue;
      m.fp += cm.at(o, c);
      m.fn += cm.at(c, o);
    }
    m.tn = total - m.tp - m.fp - m.fn;
    m.support = m.tp + m.fn;
    m.precision = ratio(m.tp, m.tp + m.fp);
    m.recall = ratio(m.tp, m.tp + m.fn);
    m.specificity = ratio(m.tn, m.tn + m.fp);
    if (m.precision && m.recall) {
      const double p = *m.precision, r = *m.recall;
      m.f1 = (p + r) > 0.0 ? MaybeMetric(2.0 * p * r / (p + r)) : MaybeMetric(0.0);
    }
  }
  return out;
}

double balanced_accuracy(const ConfusionMatrix& cm) {
  std::vector<MaybeMetric> recalls;
  for (const auto& m : class_metrics(cm)) recalls.push_back(m.recall);
  const auto mean = mean_defined(recalls);
  if (!mean) throw UndefinedMetricError("balanced accuracy undefined: no class has support");
  return *mean;
}

MaybeMetric binary_auc(std::span<const double> scores, std::span<const bool> positive) {
  if (scores.size() != positive.size()) throw LabelError("binary_auc: score/label length mismatch");
  const std::size_t n = scores.size();
  std::uint64_t pos = 0;
  for (bool p : positive) pos += p;
  const std::uint64_t neg = n - pos;
  if (pos == 0 || neg == 0) return std::nullopt;

  // Rank-sum form of the Mann-Whitney statistic; tied scores share their
  // mid-rank, which is exactly the half-credit tie rule.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double positive_rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) {
      if (positive[order[t]]) positive_rank_sum += mid_rank;
    }
    i = j + 1;
  }
  const double p = static_cast<double>(pos), q = static_cast<double>(neg);
  return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

AucResult roc_auc_ovr(std::span<const std::size_t> truth, const Tensor64& scores) {
  if (scores.rank() != 2 || scores.dim(0) != truth.size()) {
    throw ShapeError("roc_auc_ovr: scores " + shape_string(scores.shape()) + " vs " +
                     std::to_string(truth.size()) + " labels");
  }
  const std::size_t n = scores.dim(0), k = scores.dim(1);
  for (auto s : scores.data()) {
    if (!std::isfinite(s)) throw NumericError("roc_auc_ovr: non-finite score");
  }
  AucResult result;
  std::vector<double> column(n);
  std::unique_ptr<bool[]> positive(new bool[n]);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      column[i] = scores[i * k + c];
      positive[i] = truth[i] == c;
    }
    result.per_class.push_back(binary_auc(column, std::span<const bool>(positive.get(), n)));
  }
  result.macro = mean_defined(result.per_class);
  return result;
}

AucResult roc_auc_ovr(std::span<const std::size_t> truth, const Tensor& scores) {
  return roc_auc_ovr(truth, scores.cast<double>());
}

MetricsReport build_report(std::span<const std::size_t> truth, const Tensor64& probabilities,
                           std::vector<std::string> class_names, MaybeMetric loss) {
  const std::size_t k = class_names.size();
  if (probabilities.rank() != 2 || probabilities.dim(1) != k) {
    throw ShapeError("build_report: probabilities " + shape_string(probabilities.shape()) + " for " +
                     std::to_string(k) + " classes");
  }
  const auto predicted = argmax_rows(probabilities);
  MetricsReport r{std::move(class_names), confusion(truth, predicted, k), {}, {}, {}, {}, {}, {}, {}, loss};
  r.per_class = class_metrics(r.confusion);
  r.accuracy = ratio(r.confusion.trace(), r.confusion.total());
  std::vector<MaybeMetric> p, rc, f;
  for (const auto& m : r.per_class) {
    p.push_back(m.precision);
    rc.push_back(m.recall);
    f.push_back(m.f1);
  }
  r.balanced_accuracy = mean_defined(rc);
  r.macro_precision = mean_defined(p);
  r.macro_recall = r.balanced_accuracy;
  r.macro_f1 = mean_defined(f);
  r.auc_ovr = roc_auc_ovr(truth, probabilities);
  return r;
}

MetricsReport build_report(std::span<const std::size_t> truth, const Tensor& probabilities,
                           std::vector<std::string> class_names, MaybeMetric loss) {
  return build_report(truth, probabilities.cast<double>(), std::move(class_names), loss);
}

}  // namespace capsule
