#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "capsule/metrics.hpp"

namespace capsule {

namespace {

nlohmann::json number6(const MaybeMetric& v) {
  if (!v) return nullptr;
  return std::round(*v * 1e6) / 1e6;
}

std::string cell6(const MaybeMetric& v) {
  if (!v) return "";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", *v);
  return buf;
}

std::string csv_field(const std::string& text) {
  if (text.find_first_of(",\"\n") == std::string::npos) return text;
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

MaybeMetric macro_specificity(const MetricsReport& report) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& m : report.per_class) {
    if (m.specificity) {
      sum += *m.specificity;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

}  // namespace

nlohmann::json report_to_json(const MetricsReport& report) {
  const std::size_t k = report.confusion.num_classes();
  nlohmann::json confusion = nlohmann::json::array();
  for (std::size_t t = 0; t < k; ++t) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t p = 0; p < k; ++p) row.push_back(report.confusion.at(t, p));
    confusion.push_back(std::move(row));
  }
  nlohmann::json per_class = nlohmann::json::array();
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    const auto& m = report.per_class[c];
    per_class.push_back({
        {"class", report.class_names.at(c)},
        {"support", m.support},
        {"tp", m.tp},
        {"fp", m.fp},
        {"fn", m.fn},
        {"tn", m.tn},
        {"precision", number6(m.precision)},
        {"recall", number6(m.recall)},
        {"sensitivity", number6(m.recall)},
        {"specificity", number6(m.specificity)},
        {"f1", number6(m.f1)},
        {"auc", number6(report.auc_ovr.per_class.at(c))},
    });
  }
  return {
      {"num_samples", report.confusion.total()},
      {"class_names", report.class_names},
      {"confusion", std::move(confusion)},
      {"accuracy", number6(report.accuracy)},
      {"balanced_accuracy", number6(report.balanced_accuracy)},
      {"macro_precision", number6(report.macro_precision)},
      {"macro_recall", number6(report.macro_recall)},
      {"macro_specificity", number6(macro_specificity(report))},
      {"macro_f1", number6(report.macro_f1)},
      {"macro_auc", number6(report.auc_ovr.macro)},
      {"loss", number6(report.loss)},
      {"per_class", std::move(per_class)},
  };
}

std::string report_to_csv(const MetricsReport& report) {
  std::ostringstream out;
  out << "class,support,precision,recall,specificity,f1,auc\n";
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    const auto& m = report.per_class[c];
    out << csv_field(report.class_names.at(c)) << ',' << m.support << ',' << cell6(m.precision) << ','
        << cell6(m.recall) << ',' << cell6(m.specificity) << ',' << cell6(m.f1) << ','
        << cell6(report.auc_ovr.per_class.at(c)) << '\n';
  }
  out << "macro," << report.confusion.total() << ',' << cell6(report.macro_precision) << ','
      << cell6(report.macro_recall) << ',' << cell6(macro_specificity(report)) << ',' << cell6(report.macro_f1)
      << ',' << cell6(report.auc_ovr.macro) << '\n';
  return out.str();
}

void emit_report(const MetricsReport& report, const std::filesystem::path& path, ReportFormat format) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open report for writing: " + path.string());
  if (format == ReportFormat::json) {
    out << report_to_json(report).dump(2) << '\n';
  } else {
    out << report_to_csv(report);
  }
  out.flush();
  if (!out) throw IoError("failed writing report: " + path.string());
}

}  // namespace capsule
