#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "capsule/metrics.hpp"
#include "capsule/model.hpp"

namespace capsule {

enum class Command { train, eval, predict, synth };
enum class ReportSelection { json, csv, both };

const char* to_string(Command command) noexcept;
const char* to_string(ReportSelection selection) noexcept;
ReportSelection report_selection_from_string(const std::string& text);

// Resolved configuration of one CLI invocation. Defaults follow the
// published training recipe: batch 32, 40 epochs, Adam lr 1e-4.
struct RunConfig {
  Command command = Command::train;
  std::filesystem::path data_root;
  std::size_t image_height = 224;
  std::size_t image_width = 224;
  std::size_t batch_size = 32;
  std::size_t epochs = 40;
  double lr = 1e-4;
  std::uint64_t seed = 42;
  PaddingPolicy padding = PaddingPolicy::per_block;
  // train: output checkpoint (default out_dir/model.cvc); eval/predict: input.
  std::filesystem::path checkpoint;
  std::filesystem::path out_dir = ".";
  ReportSelection report_format = ReportSelection::both;
  std::size_t n_per_class = 10;  // synth only
  // eval/predict: whether --image-size was given explicitly.
  bool image_size_explicit = false;
  std::vector<std::filesystem::path> images;  // predict only

  std::filesystem::path checkpoint_path() const;
  std::filesystem::path history_path() const { return out_dir / "history.csv"; }
  std::filesystem::path config_snapshot_path() const { return out_dir / "run-config.json"; }
};

nlohmann::json to_json(const RunConfig& config);

// Result of parsing argv. `config` is empty when the process should stop
// right away (help requested or a usage error); `message` then holds the text
// to print and `exit_code` the status to return.
struct ParseOutcome {
  std::optional<RunConfig> config;
  int exit_code = 0;
  std::string message;
};

// Throws ConfigError for values that parse but make no sense.
ParseOutcome parse_command_line(int argc, const char* const* argv);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
};

inline constexpr const char* kHistoryHeader = "epoch,train_loss,train_acc,val_loss,val_acc";
std::string format_history_row(const EpochRecord& record);

struct TrainSummary {
  std::vector<EpochRecord> history;
  double max_abs_update = 0.0;
  MetricsReport validation;
};

struct PredictLine {
  std::filesystem::path path;
  std::size_t top1 = 0;
  std::vector<double> probabilities;
};

// Each command validates paths before computing, writes run-config.json next
// to its outputs, and throws a capsule::Error subclass on failure. Files are
// written as `<name>.partial` and renamed on success. `log` receives
// human-readable progress (may be a null stream).
TrainSummary cmd_train(const RunConfig& config, std::ostream& log);
MetricsReport cmd_eval(const RunConfig& config, std::ostream& log);
// Writes one line per image to `out`: path,top1,p0..p9 (6 decimals, class
// order from the checkpoint). Decode failures are reported to `log` and
// skipped; returns the number of failures.
std::size_t cmd_predict(const RunConfig& config, std::ostream& out, std::ostream& log,
                        std::vector<PredictLine>* lines = nullptr);
// Materialises synth_dataset as PNGs under data_root/{train,val}/<Class>/,
// 80/20 per class, split by the seed.
void cmd_synth(const RunConfig& config, std::ostream& log);

}  // namespace capsule
