#include "capsule/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <cctype>
#include <set>

#include "capsule/data.hpp"
#include "capsule/optim.hpp"

namespace capsule {

namespace fs = std::filesystem;

const char* to_string(Command command) noexcept {
  switch (command) {
    case Command::train: return "train";
    case Command::eval: return "eval";
    case Command::predict: return "predict";
    case Command::synth: return "synth";
  }
  return "?";
}

const char* to_string(ReportSelection selection) noexcept {
  switch (selection) {
    case ReportSelection::json: return "json";
    case ReportSelection::csv: return "csv";
    case ReportSelection::both: return "both";
  }
  return "?";
}

ReportSelection report_selection_from_string(const std::string& text) {
  if (text == "json") return ReportSelection::json;
  if (text == "csv") return ReportSelection::csv;
  if (text == "both") return ReportSelection::both;
  throw ConfigError("unknown report format '" + text + "' (expected json|csv|both)");
}

fs::path RunConfig::checkpoint_path() const {
  return checkpoint.empty() ? out_dir / "model.cvc" : checkpoint;
}

nlohmann::json to_json(const RunConfig& config) {
  nlohmann::json j = {
      {"command", to_string(config.command)},
      {"data", config.data_root.generic_string()},
      {"image_size", {config.image_height, config.image_width}},
      {"batch_size", config.batch_size},
      {"epochs", config.epochs},
      {"lr", config.lr},
      {"seed", config.seed},
      {"padding_policy", to_string(config.padding)},
      {"checkpoint", config.checkpoint_path().generic_string()},
      {"out_dir", config.out_dir.generic_string()},
      {"report_format", to_string(config.report_format)},
      {"adam", {{"beta1", 0.9}, {"beta2", 0.999}, {"epsilon", 1e-8}}},
      {"seed_streams", {"init", "shuffle", "dropout", "synth", "split"}},
  };
  if (config.command == Command::synth) j["n_per_class"] = config.n_per_class;
  if (config.command == Command::predict) {
    std::vector<std::string> images;
    for (const auto& p : config.images) images.push_back(p.generic_string());
    j["images"] = images;
  }
  return j;
}

std::string format_history_row(const EpochRecord& r) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%zu,%.6f,%.6f,%.6f,%.6f", r.epoch, r.train_loss, r.train_acc, r.val_loss,
                r.val_acc);
  return buf;
}

namespace {

fs::path partial_path(const fs::path& path) {
  return fs::path(path.string() + ".partial");
}

void commit(const fs::path& partial, const fs::path& final_path) {
  std::error_code ec;
  fs::rename(partial, final_path, ec);
  if (ec) throw IoError("cannot move " + partial.string() + " to " + final_path.string() + ": " + ec.message());
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  const auto tmp = partial_path(path);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
    out.flush();
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  commit(tmp, path);
}

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw IoError("cannot create output directory " + dir.string() + (ec ? ": " + ec.message() : ""));
  }
}

void require_positive(std::size_t value, const char* what) {
  if (value == 0) throw ConfigError(std::string(what) + " must be positive");
}

ModelSpec spec_for(const RunConfig& config) {
  require_positive(config.image_height, "image height");
  require_positive(config.image_width, "image width");
  auto spec = ModelSpec::canonical(config.image_height, config.image_width, config.padding);
  spec.validate();
  return spec;
}

void write_config(const RunConfig& config) {
  write_text_atomic(config.config_snapshot_path(), to_json(config).dump(2) + "\n");
}

void report_scan(const DatasetIndex& index, const std::string& label, std::ostream& log) {
  for (const auto& w : index.warnings) log << "warning [" << label << "]: " << w << '\n';
  for (const auto& s : index.skipped) log << "skipped [" << label << "]: " << s.path.string() << " (" << s.reason << ")\n";
}

void emit_reports(const MetricsReport& report, const RunConfig& config) {
  if (config.report_format != ReportSelection::csv) {
    const auto path = config.out_dir / "metrics.json";
    emit_report(report, partial_path(path), ReportFormat::json);
    commit(partial_path(path), path);
  }
  if (config.report_format != ReportSelection::json) {
    const auto path = config.out_dir / "metrics.csv";
    emit_report(report, partial_path(path), ReportFormat::csv);
    commit(partial_path(path), path);
  }
}

}  // namespace

TrainSummary cmd_train(const RunConfig& config, std::ostream& log) {
  const fs::path train_dir = config.data_root / "train";
  const fs::path val_dir = config.data_root / "val";
  if (!fs::is_directory(train_dir) || !fs::is_directory(val_dir)) {
    throw DataError("training data root must contain train/ and val/ directories: " + config.data_root.string());
  }
  require_positive(config.batch_size, "batch size");
  if (!(config.lr >= 0.0) || !std::isfinite(config.lr)) throw ConfigError("learning rate must be finite and >= 0");
  const ModelSpec spec = spec_for(config);

  const auto train_index = scan_dataset(train_dir, Split::train);
  const auto val_index = scan_dataset(val_dir, Split::val);
  report_scan(train_index, "train", log);
  report_scan(val_index, "val", log);
  if (train_index.size() == 0) throw DataError("no training images under " + train_dir.string());
  if (val_index.size() == 0) throw DataError("no validation images under " + val_dir.string());
  {
    std::set<fs::path> train_paths;
    for (const auto& e : train_index.entries) train_paths.insert(fs::weakly_canonical(e.path));
    for (const auto& e : val_index.entries) {
      if (train_paths.count(fs::weakly_canonical(e.path))) {
        throw DataError("image appears in both train and val: " + e.path.string());
      }
    }
  }
  ensure_directory(config.out_dir);
  if (config.checkpoint_path().has_parent_path()) ensure_directory(config.checkpoint_path().parent_path());
  write_config(config);

  const auto train_data = load_images(train_index, spec.height, spec.width);
  const auto val_data = load_images(val_index, spec.height, spec.width);
  log << "train: " << train_data.size() << " images, val: " << val_data.size() << " images, input "
      << spec.height << "x" << spec.width << '\n';

  Model model = Model::build(spec, config.seed);
  log << "model: " << model.parameter_count() << " parameters\n";
  Rng shuffle_rng = Rng::substream(config.seed, "shuffle");
  Rng dropout_rng = Rng::substream(config.seed, "dropout");
  AdamState adam;
  adam.lr = config.lr;

  TrainSummary summary;
  std::ofstream history(config.history_path(), std::ios::binary | std::ios::trunc);
  if (!history) throw IoError("cannot write history " + config.history_path().string());
  history << kHistoryHeader << '\n' << std::flush;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto stats = train_epoch(model, train_data, config.batch_size, adam, shuffle_rng, dropout_rng, epoch);
    const auto val = evaluate(model, val_data, config.batch_size);
    EpochRecord record{epoch, stats.loss, stats.accuracy, val.loss, val.accuracy};
    summary.history.push_back(record);
    summary.max_abs_update = std::max(summary.max_abs_update, stats.max_abs_update);
    history << format_history_row(record) << '\n' << std::flush;
    if (!history) throw IoError("failed writing history " + config.history_path().string());
    log << "epoch " << epoch << "/" << config.epochs << "  " << format_history_row(record) << '\n' << std::flush;
  }

  const auto checkpoint = config.checkpoint_path();
  save_checkpoint(model, partial_path(checkpoint));
  commit(partial_path(checkpoint), checkpoint);

  const auto val = evaluate(model, val_data, config.batch_size);
  summary.validation = build_report(val_data.labels, val.probabilities, model.class_names(), val.loss);
  emit_reports(summary.validation, config);
  return summary;
}

MetricsReport cmd_eval(const RunConfig& config, std::ostream& log) {
  if (config.checkpoint.empty()) throw ConfigError("eval needs --checkpoint");
  Model model = load_checkpoint(config.checkpoint);
  const auto& spec = model.spec();
  if (config.image_size_explicit && (config.image_height != spec.height || config.image_width != spec.width)) {
    throw SpecError("--image-size " + std::to_string(config.image_height) + "x" + std::to_string(config.image_width) +
                    " does not match checkpoint input " + std::to_string(spec.height) + "x" +
                    std::to_string(spec.width));
  }
  require_positive(config.batch_size, "batch size");
  const auto index = scan_dataset(config.data_root);
  report_scan(index, "eval", log);
  if (index.size() == 0) throw DataError("no images to evaluate under " + config.data_root.string());
  ensure_directory(config.out_dir);

  const auto data = load_images(index, spec.height, spec.width);
  const auto result = evaluate(model, data, config.batch_size);
  auto report = build_report(data.labels, result.probabilities, model.class_names(), result.loss);
  write_config(config);
  emit_reports(report, config);
  log << "eval: " << data.size() << " images, accuracy " << result.accuracy << '\n';
  return report;
}

std::size_t cmd_predict(const RunConfig& config, std::ostream& out, std::ostream& log,
                        std::vector<PredictLine>* lines) {
  if (config.checkpoint.empty()) throw ConfigError("predict needs --checkpoint");
  Model model = load_checkpoint(config.checkpoint);
  const auto& spec = model.spec();
  if (config.image_size_explicit && (config.image_height != spec.height || config.image_width != spec.width)) {
    throw SpecError("--image-size does not match checkpoint input " + std::to_string(spec.height) + "x" +
                    std::to_string(spec.width));
  }
  if (config.images.empty()) throw ConfigError("predict needs at least one image path");
  ensure_directory(config.out_dir);

  std::string table = "path,top1";
  for (const auto& name : model.class_names()) table += "," + name;
  table += '\n';

  std::size_t failures = 0;
  for (const auto& path : config.images) {
    Tensor image;
    try {
      image = load_image(path, spec.height, spec.width);
    } catch (const Error& e) {
      log << "error: " << e.what() << '\n';
      ++failures;
      continue;
    }
    const Tensor probs = model.forward(image.reshaped({1, 3, spec.height, spec.width}), Mode::eval);
    PredictLine line{path, argmax_rows(probs).front(), {}};
    std::string text = path.string();
    if (text.find_first_of(",\"") != std::string::npos) {
      std::string quoted = "\"";
      for (char c : text) {
        if (c == '"') quoted += '"';
        quoted += c;
      }
      text = quoted + '"';
    }
    text += "," + model.class_names().at(line.top1);
    for (float p : probs.data()) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), ",%.6f", static_cast<double>(p));
      text += buf;
      line.probabilities.push_back(p);
    }
    out << text << '\n';
    table += text + '\n';
    if (lines) lines->push_back(std::move(line));
  }
  write_text_atomic(config.out_dir / "predictions.csv", table);
  write_config(config);
  return failures;
}

void cmd_synth(const RunConfig& config, std::ostream& log) {
  if (config.data_root.empty()) throw ConfigError("synth needs --data (output directory)");
  if (config.image_height != config.image_width) throw ConfigError("synthetic images are square");
  require_positive(config.image_height, "image size");
  require_positive(config.n_per_class, "n-per-class");

  const auto data = synth_dataset(config.n_per_class, config.image_height, config.seed);
  const std::size_t n = config.n_per_class;
  const std::size_t n_val = n >= 2 ? std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(0.2 * n))) : 0;
  Rng split_rng = Rng::substream(config.seed, "split");

  for (const char* split : {"train", "val"}) {
    for (const auto& name : data.class_names) ensure_directory(config.data_root / split / name);
  }
  std::size_t written = 0;
  for (std::size_t label = 0; label < kNumClasses; ++label) {
    // Fisher-Yates over this class's samples; the last n_val go to val.
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[split_rng.below(i)]);
    std::vector<bool> is_val(n, false);
    for (std::size_t i = n - n_val; i < n; ++i) is_val[order[i]] = true;

    const std::string& name = data.class_names[label];
    std::string slug;
    for (char c : name) slug += c == ' ' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    for (std::size_t i = 0; i < n; ++i) {
      char file[128];
      std::snprintf(file, sizeof(file), "%s_%04zu.png", slug.c_str(), i);
      const fs::path path = config.data_root / (is_val[i] ? "val" : "train") / name / file;
      write_png(data.images[label * n + i], path);
      ++written;
    }
  }
  // The generated tree is the output here, so the snapshot goes there too.
  write_text_atomic(config.data_root / "run-config.json", to_json(config).dump(2) + "\n");
  log << "synth: wrote " << written << " images (" << (n - n_val) * kNumClasses << " train, " << n_val * kNumClasses
      << " val) to " << config.data_root.string() << '\n';
}

}  // namespace capsule
