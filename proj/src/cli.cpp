#include <regex>
#include <sstream>

#include <CLI11.hpp>

#include "capsule/commands.hpp"

namespace capsule {

namespace {

// "N" or "HxW".
bool parse_image_size(const std::string& text, RunConfig& config) {
  static const std::regex pattern(R"((\d{1,6})(?:[xX](\d{1,6}))?)");
  std::smatch m;
  if (!std::regex_match(text, m, pattern)) return false;
  config.image_height = std::stoul(m[1].str());
  config.image_width = m[2].matched ? std::stoul(m[2].str()) : config.image_height;
  return config.image_height > 0 && config.image_width > 0;
}

struct Flags {
  std::string image_size;
  std::string report_format = "both";
  std::string padding = "per-block";
};

void add_common(CLI::App* cmd, RunConfig& config, Flags& flags) {
  cmd->add_option("--image-size", flags.image_size, "input size N or HxW (default 224; synth 64)");
  cmd->add_option("--batch-size", config.batch_size, "mini-batch size")->capture_default_str();
  cmd->add_option("--seed", config.seed, "root seed for init, shuffle, dropout and synth")->capture_default_str();
  cmd->add_option("--out-dir", config.out_dir, "directory for reports and run-config.json")->capture_default_str();
  cmd->add_option("--report-format", flags.report_format, "json, csv or both")
      ->check(CLI::IsMember({"json", "csv", "both"}))
      ->capture_default_str();
}

}  // namespace

ParseOutcome parse_command_line(int argc, const char* const* argv) {
  CLI::App app{"CapsuleNet: 10-class capsule endoscopy image classifier", "capsule"};
  app.require_subcommand(1);

  RunConfig config;
  Flags flags;

  auto* train = app.add_subcommand("train", "train from DATA/train and DATA/val");
  train->add_option("--data", config.data_root, "dataset root with train/ and val/")->required();
  add_common(train, config, flags);
  train->add_option("--epochs", config.epochs, "number of epochs")->capture_default_str();
  train->add_option("--lr", config.lr, "Adam learning rate")->capture_default_str();
  train->add_option("--checkpoint", config.checkpoint, "output checkpoint (default OUT_DIR/model.cvc)");
  train->add_option("--padding", flags.padding, "per-block, first-layer-only or all-same")
      ->check(CLI::IsMember({"per-block", "first-layer-only", "all-same"}))
      ->capture_default_str();

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a labelled dataset");
  eval->add_option("--data", config.data_root, "class-directory tree or path,label CSV")->required();
  eval->add_option("--checkpoint", config.checkpoint, "checkpoint to load")->required();
  add_common(eval, config, flags);

  auto* predict = app.add_subcommand("predict", "print class probabilities per image");
  predict->add_option("--checkpoint", config.checkpoint, "checkpoint to load")->required();
  predict->add_option("images", config.images, "image files (PNG or PPM)")->required();
  add_common(predict, config, flags);

  auto* synth = app.add_subcommand("synth", "write a synthetic dataset");
  synth->add_option("--data", config.data_root, "output root")->required();
  synth->add_option("--n-per-class", config.n_per_class, "images per class")->capture_default_str();
  add_common(synth, config, flags);

  ParseOutcome outcome;
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream out, err;
    outcome.exit_code = app.exit(e, out, err);
    outcome.message = out.str() + err.str();
    return outcome;
  }

  if (train->parsed()) config.command = Command::train;
  if (eval->parsed()) config.command = Command::eval;
  if (predict->parsed()) config.command = Command::predict;
  if (synth->parsed()) config.command = Command::synth;

  if (!flags.image_size.empty()) {
    if (!parse_image_size(flags.image_size, config)) {
      throw ConfigError("bad --image-size '" + flags.image_size + "' (expected N or HxW)");
    }
    config.image_size_explicit = true;
  } else if (config.command == Command::synth) {
    config.image_height = config.image_width = 64;
  }
  config.report_format = report_selection_from_string(flags.report_format);
  config.padding = padding_policy_from_string(flags.padding);
  outcome.config = std::move(config);
  return outcome;
}

}  // namespace capsule
