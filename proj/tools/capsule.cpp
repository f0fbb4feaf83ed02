// capsule: train, evaluate and run the CapsuleNet GI classifier.
//
//   capsule synth   --data DIR [--n-per-class N] [--image-size S] [--seed S]
//   capsule train   --data DIR [--image-size S] [--epochs E] [--lr LR] ...
//   capsule eval    --data DIR --checkpoint FILE [--out-dir DIR]
//   capsule predict --checkpoint FILE IMAGE...

#include <iostream>

#include "capsule/commands.hpp"
#include "capsule/errors.hpp"

int main(int argc, char** argv) {
  using namespace capsule;
  try {
    const auto parsed = parse_command_line(argc, argv);
    if (!parsed.config) {
      (parsed.exit_code == 0 ? std::cout : std::cerr) << parsed.message;
      return parsed.exit_code;
    }
    const RunConfig& config = *parsed.config;
    switch (config.command) {
      case Command::train: {
        const auto summary = cmd_train(config, std::cerr);
        if (summary.validation.accuracy) std::cerr << "validation accuracy " << *summary.validation.accuracy << '\n';
        break;
      }
      case Command::eval:
        std::cout << report_to_json(cmd_eval(config, std::cerr)).dump(2) << '\n';
        break;
      case Command::predict:
        if (const auto failures = cmd_predict(config, std::cout, std::cerr); failures > 0) {
          std::cerr << failures << " image(s) could not be read\n";
          return 2;
        }
        break;
      case Command::synth:
        cmd_synth(config, std::cerr);
        break;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "fatal: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
