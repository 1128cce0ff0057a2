// trapnet: command-line driver for the trapdoor defense and the attack ladder.
//
//   trapnet gen-data|train|attack|evaluate|full-run --config <path>
//           [--attack <name>] [--out <dir>]
//
// Exit codes: 0 ok, 1 other failure, 2 configuration error, 3 I/O or format
// error, 4 training divergence, 5 signature-isolation violation, 6 artifact
// hash mismatch.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "trapnet/config.hpp"
#include "trapnet/error.hpp"
#include "trapnet/pipeline.hpp"

namespace {

enum Exit : int {
  kOk = 0,
  kFailure = 1,
  kConfig = 2,
  kIo = 3,
  kDivergence = 4,
  kIsolation = 5,
  kHashMismatch = 6,
};

int run(const std::string& command, const std::string& config_path,
        const std::vector<std::string>& attacks, const std::string& out) {
  using namespace trapnet;
  const RunConfig cfg = load_config(config_path);
  const RunPaths paths = run_paths(cfg, out);
  for (const auto& a : attacks) {
    if (!is_attack_name(a)) cfg.attack_spec(a);  // throws with the list of valid names
  }
  if (command == "gen-data") {
    cmd_gen_data(cfg, paths, std::cout);
  } else if (command == "train") {
    cmd_train(cfg, paths, std::cout);
  } else if (command == "attack") {
    if (attacks.empty()) throw ConfigError("attack needs --attack <name>");
    for (const auto& a : attacks) cmd_attack(cfg, paths, a, std::cout);
  } else if (command == "evaluate") {
    print_summary(cmd_evaluate(cfg, paths, attacks, std::cout), std::cout);
  } else {
    cmd_full_run(cfg, paths, std::cout);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"trapdoor defense and adaptive attack benchmark", "trapnet"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::vector<std::string> attacks;
  std::string out;
  for (const char* name : {"gen-data", "train", "attack", "evaluate", "full-run"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "TOML run configuration")->required();
    sub->add_option("--out", out, "output directory (overrides [output] dir)");
    if (std::string(name) == "attack" || std::string(name) == "evaluate") {
      sub->add_option("--attack", attacks,
                      "pgd, joint, alternating, alternating-ortho, no-signature or ortho-pair");
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    return run(command, config_path, attacks, out);
  } catch (const trapnet::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const trapnet::IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const trapnet::FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kIo;
  } catch (const trapnet::TrainingError& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return kDivergence;
  } catch (const trapnet::IsolationError& e) {
    std::cerr << "signature isolation: " << e.what() << "\n";
    return kIsolation;
  } catch (const trapnet::HashMismatchError& e) {
    std::cerr << "hash mismatch: " << e.what() << "\n";
    return kHashMismatch;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
}
