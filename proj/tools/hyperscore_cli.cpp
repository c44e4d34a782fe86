#include <exception>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hyperscore/commands.hpp"
#include "hyperscore/errors.hpp"

using namespace hyperscore;

int main(int argc, char** argv) {
  CLI::App app{"hyperscore: condition-aware quality scoring for text-to-3D assets"};
  app.require_subcommand(1, 1);
  std::string config_file;
  app.add_option("-c,--config", config_file, "JSON run configuration")->check(CLI::ExistingFile);

  const std::map<std::string, std::pair<std::string, std::function<int(const RunConfig&)>>> commands = {
      {"synth", {"write a synthetic feature corpus with teacher labels",
                 [](const RunConfig& c) { cmd_synth(c, std::cout); return 0; }}},
      {"mos", {"screen raw annotations and write per-sample MOS labels",
               [](const RunConfig& c) { cmd_mos(c, std::cout); return 0; }}},
      {"train", {"fit a model on the full labelled set", [](const RunConfig& c) { cmd_train(c, std::cout); return 0; }}},
      {"crossval", {"prompt-disjoint k-fold training and evaluation",
                    [](const RunConfig& c) { cmd_crossval(c, std::cout); return 0; }}},
      {"score", {"score samples with a checkpoint", [](const RunConfig& c) { cmd_score(c, std::cout); return 0; }}},
      {"stats", {"category tables and correlation reports",
                 [](const RunConfig& c) { cmd_stats(c, std::cout); return 0; }}},
      {"gradcheck", {"finite-difference check of every analytic gradient",
                     [](const RunConfig& c) { return cmd_gradcheck(c, std::cout); }}},
  };
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, entry] : commands) {
    auto* sub = app.add_subcommand(name, entry.first);
    sub->allow_extras();
    sub->add_option("-c,--config", config_file, "JSON run configuration")->check(CLI::ExistingFile);
    sub->footer("Any config key can be overridden as --section.key value, e.g. --train.epochs 10");
    subs[name] = sub;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    for (const auto& [name, sub] : subs) {
      if (!sub->parsed()) continue;
      const RunConfig cfg = load_run_config(config_file, sub->remaining());
      std::cout << cfg.header_line() << '\n';
      return commands.at(name).second(cfg);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
