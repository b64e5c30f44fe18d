// eccd: generate, add-noise, train, eval, sweep-rho, export-error-map.
// Exit codes: 0 success, 2 usage or configuration error, 3 runtime failure.

#include <CLI11.hpp>

#include <exception>
#include <functional>
#include <iostream>
#include <map>
#include <string>

#include "eccd/experiment.hpp"

namespace {

struct Verb {
  const char* name;
  const char* help;
  std::function<void(const eccd::ExperimentConfig&)> run;
};

int run_cli(int argc, char** argv) {
  CLI::App app{"ECCD noisy-label segmentation experiments"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every verb");

  const Verb verbs[] = {
      {"generate", "Write a clean synthetic dataset to --out",
       eccd::cmd_generate},
      {"add-noise", "Corrupt the labels of --data and write the result to --out",
       eccd::cmd_add_noise},
      {"train", "Train on --data; write <out>/state and <out>/metrics.csv",
       eccd::cmd_train},
      {"eval", "Evaluate --state on --data; write <out>/eval.csv",
       [](const eccd::ExperimentConfig& c) { eccd::cmd_eval(c); }},
      {"sweep-rho", "Train and evaluate once per --rho_list entry; write <out>/sweep.csv",
       eccd::cmd_sweep_rho},
      {"export-error-map", "Write sigmoid(m) of --sample from --state to the PGM --out",
       eccd::cmd_export_error_map},
  };

  std::string config_file;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::App*> subs;
  for (const Verb& v : verbs) {
    CLI::App* sub = app.add_subcommand(v.name, v.help);
    sub->add_option("--config", config_file, "key=value configuration file");
    for (const eccd::ConfigKey& k : eccd::config_keys()) {
      std::string help = k.help;
      if (*k.default_value) help += " [default: " + std::string(k.default_value) + "]";
      sub->add_option(std::string("--") + k.name, values[k.name], help);
    }
    subs[v.name] = sub;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  for (const Verb& v : verbs) {
    CLI::App* sub = subs[v.name];
    if (!sub->parsed()) continue;
    eccd::KeyValueFile overrides;
    for (const eccd::ConfigKey& k : eccd::config_keys())
      if (sub->count(std::string("--") + k.name) > 0) overrides.add(k.name, values[k.name]);
    try {
      const eccd::ExperimentConfig cfg = eccd::ExperimentConfig::load(config_file, overrides);
      v.run(cfg);
    } catch (const eccd::ConfigError& e) {
      std::cerr << "eccd " << v.name << ": " << e.what() << "\n";
      return 2;
    } catch (const std::exception& e) {
      std::cerr << "eccd " << v.name << ": " << e.what() << "\n";
      return 3;
    }
    return 0;
  }
  return 2;
}

}  // namespace

int main(int argc, char** argv) { return run_cli(argc, argv); }
