#include "tnbm/experiment.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

using namespace tnbm;

int main(int argc, char** argv) {
  CLI::App app{"tensor-network Born machine trainer"};
  app.require_subcommand(1);

  std::string config_path, out_dir, seeds_csv, compare_out;
  int threads = 1;
  std::vector<std::string> compare_inputs;

  auto* validate = app.add_subcommand("validate", "check a config file and report problems");
  validate->add_option("--config", config_path, "experiment config file")->required();

  auto* run = app.add_subcommand("run", "run a training experiment over its seed list");
  run->add_option("--config", config_path, "experiment config file")->required();
  run->add_option("--out", out_dir, "override output directory");
  run->add_option("--seeds", seeds_csv, "override seed list, comma separated");
  run->add_option("--threads", threads, "seed-level parallelism")->check(CLI::PositiveNumber);

  auto* compare = app.add_subcommand("compare", "align aggregate CSVs and rank final NLL");
  compare->add_option("inputs", compare_inputs, "aggregate CSV files")->required();
  compare->add_option("--out", compare_out, "write the comparison table here (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (validate->parsed()) {
      ConfigFile raw = ConfigFile::parse_file(config_path);
      ExperimentConfig cfg = ExperimentConfig::from_config(raw);
      char hash_hex[32];
      std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                    static_cast<unsigned long long>(cfg.config_hash));
      std::cout << "config ok, hash " << hash_hex << ", " << cfg.seeds.size() << " seed(s)\n";
      return 0;
    }
    if (run->parsed()) {
      ConfigFile raw = ConfigFile::parse_file(config_path);
      ExperimentConfig cfg = ExperimentConfig::from_config(raw);
      if (!out_dir.empty()) cfg.out_dir = out_dir;
      if (!seeds_csv.empty()) {
        cfg.seeds.clear();
        std::stringstream ss(seeds_csv);
        std::string tok;
        while (std::getline(ss, tok, ',')) cfg.seeds.push_back(std::stoull(tok));
        if (cfg.seeds.empty()) throw ConfigError("--seeds: empty list");
      }
      RunSummary summary;
      try {
        summary = run_experiment(cfg, raw, threads);
      } catch (const ConfigError&) {
        throw;
      } catch (const std::exception& e) {
        std::cerr << "runtime failure: " << e.what() << " (partial artifacts kept)\n";
        return 2;
      }
      std::cout << "wrote " << summary.artifacts.size() << " file(s) to " << cfg.out_dir << '\n';
      for (size_t i = 0; i < summary.final_nll.size(); ++i)
        std::cout << "seed " << cfg.seeds[i] << ": final nll "
                  << format_double(summary.final_nll[i]) << '\n';
      std::cout << "wall time " << format_double(summary.wall_seconds) << " s\n";
      return 0;
    }
    if (compare->parsed()) {
      const std::string table = compare_aggregates(compare_inputs);
      if (compare_out.empty()) {
        std::cout << table;
      } else {
        std::ofstream out(compare_out, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + compare_out);
        out << table;
      }
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
