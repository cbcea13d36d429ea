#pragma once

#include "tnbm/cvbm.hpp"
#include "tnbm/sweep.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tnbm {

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Parsed "[section] key = value" file. Section and key lookups are the only
/// interface; unknown keys are rejected during validation.
struct ConfigFile {
  std::map<std::string, std::map<std::string, std::string>> sections;
  std::string canonical_text;  // normalized section/key/value lines, hash input

  static ConfigFile parse_file(const std::string& path);
  static ConfigFile parse_string(const std::string& text);

  bool has(const std::string& section, const std::string& key) const;
  std::string get(const std::string& section, const std::string& key,
                  const std::string& fallback) const;
  double get_num(const std::string& section, const std::string& key, double fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
};

uint64_t fnv1a_hash(const std::string& text);

struct DatasetSpec {
  enum class Kind { bas, mnist, iris };
  Kind kind = Kind::bas;
  Index grid = 4;           // bas side
  std::string path;         // mnist / iris source file
  double threshold = 0.5;   // mnist binarization
  Index pool_side = 7;      // mnist pooled side
  bool scale = true;        // iris min-max scaling
};

struct EmbeddingSpec {
  Index raw_dim = 25;
  Index reduced_dim = 3;
  EmbeddingLayer<double>::Init init = EmbeddingLayer<double>::Init::random;
  double iso_eta = 0.05;
  int iso_steps_per_visit = 25;  // during the first sweep
  int iso_steps_later = 0;       // per visit afterwards
};

struct ExperimentConfig {
  DatasetSpec dataset;
  Index n_sites = 0;  // 0: derived from the dataset
  Index site_dim = 2;
  Index bond_dim = 4;
  EmbeddingSpec embedding;
  OptimizerKind optimizer;
  RegularizationSchedule schedule;
  NewtonConfig solver;
  EnvScaling env_scaling = EnvScaling::unit;
  int n_sweeps = 5;
  size_t n_train_samples = 0;  // 0: full dataset
  uint64_t sample_seed = 1234;
  std::vector<uint64_t> seeds = {0, 1, 2, 3, 4};
  bool timing = false;
  bool save_models = false;
  std::string out_dir = "out";
  std::string name = "run";
  uint64_t config_hash = 0;

  /// Parse + validate; throws ConfigError listing every offending key.
  static ExperimentConfig load(const std::string& path);
  static ExperimentConfig from_config(const ConfigFile& file);
};

struct RunSummary {
  std::vector<double> final_nll;        // per seed
  std::vector<double> mean_nll;         // per iteration, across seeds
  std::vector<double> std_nll;          // per iteration, across seeds (ddof=1)
  std::vector<LossTrace> traces;        // per seed
  double wall_seconds = 0.0;
  uint64_t config_hash = 0;
  std::vector<std::string> artifacts;   // files written
};

/// Execute all seeds (optionally thread-parallel), write per-seed trace CSVs,
/// the aggregate CSV and the reproducibility manifest.
RunSummary run_experiment(const ExperimentConfig& cfg, const ConfigFile& raw, int threads = 1);

/// Aligned mean/std comparison across aggregate CSVs plus a final-NLL
/// ranking; mismatched iteration axes are an error.
std::string compare_aggregates(const std::vector<std::string>& aggregate_csvs);

/// Locale-independent shortest-round-trip float formatting used in all CSVs.
std::string format_double(double v);

void write_trace_csv(const LossTrace& trace, const std::string& path);

}  // namespace tnbm
