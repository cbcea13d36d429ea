#include "tnbm/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

namespace tnbm {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char delim) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, delim)) out.push_back(trim(item));
  return out;
}

}  // namespace

uint64_t fnv1a_hash(const std::string& text) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

ConfigFile ConfigFile::parse_string(const std::string& text) {
  ConfigFile cf;
  std::stringstream in(text);
  std::string line, section;
  std::ostringstream canon;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("config line " + std::to_string(lineno) +
                                                ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      canon << '[' << section << "]\n";
      cf.sections[section];
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    cf.sections[section][key] = value;
    canon << key << '=' << value << '\n';
  }
  cf.canonical_text = canon.str();
  return cf;
}

ConfigFile ConfigFile::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_string(ss.str());
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
  auto s = sections.find(section);
  return s != sections.end() && s->second.count(key) > 0;
}

std::string ConfigFile::get(const std::string& section, const std::string& key,
                            const std::string& fallback) const {
  auto s = sections.find(section);
  if (s == sections.end()) return fallback;
  auto k = s->second.find(key);
  return k == s->second.end() ? fallback : k->second;
}

double ConfigFile::get_num(const std::string& section, const std::string& key,
                           double fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = get(section, key, "");
  try {
    size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key " + section + "." + key + ": not a number: '" + v + "'");
  }
}

bool ConfigFile::get_bool(const std::string& section, const std::string& key,
                          bool fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = get(section, key, "");
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key " + section + "." + key + ": not a boolean: '" + v + "'");
}

namespace {

const std::map<std::string, std::vector<std::string>> kKnownKeys = {
    {"dataset", {"kind", "grid", "path", "threshold", "pool_side", "scale"}},
    {"model", {"n_sites", "site_dim", "bond_dim"}},
    {"embedding", {"raw_dim", "reduced_dim", "init", "iso_eta", "iso_steps_per_visit", "iso_steps_later"}},
    {"optimizer", {"kind", "eta", "eps0", "decay", "floor", "eps_b", "env_scaling"}},
    {"solver", {"kind", "inner_tol", "max_inner_iters", "step_cap"}},
    {"run", {"n_sweeps", "n_train_samples", "sample_seed", "seeds", "timing"}},
    {"output", {"dir", "name", "save_models"}},
};

}  // namespace

ExperimentConfig ExperimentConfig::from_config(const ConfigFile& file) {
  std::vector<std::string> problems;
  for (const auto& [section, keys] : file.sections) {
    auto known = kKnownKeys.find(section);
    if (known == kKnownKeys.end()) {
      problems.push_back("unknown section [" + section + "]");
      continue;
    }
    for (const auto& [key, _] : keys)
      if (std::find(known->second.begin(), known->second.end(), key) == known->second.end())
        problems.push_back("unknown key " + section + "." + key);
  }

  ExperimentConfig cfg;
  cfg.config_hash = fnv1a_hash(file.canonical_text);

  const std::string dk = file.get("dataset", "kind", "bas");
  if (dk == "bas")
    cfg.dataset.kind = DatasetSpec::Kind::bas;
  else if (dk == "mnist")
    cfg.dataset.kind = DatasetSpec::Kind::mnist;
  else if (dk == "iris")
    cfg.dataset.kind = DatasetSpec::Kind::iris;
  else
    problems.push_back("dataset.kind: unknown value '" + dk + "'");
  cfg.dataset.grid = static_cast<Index>(file.get_num("dataset", "grid", 4));
  cfg.dataset.path = file.get("dataset", "path", "");
  cfg.dataset.threshold = file.get_num("dataset", "threshold", 0.5);
  cfg.dataset.pool_side = static_cast<Index>(file.get_num("dataset", "pool_side", 7));
  cfg.dataset.scale = file.get_bool("dataset", "scale", true);

  cfg.n_sites = static_cast<Index>(file.get_num("model", "n_sites", 0));
  cfg.site_dim = static_cast<Index>(file.get_num("model", "site_dim", 2));
  cfg.bond_dim = static_cast<Index>(file.get_num("model", "bond_dim", 4));

  cfg.embedding.raw_dim = static_cast<Index>(file.get_num("embedding", "raw_dim", 25));
  cfg.embedding.reduced_dim = static_cast<Index>(file.get_num("embedding", "reduced_dim", 3));
  const std::string init = file.get("embedding", "init", "random");
  if (init == "pca")
    cfg.embedding.init = EmbeddingLayer<double>::Init::pca;
  else if (init == "random")
    cfg.embedding.init = EmbeddingLayer<double>::Init::random;
  else if (init == "identity")
    cfg.embedding.init = EmbeddingLayer<double>::Init::identity;
  else
    problems.push_back("embedding.init: unknown value '" + init + "'");
  cfg.embedding.iso_eta = file.get_num("embedding", "iso_eta", 0.05);
  cfg.embedding.iso_steps_per_visit =
      static_cast<int>(file.get_num("embedding", "iso_steps_per_visit", 25));
  cfg.embedding.iso_steps_later =
      static_cast<int>(file.get_num("embedding", "iso_steps_later", 0));

  const std::string ok = file.get("optimizer", "kind", "reg_newton_smooth");
  if (ok == "steepest_descent")
    cfg.optimizer.variant = OptimizerKind::Variant::steepest_descent;
  else if (ok == "newton")
    cfg.optimizer.variant = OptimizerKind::Variant::newton;
  else if (ok == "reg_newton_smooth")
    cfg.optimizer.variant = OptimizerKind::Variant::reg_newton_smooth;
  else if (ok == "reg_newton_bias")
    cfg.optimizer.variant = OptimizerKind::Variant::reg_newton_bias;
  else
    problems.push_back("optimizer.kind: unknown value '" + ok + "'");
  cfg.optimizer.eta = file.get_num("optimizer", "eta", 0.05);
  cfg.optimizer.bias_shift = file.get_num("optimizer", "eps_b", 0.01);
  cfg.schedule.eps0 = file.get_num("optimizer", "eps0", 0.025);
  cfg.schedule.decay = file.get_num("optimizer", "decay", 0.5);
  cfg.schedule.floor = file.get_num("optimizer", "floor", 1e-8);
  const std::string scaling = file.get("optimizer", "env_scaling", "unit");
  if (scaling == "unit")
    cfg.env_scaling = EnvScaling::unit;
  else if (scaling == "raw")
    cfg.env_scaling = EnvScaling::raw;
  else
    problems.push_back("optimizer.env_scaling: unknown value '" + scaling + "'");

  const std::string sk = file.get("solver", "kind", "dense");
  if (sk == "dense")
    cfg.solver.solver = NewtonConfig::Solver::dense;
  else if (sk == "iterative")
    cfg.solver.solver = NewtonConfig::Solver::iterative;
  else
    problems.push_back("solver.kind: unknown value '" + sk + "'");
  cfg.solver.inner_tol = file.get_num("solver", "inner_tol", 1e-8);
  cfg.solver.max_inner_iters = static_cast<int>(file.get_num("solver", "max_inner_iters", 200));
  if (file.has("solver", "step_cap") && !file.get("solver", "step_cap", "").empty())
    cfg.solver.step_cap = file.get_num("solver", "step_cap", 1.0);

  cfg.n_sweeps = static_cast<int>(file.get_num("run", "n_sweeps", 5));
  cfg.n_train_samples = static_cast<size_t>(file.get_num("run", "n_train_samples", 0));
  cfg.sample_seed = static_cast<uint64_t>(file.get_num("run", "sample_seed", 1234));
  if (file.has("run", "seeds")) {
    cfg.seeds.clear();
    for (const auto& tok : split(file.get("run", "seeds", ""), ','))
      if (!tok.empty()) {
        try {
          cfg.seeds.push_back(std::stoull(tok));
        } catch (const std::exception&) {
          problems.push_back("run.seeds: not an integer: '" + tok + "'");
        }
      }
  }
  cfg.timing = file.get_bool("run", "timing", false);
  cfg.save_models = file.get_bool("output", "save_models", false);
  cfg.out_dir = file.get("output", "dir", "out");
  cfg.name = file.get("output", "name", "run");

  // semantic checks
  if (cfg.seeds.empty()) problems.push_back("run.seeds: at least one seed required");
  if (cfg.n_sweeps < 1) problems.push_back("run.n_sweeps: must be >= 1");
  if (cfg.bond_dim < 1) problems.push_back("model.bond_dim: must be >= 1");
  if (cfg.schedule.eps0 < 0) problems.push_back("optimizer.eps0: must be >= 0");
  if (cfg.schedule.decay <= 0 || cfg.schedule.decay > 1)
    problems.push_back("optimizer.decay: must be in (0, 1]");
  if (cfg.dataset.kind != DatasetSpec::Kind::bas) {
    if (cfg.dataset.path.empty())
      problems.push_back("dataset.path: required for kind '" + dk + "'");
    else if (!std::filesystem::exists(cfg.dataset.path))
      problems.push_back("dataset.path: file does not exist: " + cfg.dataset.path);
  }

  if (!problems.empty()) {
    std::string msg = "invalid config:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw ConfigError(msg);
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  return from_config(ConfigFile::parse_file(path));
}

void write_trace_csv(const LossTrace& trace, const std::string& path) {
  std::ofstream out(path, std::ios::binary);  // binary: keep '\n' exact for byte determinism
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "iteration,sweep,site,nll,reg_loss,epsilon,inner_iters,seconds\n";
  for (const auto& r : trace)
    out << r.iteration << ',' << r.sweep << ',' << r.site << ',' << format_double(r.nll) << ','
        << format_double(r.reg_loss) << ',' << format_double(r.epsilon) << ',' << r.inner_iters
        << ',' << format_double(r.seconds) << '\n';
}

namespace {

Dataset build_discrete_dataset(const ExperimentConfig& cfg) {
  switch (cfg.dataset.kind) {
    case DatasetSpec::Kind::bas: {
      Dataset full = gen_bas(cfg.dataset.grid);
      if (cfg.n_train_samples > 0) return full.resample(cfg.n_train_samples, cfg.sample_seed);
      return full;
    }
    case DatasetSpec::Kind::mnist: {
      auto images = load_mnist_idx(cfg.dataset.path);
      // scramble labels together: uniform random subset without replacement
      std::vector<size_t> order(images.size());
      for (size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::mt19937_64 rng(cfg.sample_seed);
      std::shuffle(order.begin(), order.end(), rng);
      const size_t take = cfg.n_train_samples > 0
                              ? std::min(cfg.n_train_samples, images.size())
                              : images.size();
      std::vector<Bitstring> draws;
      draws.reserve(take);
      for (size_t i = 0; i < take; ++i)
        draws.push_back(
            mnist_prepare(images[order[i]], cfg.dataset.pool_side, cfg.dataset.threshold));
      return Dataset::from_draws(draws);
    }
    default:
      throw ConfigError("build_discrete_dataset: not a discrete dataset");
  }
}

struct SeedOutcome {
  LossTrace trace;
  Mps<double> model;
  double final_nll = std::numeric_limits<double>::quiet_NaN();
};

SeedOutcome run_one_seed(const ExperimentConfig& cfg, const Dataset* discrete,
                         const std::vector<ContinuousRecord>* records, uint64_t seed) {
  TrainOptions opts;
  opts.optimizer = cfg.optimizer;
  opts.schedule = cfg.schedule;
  opts.n_sweeps = cfg.n_sweeps;
  opts.newton = cfg.solver;
  opts.env_scaling = cfg.env_scaling;
  opts.timing = cfg.timing;

  SeedOutcome out;
  if (records) {
    const Index n_sites = static_cast<Index>((*records)[0].features.size());
    Mps<double> mps = random_init(n_sites, cfg.embedding.reduced_dim, cfg.bond_dim, seed);
    auto layer = EmbeddingLayer<double>::make(n_sites, cfg.embedding.raw_dim,
                                              cfg.embedding.reduced_dim, cfg.embedding.init, seed,
                                              *records);
    ContinuousTrainOptions copts{opts, cfg.embedding.iso_eta, cfg.embedding.iso_steps_per_visit,
                                 cfg.embedding.iso_steps_later};
    auto result = train_continuous(std::move(mps), std::move(layer), *records, copts);
    out.trace = std::move(result.trace);
    out.model = std::move(result.mps);
  } else {
    const Index n_sites = cfg.n_sites > 0 ? cfg.n_sites
                                          : static_cast<Index>(discrete->n_sites());
    Mps<double> mps = random_init(n_sites, cfg.site_dim, cfg.bond_dim, seed);
    EncodedSamples<double> enc = encode<double>(*discrete, cfg.site_dim);
    auto result = train(std::move(mps), enc, opts);
    out.trace = std::move(result.trace);
    out.model = std::move(result.mps);
  }
  if (!out.trace.empty()) out.final_nll = out.trace.back().nll;
  return out;
}

}  // namespace

RunSummary run_experiment(const ExperimentConfig& cfg, const ConfigFile& raw, int threads) {
  namespace fs = std::filesystem;
  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(cfg.out_dir);

  Dataset discrete;
  std::vector<ContinuousRecord> records;
  const bool continuous = cfg.dataset.kind == DatasetSpec::Kind::iris;
  if (continuous) {
    records = load_iris_csv(cfg.dataset.path);
    if (records.empty()) throw ConfigError("iris dataset is empty: " + cfg.dataset.path);
    if (cfg.dataset.scale) records = min_max_scale(records);
    if (cfg.n_train_samples > 0 && cfg.n_train_samples < records.size()) {
      std::mt19937_64 rng(cfg.sample_seed);
      std::shuffle(records.begin(), records.end(), rng);
      records.resize(cfg.n_train_samples);
    }
  } else {
    discrete = build_discrete_dataset(cfg);
  }

  std::vector<SeedOutcome> outcomes(cfg.seeds.size());
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto work = [&](size_t lo, size_t hi) {
    for (size_t i = lo; i < hi; ++i) {
      try {
        outcomes[i] = run_one_seed(cfg, continuous ? nullptr : &discrete,
                                   continuous ? &records : nullptr, cfg.seeds[i]);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  const int nthreads = std::max(1, std::min<int>(threads, static_cast<int>(cfg.seeds.size())));
  if (nthreads == 1) {
    work(0, cfg.seeds.size());
  } else {
    std::vector<std::thread> pool;
    const size_t per = (cfg.seeds.size() + nthreads - 1) / nthreads;
    for (int t = 0; t < nthreads; ++t) {
      const size_t lo = t * per, hi = std::min(cfg.seeds.size(), lo + per);
      if (lo < hi) pool.emplace_back(work, lo, hi);
    }
    for (auto& th : pool) th.join();
  }

  RunSummary summary;
  summary.config_hash = cfg.config_hash;

  // write whatever completed, then report failure if any seed crashed
  for (size_t i = 0; i < cfg.seeds.size(); ++i) {
    if (outcomes[i].trace.empty()) continue;
    const std::string path =
        (fs::path(cfg.out_dir) / (cfg.name + "_seed" + std::to_string(cfg.seeds[i]) + ".csv"))
            .string();
    write_trace_csv(outcomes[i].trace, path);
    summary.artifacts.push_back(path);
    if (cfg.save_models) {
      const std::string mpath =
          (fs::path(cfg.out_dir) / (cfg.name + "_seed" + std::to_string(cfg.seeds[i]) + ".mps"))
              .string();
      save_mps(outcomes[i].model, mpath);
      summary.artifacts.push_back(mpath);
    }
  }
  if (first_error) std::rethrow_exception(first_error);

  for (auto& o : outcomes) {
    summary.final_nll.push_back(o.final_nll);
    summary.traces.push_back(std::move(o.trace));
  }

  const size_t n_iters = summary.traces[0].size();
  for (const auto& tr : summary.traces)
    if (tr.size() != n_iters) throw std::runtime_error("internal: ragged traces across seeds");
  summary.mean_nll.resize(n_iters);
  summary.std_nll.resize(n_iters);
  const double n_seeds = static_cast<double>(cfg.seeds.size());
  for (size_t it = 0; it < n_iters; ++it) {
    double mean = 0;
    for (const auto& tr : summary.traces) mean += tr[it].nll;
    mean /= n_seeds;
    double var = 0;
    for (const auto& tr : summary.traces) var += (tr[it].nll - mean) * (tr[it].nll - mean);
    summary.mean_nll[it] = mean;
    summary.std_nll[it] = n_seeds > 1 ? std::sqrt(var / (n_seeds - 1)) : 0.0;
  }

  const std::string agg_path =
      (fs::path(cfg.out_dir) / (cfg.name + "_aggregate.csv")).string();
  {
    std::ofstream out(agg_path, std::ios::binary);
    out << "iteration,sweep,site,mean_nll,std_nll\n";
    for (size_t it = 0; it < n_iters; ++it) {
      const auto& r = summary.traces[0][it];
      out << r.iteration << ',' << r.sweep << ',' << r.site << ','
          << format_double(summary.mean_nll[it]) << ',' << format_double(summary.std_nll[it])
          << '\n';
    }
  }
  summary.artifacts.push_back(agg_path);

  const std::string manifest_path =
      (fs::path(cfg.out_dir) / (cfg.name + "_manifest.txt")).string();
  {
    std::ofstream out(manifest_path, std::ios::binary);
    char hash_hex[32];
    std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                  static_cast<unsigned long long>(cfg.config_hash));
    out << "config_hash=" << hash_hex << '\n';
    out << "trace_format=1\nmps_format=" << 1 << "\nseeds=";
    for (size_t i = 0; i < cfg.seeds.size(); ++i) out << (i ? "," : "") << cfg.seeds[i];
    out << "\n--- config ---\n" << raw.canonical_text;
  }
  summary.artifacts.push_back(manifest_path);

  summary.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return summary;
}

namespace {

struct AggregateCsv {
  std::vector<int64_t> iterations;
  std::vector<double> mean, stdev;
};

AggregateCsv read_aggregate(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  AggregateCsv agg;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty aggregate csv: " + path);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() < 5) throw std::runtime_error("bad aggregate row in " + path);
    agg.iterations.push_back(std::stoll(cells[0]));
    agg.mean.push_back(std::stod(cells[3]));
    agg.stdev.push_back(std::stod(cells[4]));
  }
  return agg;
}

}  // namespace

std::string compare_aggregates(const std::vector<std::string>& aggregate_csvs) {
  if (aggregate_csvs.empty()) throw std::runtime_error("compare: no inputs");
  std::vector<AggregateCsv> aggs;
  for (const auto& p : aggregate_csvs) aggs.push_back(read_aggregate(p));
  for (size_t i = 1; i < aggs.size(); ++i)
    if (aggs[i].iterations != aggs[0].iterations)
      throw std::runtime_error("compare: iteration axes differ between " + aggregate_csvs[0] +
                               " and " + aggregate_csvs[i]);

  std::ostringstream out;
  out << "iteration";
  for (const auto& p : aggregate_csvs) {
    const std::string stem = std::filesystem::path(p).stem().string();
    out << ',' << stem << "_mean," << stem << "_std";
  }
  out << '\n';
  for (size_t it = 0; it < aggs[0].iterations.size(); ++it) {
    out << aggs[0].iterations[it];
    for (const auto& a : aggs)
      out << ',' << format_double(a.mean[it]) << ',' << format_double(a.stdev[it]);
    out << '\n';
  }
  out << "# final ranking (lower is better):\n";
  std::vector<size_t> order(aggs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return aggs[a].mean.back() < aggs[b].mean.back(); });
  for (size_t rank = 0; rank < order.size(); ++rank)
    out << "# " << (rank + 1) << ". "
        << std::filesystem::path(aggregate_csvs[order[rank]]).stem().string() << "  final mean "
        << format_double(aggs[order[rank]].mean.back()) << '\n';
  return out.str();
}

}  // namespace tnbm
