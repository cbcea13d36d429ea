#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace tnbm {

using Bitstring = std::vector<uint8_t>;

/// Weighted set of distinct samples. Duplicates are merged on construction and
/// weights normalized so they sum to one.
class Dataset {
public:
  struct Sample {
    Bitstring value;
    double weight;
  };

  Dataset() = default;

  /// Build from possibly-repeated raw draws; weight of each distinct string is
  /// its relative frequency.
  static Dataset from_draws(const std::vector<Bitstring>& draws) {
    std::map<Bitstring, double> merged;
    for (const auto& b : draws) merged[b] += 1.0;
    return from_weighted(merged, static_cast<double>(draws.size()));
  }

  static Dataset from_weighted(const std::map<Bitstring, double>& weighted,
                               double total = -1.0) {
    Dataset d;
    double sum = 0.0;
    if (total <= 0) {
      for (const auto& [_, w] : weighted) sum += w;
    } else {
      sum = total;
    }
    if (sum <= 0) throw std::invalid_argument("Dataset: total weight must be positive");
    d.samples_.reserve(weighted.size());
    for (const auto& [b, w] : weighted) {
      if (w < 0) throw std::invalid_argument("Dataset: negative weight");
      if (w > 0) d.samples_.push_back({b, w / sum});
    }
    return d;
  }

  size_t n_samples() const { return samples_.size(); }
  const Sample& sample(size_t i) const { return samples_[i]; }
  const std::vector<Sample>& samples() const { return samples_; }

  size_t n_sites() const { return samples_.empty() ? 0 : samples_[0].value.size(); }

  double total_weight() const {
    double s = 0;
    for (const auto& x : samples_) s += x.weight;
    return s;
  }

  /// -sum_x n_x log n_x, the best achievable NLL for a model matching the
  /// empirical distribution exactly.
  double empirical_entropy() const {
    double h = 0;
    for (const auto& x : samples_) h -= x.weight * std::log(x.weight);
    return h;
  }

  /// Draw n samples (with repetition) from this dataset's distribution and
  /// return their empirical dataset.
  Dataset resample(size_t n, uint64_t seed) const {
    std::mt19937_64 rng(seed);
    std::vector<double> cum(samples_.size());
    double acc = 0;
    for (size_t i = 0; i < samples_.size(); ++i) {
      acc += samples_[i].weight;
      cum[i] = acc;
    }
    std::uniform_real_distribution<double> unif(0.0, acc);
    std::vector<Bitstring> draws;
    draws.reserve(n);
    for (size_t i = 0; i < n; ++i) {
      double u = unif(rng);
      size_t k = std::lower_bound(cum.begin(), cum.end(), u) - cum.begin();
      if (k >= samples_.size()) k = samples_.size() - 1;
      draws.push_back(samples_[k].value);
    }
    return from_draws(draws);
  }

private:
  std::vector<Sample> samples_;
};

/// Flat text cache: one "bitstring weight" line per sample.
inline void save_dataset(const Dataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_dataset: cannot open " + path);
  out.precision(17);
  for (const auto& x : d.samples()) {
    for (uint8_t b : x.value) out << char('0' + b);
    out << ' ' << x.weight << '\n';
  }
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_dataset: cannot open " + path);
  std::map<Bitstring, double> weighted;
  std::string bits;
  double w;
  while (in >> bits >> w) {
    Bitstring b(bits.size());
    for (size_t i = 0; i < bits.size(); ++i) {
      if (bits[i] < '0' || bits[i] > '9')
        throw std::runtime_error("load_dataset: bad symbol in " + path);
      b[i] = static_cast<uint8_t>(bits[i] - '0');
    }
    weighted[b] += w;
  }
  return Dataset::from_weighted(weighted);
}

}  // namespace tnbm
