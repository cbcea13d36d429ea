#pragma once

#include "tnbm/dataset.hpp"
#include "tnbm/dense_tensor.hpp"

#include <string>
#include <vector>

namespace tnbm {

class FormatError : public std::runtime_error {
public:
  FormatError(const std::string& what, std::size_t byte_offset)
      : std::runtime_error(what + " (byte offset " + std::to_string(byte_offset) + ")"),
        offset(byte_offset) {}
  std::size_t offset;
};

class ParseError : public std::runtime_error {
public:
  ParseError(const std::string& what, std::size_t row, std::size_t column)
      : std::runtime_error(what + " (row " + std::to_string(row) + ", column " +
                           std::to_string(column) + ")"),
        row(row), column(column) {}
  std::size_t row, column;
};

struct GridImage {
  Index rows = 0;
  Index cols = 0;
  std::vector<double> pixels;  // row-major, values in [0, 1]

  double at(Index r, Index c) const { return pixels[static_cast<size_t>(r * cols + c)]; }
};

struct ContinuousRecord {
  std::vector<double> features;
  std::string label;  // optional, unused in training
};

/// Boustrophedon chain order: perm[r*cols + c] is the chain position of grid
/// cell (r, c); even rows run left to right, odd rows right to left.
std::vector<Index> snake_order(Index rows, Index cols);

/// All distinct bars (constant columns) and stripes (constant rows) patterns
/// on an n x n grid, flattened row-major, uniform weights.
Dataset gen_bas(Index n);

/// Average-pool to out_side x out_side, binarize at threshold, snake-flatten.
Bitstring mnist_prepare(const GridImage& image, Index out_side, double threshold);

/// IDX image container (big-endian, magic 0x00000803); pixels scaled to [0,1].
std::vector<GridImage> load_mnist_idx(const std::string& path);
void save_mnist_idx(const std::vector<GridImage>& images, const std::string& path);

/// CSV with 4+ numeric columns and an optional trailing label column; a
/// non-numeric first row is treated as a header.
std::vector<ContinuousRecord> load_iris_csv(const std::string& path);

/// Per-feature min-max scaling to [0, 1]; constant features map to 0.
std::vector<ContinuousRecord> min_max_scale(const std::vector<ContinuousRecord>& records);

}  // namespace tnbm
