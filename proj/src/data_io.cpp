#include "tnbm/data_io.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace tnbm {

std::vector<Index> snake_order(Index rows, Index cols) {
  std::vector<Index> perm(static_cast<size_t>(rows * cols));
  Index pos = 0;
  for (Index r = 0; r < rows; ++r) {
    if (r % 2 == 0)
      for (Index c = 0; c < cols; ++c) perm[static_cast<size_t>(r * cols + c)] = pos++;
    else
      for (Index c = cols - 1; c >= 0; --c) perm[static_cast<size_t>(r * cols + c)] = pos++;
  }
  return perm;
}

Dataset gen_bas(Index n) {
  if (n < 1) throw DimensionError("gen_bas: grid side must be >= 1");
  std::map<Bitstring, double> patterns;
  const uint64_t limit = uint64_t(1) << n;
  for (uint64_t mask = 0; mask < limit; ++mask) {
    Bitstring bars(static_cast<size_t>(n * n));
    Bitstring stripes(static_cast<size_t>(n * n));
    for (Index r = 0; r < n; ++r)
      for (Index c = 0; c < n; ++c) {
        bars[static_cast<size_t>(r * n + c)] = static_cast<uint8_t>((mask >> c) & 1);
        stripes[static_cast<size_t>(r * n + c)] = static_cast<uint8_t>((mask >> r) & 1);
      }
    patterns[bars] = 1.0;  // all-black/all-white land in both families once
    patterns[stripes] = 1.0;
  }
  return Dataset::from_weighted(patterns);
}

Bitstring mnist_prepare(const GridImage& image, Index out_side, double threshold) {
  if (out_side < 1 || image.rows != image.cols || image.rows % out_side != 0)
    throw DimensionError("mnist_prepare: image side must be a multiple of out_side");
  const Index block = image.rows / out_side;
  const auto order = snake_order(out_side, out_side);
  Bitstring bits(static_cast<size_t>(out_side * out_side));
  for (Index r = 0; r < out_side; ++r)
    for (Index c = 0; c < out_side; ++c) {
      double acc = 0;
      for (Index i = 0; i < block; ++i)
        for (Index j = 0; j < block; ++j) acc += image.at(r * block + i, c * block + j);
      const double pooled = acc / static_cast<double>(block * block);
      bits[static_cast<size_t>(order[static_cast<size_t>(r * out_side + c)])] =
          pooled > threshold ? 1 : 0;
    }
  return bits;
}

namespace {

uint32_t read_be32(std::istream& in, std::size_t& offset) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  if (!in) throw FormatError("idx: truncated header", offset);
  offset += 4;
  return (uint32_t(buf[0]) << 24) | (uint32_t(buf[1]) << 16) | (uint32_t(buf[2]) << 8) |
         uint32_t(buf[3]);
}

void write_be32(std::ostream& out, uint32_t v) {
  unsigned char buf[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(buf), 4);
}

constexpr uint32_t kIdxImageMagic = 0x00000803;

}  // namespace

std::vector<GridImage> load_mnist_idx(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_mnist_idx: cannot open " + path);
  std::size_t offset = 0;
  const uint32_t magic = read_be32(in, offset);
  if (magic != kIdxImageMagic)
    throw FormatError("idx: bad magic " + std::to_string(magic), offset - 4);
  const uint32_t count = read_be32(in, offset);
  const uint32_t rows = read_be32(in, offset);
  const uint32_t cols = read_be32(in, offset);
  std::vector<GridImage> images;
  images.reserve(count);
  const std::size_t pixels = std::size_t(rows) * cols;
  std::vector<unsigned char> buf(pixels);
  for (uint32_t k = 0; k < count; ++k) {
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(pixels));
    const auto got = static_cast<std::size_t>(in.gcount());
    if (got != pixels)
      throw FormatError("idx: payload truncated, expected " + std::to_string(pixels) +
                            " bytes for image " + std::to_string(k) + ", got " +
                            std::to_string(got),
                        offset + got);
    offset += pixels;
    GridImage img;
    img.rows = static_cast<Index>(rows);
    img.cols = static_cast<Index>(cols);
    img.pixels.resize(pixels);
    for (std::size_t i = 0; i < pixels; ++i) img.pixels[i] = buf[i] / 255.0;
    images.push_back(std::move(img));
  }
  return images;
}

void save_mnist_idx(const std::vector<GridImage>& images, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_mnist_idx: cannot open " + path);
  const Index rows = images.empty() ? 0 : images[0].rows;
  const Index cols = images.empty() ? 0 : images[0].cols;
  write_be32(out, kIdxImageMagic);
  write_be32(out, static_cast<uint32_t>(images.size()));
  write_be32(out, static_cast<uint32_t>(rows));
  write_be32(out, static_cast<uint32_t>(cols));
  for (const auto& img : images) {
    if (img.rows != rows || img.cols != cols)
      throw DimensionError("save_mnist_idx: inconsistent image shapes");
    for (double p : img.pixels) {
      const double clamped = std::min(1.0, std::max(0.0, p));
      const auto byte = static_cast<unsigned char>(std::lround(clamped * 255.0));
      out.write(reinterpret_cast<const char*>(&byte), 1);
    }
  }
}

std::vector<ContinuousRecord> load_iris_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_iris_csv: cannot open " + path);
  std::vector<ContinuousRecord> records;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() < 4) throw ParseError("iris: expected at least 4 columns", row, cells.size());
    ContinuousRecord rec;
    bool header = false;
    for (size_t c = 0; c < 4; ++c) {
      try {
        size_t used = 0;
        rec.features.push_back(std::stod(cells[c], &used));
        if (used != cells[c].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        if (row == 1) {
          header = true;  // header line auto-detected
          break;
        }
        throw ParseError("iris: non-numeric cell '" + cells[c] + "'", row, c + 1);
      }
    }
    if (header) continue;
    if (cells.size() > 4) rec.label = cells[4];
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<ContinuousRecord> min_max_scale(const std::vector<ContinuousRecord>& records) {
  if (records.empty()) return {};
  const size_t nf = records[0].features.size();
  std::vector<double> lo(nf, std::numeric_limits<double>::infinity());
  std::vector<double> hi(nf, -std::numeric_limits<double>::infinity());
  for (const auto& r : records) {
    if (r.features.size() != nf) throw DimensionError("min_max_scale: ragged feature counts");
    for (size_t f = 0; f < nf; ++f) {
      lo[f] = std::min(lo[f], r.features[f]);
      hi[f] = std::max(hi[f], r.features[f]);
    }
  }
  std::vector<ContinuousRecord> out = records;
  for (auto& r : out)
    for (size_t f = 0; f < nf; ++f)
      r.features[f] = hi[f] > lo[f] ? (r.features[f] - lo[f]) / (hi[f] - lo[f]) : 0.0;
  return out;
}

}  // namespace tnbm
