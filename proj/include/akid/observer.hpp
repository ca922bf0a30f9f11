#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "akid/brain.hpp"

namespace akid {

// --- distribution summaries ---

// Percentile levels of a distribution record, lowest first.
inline constexpr std::array<double, 9> kPercentileLevels{0, 7, 16, 31, 50, 69, 84, 93, 100};

// Linear interpolation between closest ranks of the sorted flattened tensor:
// level p reads position p/100 * (n - 1).
std::array<double, 9> percentiles(const Tensor& t);

struct ScalarRecord {
  std::uint64_t clock = 0;
  std::string tag;
  double value = 0.0;
};

struct DistRecord {
  std::uint64_t clock = 0;
  std::string tag;
  std::array<double, 9> values{};
};

// Single-writer summary sink. Records are kept in memory and, with a
// directory, appended to scalars.csv and distributions.csv. Clocks must
// strictly increase per tag.
class SummarySink {
 public:
  SummarySink() = default;
  explicit SummarySink(const std::string& dir);

  void record_scalar(std::uint64_t clock, const std::string& tag, double value);
  void record_distribution(std::uint64_t clock, const std::string& tag, const Tensor& t);
  void flush();

  const std::vector<ScalarRecord>& scalars() const { return scalars_; }
  const std::vector<DistRecord>& distributions() const { return dists_; }
  std::vector<ScalarRecord> scalars(const std::string& tag) const;
  const std::string& dir() const { return dir_; }

 private:
  void check_clock(std::uint64_t clock, const std::string& tag);

  std::string dir_;
  std::ofstream scalar_csv_;
  std::ofstream dist_csv_;
  std::vector<ScalarRecord> scalars_;
  std::vector<DistRecord> dists_;
  std::map<std::string, std::uint64_t> last_clock_;
};

// --- tiled images ---

struct TileLayout {
  std::size_t rows = 1;
  std::size_t cols = 1;
  std::size_t pad = 1;
};

// cols = ceil(sqrt(n)), rows = ceil(n / cols).
TileLayout layout_for(std::size_t n, std::size_t pad = 1);

struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel
};

// Tiles [h,w,c] tensors (c is 1 or 3) into one image. Each tile is min-max
// normalized to [0,255] on its own; a tile with zero range becomes 128. Pad
// pixels and empty cells are 0.
Image tile_images(const std::vector<Tensor>& tiles, const TileLayout& layout);

void write_ppm(const std::string& path, const Image& image);
Image read_ppm(const std::string& path);

// One image per convolution layer (nested ones included): the first input
// channel of every filter, or RGB when the layer has 3 input channels. Files
// are named <layer>_filters_<clock>.ppm. Returns the written paths.
std::vector<std::string> visualize_filters(const Brain& brain, const std::string& out_dir, std::uint64_t clock);

// Runs an inference clone on `inputs` and tiles the channels of example 0 of
// every rank-4 block output. Files are named <layer>_activation_<clock>.ppm.
// Returns layer name to feature map count.
std::map<std::string, std::size_t> visualize_activation(const Brain& brain, const std::vector<Tensor>& inputs,
                                                        const std::string& out_dir, std::uint64_t clock);

// --- graph export ---

// Graphviz digraph: system_in plus one node per block labeled "<name>\n<kind>",
// one edge per input reference, delayed edges dashed.
std::string export_dot(const Brain& brain);

}  // namespace akid
