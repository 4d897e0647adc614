#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace mcseg {

// Error categories. The CLI maps them to exit codes 1/2/3.
class ParameterError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Single-channel raster, row-major, values normalized to [0,1] on ingestion.
struct GrayImage {
  int width = 0;
  int height = 0;
  double pixel_spacing_mm = 0.070;
  std::vector<double> data;

  GrayImage() = default;
  GrayImage(int w, int h, double fill = 0.0, double spacing_mm = 0.070)
      : width(w), height(h), pixel_spacing_mm(spacing_mm),
        data(static_cast<std::size_t>(w) * h, fill) {}

  double& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const { return data.size(); }
};

struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;  // 0 or 1

  BinaryMask() = default;
  BinaryMask(int w, int h) : width(w), height(h), bits(static_cast<std::size_t>(w) * h, 0) {}

  std::uint8_t& at(int x, int y) { return bits[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const { return bits.size(); }
  long count() const;
};

// Connected-component labels: 0 background, components 1..count in raster
// discovery order of their first (topmost, then leftmost) pixel.
struct LabeledMask {
  int width = 0;
  int height = 0;
  int count = 0;
  std::vector<std::int32_t> labels;

  LabeledMask() = default;
  LabeledMask(int w, int h) : width(w), height(h), labels(static_cast<std::size_t>(w) * h, 0) {}

  std::int32_t& at(int x, int y) { return labels[static_cast<std::size_t>(y) * width + x]; }
  std::int32_t at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }
};

struct ProximityMap {
  int width = 0;
  int height = 0;
  double pixel_spacing_mm = 0.070;
  std::vector<double> values;  // [0,1]

  ProximityMap() = default;
  ProximityMap(int w, int h, double spacing_mm = 0.070)
      : width(w), height(h), pixel_spacing_mm(spacing_mm),
        values(static_cast<std::size_t>(w) * h, 0.0) {}

  double& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

// Runs fn(i) for i in [0,n). Work items must write to disjoint outputs; the
// chunked schedule is then bit-identical to the sequential loop for any
// thread count.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

}  // namespace mcseg
