#include "mcseg/proximity.hpp"

#include <cmath>
#include <limits>

namespace mcseg {

namespace {

constexpr double kFar = 1e30;

// 1D squared-distance lower envelope (Felzenszwalb & Huttenlocher).
void edt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
            std::vector<double>& z, int n) {
  int k = 0;
  v[0] = 0;
  z[0] = -kFar;
  z[1] = kFar;
  for (int q = 1; q < n; ++q) {
    double s;
    while (true) {
      const int p = v[k];
      s = ((f[q] + static_cast<double>(q) * q) - (f[p] + static_cast<double>(p) * p)) /
          (2.0 * q - 2.0 * p);
      if (s <= z[k]) {
        --k;
      } else {
        break;
      }
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kFar;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = q - v[k];
    d[q] = dq * dq + f[v[k]];
  }
}

}  // namespace

double proximity_g(double r, const ProximityParams& params) {
  if (!(params.xi > 0.0)) throw ParameterError("xi must be > 0");
  if (params.alpha == 0.0 || !std::isfinite(params.alpha))
    throw ParameterError("alpha must be finite and nonzero");
  if (r > params.xi) return 0.0;
  return std::expm1(params.alpha * (1.0 - r / params.xi)) / std::expm1(params.alpha);
}

std::vector<double> squared_distance_transform(const BinaryMask& sources) {
  const int w = sources.width;
  const int h = sources.height;
  std::vector<double> grid(sources.size());
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = sources.bits[i] ? 0.0 : kFar;

  const int m = std::max(w, h);
  std::vector<double> f(m), d(m), z(m + 1);
  std::vector<int> v(m);

  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) f[y] = grid[static_cast<std::size_t>(y) * w + x];
    edt_1d(f, d, v, z, h);
    for (int y = 0; y < h; ++y) grid[static_cast<std::size_t>(y) * w + x] = d[y];
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) f[x] = grid[static_cast<std::size_t>(y) * w + x];
    edt_1d(f, d, v, z, w);
    for (int x = 0; x < w; ++x) grid[static_cast<std::size_t>(y) * w + x] = d[x];
  }
  return grid;
}

ProximityMap proximity_map(const BinaryMask& annotations, const ProximityParams& params,
                           double pixel_spacing_mm) {
  ProximityMap map(annotations.width, annotations.height, pixel_spacing_mm);
  if (annotations.count() == 0) return map;
  const std::vector<double> d2 = squared_distance_transform(annotations);
  for (std::size_t i = 0; i < map.values.size(); ++i)
    map.values[i] = proximity_g(std::sqrt(d2[i]), params);
  return map;
}

BinaryMask threshold_map(const ProximityMap& map, double p_thr) {
  if (!(p_thr >= 0.0 && p_thr <= 1.0))
    throw ParameterError("p_thr must be in [0,1]");
  BinaryMask mask(map.width, map.height);
  for (std::size_t i = 0; i < mask.size(); ++i)
    mask.bits[i] = map.values[i] >= p_thr ? 1 : 0;
  return mask;
}

}  // namespace mcseg
