#include "mcseg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "mcseg/scale_space.hpp"

namespace mcseg {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
const double kHalfMaxFactor = std::sqrt(2.0 * std::log(2.0));  // r = sigma * this

bool known_archetype(const std::string& tag) {
  return tag == "diffuse" || tag == "grouped" || tag == "regional" ||
         tag == "linear" || tag == "segmental";
}

}  // namespace

void validate_phantom_spec(const PhantomSpec& spec) {
  if (spec.width < 16 || spec.height < 16)
    throw ParameterError("phantom dims must be >= 16");
  if (!(spec.pixel_spacing_mm > 0.0))
    throw ParameterError("pixel_spacing_mm must be positive");
  if (!(spec.background_amplitude >= 0.0))
    throw ParameterError("background_amplitude must be >= 0");
  if (!(spec.background_correlation_px > 0.0))
    throw ParameterError("background_correlation_px must be positive");
  if (!(spec.noise_stdev >= 0.0)) throw ParameterError("noise_stdev must be >= 0");
  if (spec.blob_count < 0) throw ParameterError("blob_count must be >= 0");
  if (spec.blob_count > 0) {
    if (!(spec.radius_min_px >= 1.0))
      throw ParameterError("blob radii must be >= 1 px");
    if (!(spec.radius_max_px >= spec.radius_min_px))
      throw ParameterError("radius range is inverted");
    if (!(spec.contrast_max >= spec.contrast_min))
      throw ParameterError("contrast range is inverted");
    if (!(spec.contrast_min > spec.noise_stdev))
      throw ParameterError("contrast_min must exceed noise_stdev");
  }
  if (spec.min_center_dist_px < 0.0)
    throw ParameterError("min_center_dist_px must be >= 0");
  if (spec.clusters < 1) throw ParameterError("clusters must be >= 1");
  if (spec.cluster_spread_px < 0.0)
    throw ParameterError("cluster_spread_px must be >= 0");
  if (!known_archetype(spec.archetype))
    throw ParameterError(
        "archetype must be one of diffuse|grouped|regional|linear|segmental");
}

Phantom generate_phantom(const PhantomSpec& spec, std::uint64_t seed) {
  validate_phantom_spec(spec);
  const int w = spec.width, h = spec.height;
  const std::size_t n = static_cast<std::size_t>(w) * h;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Phantom out;
  out.archetype = spec.archetype;
  out.image.width = w;
  out.image.height = h;
  out.image.pixel_spacing_mm = spec.pixel_spacing_mm;
  out.image.data.resize(n);

  // Smooth background: seeded white noise, blurred, rescaled to the requested
  // amplitude around the base level.
  GrayImage field;
  field.width = w;
  field.height = h;
  field.pixel_spacing_mm = spec.pixel_spacing_mm;
  field.data.resize(n);
  for (double& x : field.data) x = normal(rng);
  field = gaussian_blur(field, spec.background_correlation_px);
  double mean = 0.0;
  for (double x : field.data) mean += x;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double x : field.data) var += (x - mean) * (x - mean);
  const double stdev = std::sqrt(var / static_cast<double>(n));
  const double scale = stdev > 0.0 ? spec.background_amplitude / stdev : 0.0;
  for (std::size_t i = 0; i < n; ++i)
    out.image.data[i] = spec.background_level + scale * (field.data[i] - mean);

  // Layout anchors, drawn before any blob.
  const double sigma_max = spec.radius_max_px / kHalfMaxFactor;
  const double margin = std::ceil(3.0 * sigma_max) + 1.0;
  const double lo_x = margin, hi_x = w - 1 - margin;
  const double lo_y = margin, hi_y = h - 1 - margin;
  if (spec.blob_count > 0 && (hi_x <= lo_x || hi_y <= lo_y))
    throw ParameterError("image too small for the requested blob radii");
  const auto box_x = [&] { return lo_x + (hi_x - lo_x) * unit(rng); };
  const auto box_y = [&] { return lo_y + (hi_y - lo_y) * unit(rng); };
  const double box_min = std::min(hi_x - lo_x, hi_y - lo_y);
  const auto mid = [&](double lo, double hi) {
    return lo + (hi - lo) * (0.3 + 0.4 * unit(rng));
  };

  std::vector<double> anchor_x, anchor_y;
  double line_x = 0, line_y = 0, line_dx = 1, line_dy = 0, line_half = 0;
  double wedge_x = 0, wedge_y = 0, wedge_dir = 0, wedge_r = 0;
  if (spec.archetype == "grouped") {
    for (int c = 0; c < spec.clusters; ++c) {
      anchor_x.push_back(box_x());
      anchor_y.push_back(box_y());
    }
  } else if (spec.archetype == "regional") {
    anchor_x.push_back(mid(lo_x, hi_x));
    anchor_y.push_back(mid(lo_y, hi_y));
  } else if (spec.archetype == "linear") {
    line_x = mid(lo_x, hi_x);
    line_y = mid(lo_y, hi_y);
    const double theta = kTwoPi * unit(rng);
    line_dx = std::cos(theta);
    line_dy = std::sin(theta);
    line_half = std::min(0.5 * spec.cluster_spread_px * std::max(spec.blob_count, 2),
                         0.4 * box_min);
  } else if (spec.archetype == "segmental") {
    wedge_x = mid(lo_x, hi_x);
    wedge_y = mid(lo_y, hi_y);
    wedge_dir = kTwoPi * unit(rng);
    wedge_r = 0.35 * box_min;
  }

  const auto propose = [&](int cluster) -> std::pair<double, double> {
    if (spec.archetype == "grouped") {
      const double r = spec.cluster_spread_px * std::sqrt(unit(rng));
      const double a = kTwoPi * unit(rng);
      return {anchor_x[cluster] + r * std::cos(a), anchor_y[cluster] + r * std::sin(a)};
    }
    if (spec.archetype == "regional") {
      const double r = 4.0 * spec.cluster_spread_px * std::sqrt(unit(rng));
      const double a = kTwoPi * unit(rng);
      return {anchor_x[0] + r * std::cos(a), anchor_y[0] + r * std::sin(a)};
    }
    if (spec.archetype == "linear") {
      const double t = (2.0 * unit(rng) - 1.0) * line_half;
      const double j = (unit(rng) - 0.5) * spec.cluster_spread_px;
      return {line_x + t * line_dx - j * line_dy, line_y + t * line_dy + j * line_dx};
    }
    if (spec.archetype == "segmental") {
      const double u = std::sqrt(unit(rng)) * wedge_r;
      const double a = wedge_dir + (unit(rng) - 0.5) * (std::numbers::pi / 5.0);
      return {wedge_x + u * std::cos(a), wedge_y + u * std::sin(a)};
    }
    return {box_x(), box_y()};  // diffuse
  };

  // Blobs: radius and contrast first, then up to 100 placement attempts each.
  for (int b = 0; b < spec.blob_count; ++b) {
    PhantomBlob blob;
    blob.radius_px =
        spec.radius_min_px + (spec.radius_max_px - spec.radius_min_px) * unit(rng);
    blob.sigma_px = blob.radius_px / kHalfMaxFactor;
    blob.contrast =
        spec.contrast_min + (spec.contrast_max - spec.contrast_min) * unit(rng);
    blob.cluster = spec.clusters > 0 ? b % spec.clusters : 0;

    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      const auto [cx, cy] = propose(blob.cluster);
      if (cx < lo_x || cx > hi_x || cy < lo_y || cy > hi_y) continue;
      bool clear = true;
      for (const PhantomBlob& other : out.blobs) {
        const double dx = cx - other.cx, dy = cy - other.cy;
        if (std::sqrt(dx * dx + dy * dy) < spec.min_center_dist_px) {
          clear = false;
          break;
        }
      }
      if (!clear) continue;
      blob.cx = cx;
      blob.cy = cy;
      placed = true;
    }
    if (!placed)
      throw DataError("could not place blob " + std::to_string(b + 1) + " of " +
                      std::to_string(spec.blob_count) +
                      " after 100 attempts (archetype " + spec.archetype + ")");
    out.blobs.push_back(blob);
  }

  out.truth.width = w;
  out.truth.height = h;
  out.truth.bits.assign(n, 0);
  out.truth_labels.width = w;
  out.truth_labels.height = h;
  out.truth_labels.count = static_cast<int>(out.blobs.size());
  out.truth_labels.labels.assign(n, 0);
  out.annotations.width = w;
  out.annotations.height = h;
  out.annotations.bits.assign(n, 0);

  for (std::size_t b = 0; b < out.blobs.size(); ++b) {
    const PhantomBlob& blob = out.blobs[b];
    const double reach = 3.0 * blob.sigma_px;
    const int x0 = std::max(0, static_cast<int>(std::floor(blob.cx - reach)));
    const int x1 = std::min(w - 1, static_cast<int>(std::ceil(blob.cx + reach)));
    const int y0 = std::max(0, static_cast<int>(std::floor(blob.cy - reach)));
    const int y1 = std::min(h - 1, static_cast<int>(std::ceil(blob.cy + reach)));
    const double r2 = blob.radius_px * blob.radius_px;
    const double inv2s2 = 1.0 / (2.0 * blob.sigma_px * blob.sigma_px);
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double dx = x - blob.cx, dy = y - blob.cy;
        const double d2 = dx * dx + dy * dy;
        if (d2 > reach * reach) continue;
        const std::size_t at = static_cast<std::size_t>(y) * w + x;
        out.image.data[at] += blob.contrast * std::exp(-d2 * inv2s2);
        if (d2 <= r2) {
          out.truth.bits[at] = 1;
          out.truth_labels.labels[at] = static_cast<int>(b) + 1;
          if (blob.radius_px >= 3.0) out.annotations.bits[at] = 1;
        }
      }
    }
    if (blob.radius_px < 3.0) {
      const int px = std::clamp(static_cast<int>(std::lround(blob.cx)), 0, w - 1);
      const int py = std::clamp(static_cast<int>(std::lround(blob.cy)), 0, h - 1);
      out.annotations.bits[static_cast<std::size_t>(py) * w + px] = 1;
    }
  }

  if (spec.noise_stdev > 0.0)
    for (double& x : out.image.data) x += spec.noise_stdev * normal(rng);
  return out;
}

}  // namespace mcseg
