#include "mcseg/scale_space.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace mcseg {

namespace {

// Folds an index into [0,n) by mirror reflection (… 2 1 0 | 0 1 2 … | 2 1 0 …).
inline int reflect(int i, int n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
  }
  return i;
}

void convolve_rows(const std::vector<double>& src, std::vector<double>& dst, int w, int h,
                   const std::vector<double>& kernel) {
  const int radius = static_cast<int>(kernel.size() / 2);
  for (int y = 0; y < h; ++y) {
    const double* row = src.data() + static_cast<std::size_t>(y) * w;
    double* out = dst.data() + static_cast<std::size_t>(y) * w;
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      if (x >= radius && x + radius < w) {
        const double* p = row + x - radius;
        for (std::size_t t = 0; t < kernel.size(); ++t) acc += kernel[t] * p[t];
      } else {
        for (std::size_t t = 0; t < kernel.size(); ++t)
          acc += kernel[t] * row[reflect(x - radius + static_cast<int>(t), w)];
      }
      out[x] = acc;
    }
  }
}

void convolve_cols(const std::vector<double>& src, std::vector<double>& dst, int w, int h,
                   const std::vector<double>& kernel) {
  const int radius = static_cast<int>(kernel.size() / 2);
  for (int y = 0; y < h; ++y) {
    double* out = dst.data() + static_cast<std::size_t>(y) * w;
    if (y >= radius && y + radius < h) {
      const double* base = src.data() + static_cast<std::size_t>(y - radius) * w;
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        const double* p = base + x;
        for (std::size_t t = 0; t < kernel.size(); ++t)
          acc += kernel[t] * p[t * static_cast<std::size_t>(w)];
        out[x] = acc;
      }
    } else {
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (std::size_t t = 0; t < kernel.size(); ++t) {
          const int yy = reflect(y - radius + static_cast<int>(t), h);
          acc += kernel[t] * src[static_cast<std::size_t>(yy) * w + x];
        }
        out[x] = acc;
      }
    }
  }
}

// Linear voxel index used for all plateau/tie decisions.
inline std::size_t voxel_index(int slice, int x, int y, int w, int h) {
  return (static_cast<std::size_t>(slice) * h + y) * w + x;
}

}  // namespace

ScaleSequence make_scale_sequence(double sigma_min, double sigma_max, int n_scales) {
  if (!(sigma_min > 0.0)) throw ParameterError("sigma_min must be > 0");
  if (!(sigma_max > sigma_min)) throw ParameterError("sigma_max must be > sigma_min");
  if (n_scales < 2) throw ParameterError("n_scales must be >= 2");
  ScaleSequence seq;
  seq.sigma_min = sigma_min;
  seq.sigma_max = sigma_max;
  seq.k = std::pow(sigma_max / sigma_min, 1.0 / (n_scales - 1));
  seq.sigmas.resize(n_scales);
  for (int n = 0; n < n_scales; ++n) seq.sigmas[n] = std::pow(seq.k, n) * sigma_min;
  seq.sigmas.back() = sigma_max;
  return seq;
}

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) throw ParameterError("gaussian sigma must be > 0");
  const int radius = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
    kernel[i + radius] = v;
    sum += v;
  }
  for (double& v : kernel) v /= sum;
  return kernel;
}

GrayImage gaussian_blur(const GrayImage& img, double sigma) {
  const auto kernel = gaussian_kernel(sigma);
  GrayImage out(img.width, img.height, 0.0, img.pixel_spacing_mm);
  std::vector<double> tmp(img.size());
  convolve_rows(img.data, tmp, img.width, img.height, kernel);
  convolve_cols(tmp, out.data, img.width, img.height, kernel);
  return out;
}

DoGStack dog_stack(const GrayImage& img, const ScaleSequence& scales, int threads) {
  const int n = static_cast<int>(scales.sigmas.size());
  std::vector<GrayImage> levels(n);
  parallel_for(n, threads, [&](int i) { levels[i] = gaussian_blur(img, scales.sigmas[i]); });

  DoGStack stack;
  stack.width = img.width;
  stack.height = img.height;
  stack.scales = scales;
  stack.slices.resize(n - 1);
  parallel_for(n - 1, threads, [&](int i) {
    const double norm = scales.sigmas[i] / (scales.sigmas[i + 1] - scales.sigmas[i]);
    auto& slice = stack.slices[i];
    slice.resize(img.size());
    const auto& a = levels[i].data;
    const auto& b = levels[i + 1].data;
    for (std::size_t p = 0; p < slice.size(); ++p) slice[p] = norm * (a[p] - b[p]);
  });
  return stack;
}

std::vector<Blob> detect_blobs(const DoGStack& stack, double t_dog) {
  std::vector<Blob> blobs;
  const int w = stack.width;
  const int h = stack.height;
  const int depth = static_cast<int>(stack.slices.size());
  for (int n = 0; n < depth; ++n) {
    const auto& slice = stack.slices[n];
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double v = slice[static_cast<std::size_t>(y) * w + x];
        if (v < t_dog) continue;
        const std::size_t self = voxel_index(n, x, y, w, h);
        bool is_max = true;
        for (int dn = -1; dn <= 1 && is_max; ++dn) {
          const int nn = n + dn;
          if (nn < 0 || nn >= depth) continue;
          const auto& ns = stack.slices[nn];
          for (int dy = -1; dy <= 1 && is_max; ++dy) {
            const int yy = y + dy;
            if (yy < 0 || yy >= h) continue;
            for (int dx = -1; dx <= 1; ++dx) {
              if (dn == 0 && dy == 0 && dx == 0) continue;
              const int xx = x + dx;
              if (xx < 0 || xx >= w) continue;
              const double u = ns[static_cast<std::size_t>(yy) * w + xx];
              const bool earlier = voxel_index(nn, xx, yy, w, h) < self;
              if (earlier ? (v <= u) : (v < u)) {
                is_max = false;
                break;
              }
            }
          }
        }
        if (is_max) blobs.push_back({x, y, stack.scales.sigmas[n], v, n});
      }
    }
  }
  return blobs;
}

namespace {

double disc_intersection(double r1, double r2, double d) {
  if (d >= r1 + r2) return 0.0;
  const double rmin = std::min(r1, r2);
  if (d <= std::abs(r1 - r2)) return std::numbers::pi * rmin * rmin;
  const double a1 = r1 * r1 * std::acos((d * d + r1 * r1 - r2 * r2) / (2.0 * d * r1));
  const double a2 = r2 * r2 * std::acos((d * d + r2 * r2 - r1 * r1) / (2.0 * d * r2));
  const double t = (-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2);
  return a1 + a2 - 0.5 * std::sqrt(std::max(t, 0.0));
}

}  // namespace

std::vector<Blob> prune_overlaps(std::vector<Blob> blobs, double o_dog) {
  const int count = static_cast<int>(blobs.size());
  std::vector<int> order(count);
  for (int i = 0; i < count; ++i) order[i] = i;
  auto vox = [&](const Blob& b) {
    return voxel_index(b.scale_index, b.x, b.y, 1 << 20, 1 << 20);
  };
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (blobs[a].response != blobs[b].response) return blobs[a].response > blobs[b].response;
    if (blobs[a].sigma != blobs[b].sigma) return blobs[a].sigma > blobs[b].sigma;
    return vox(blobs[a]) < vox(blobs[b]);
  });

  std::vector<bool> removed(count, false);
  for (int oi = 0; oi < count; ++oi) {
    const int i = order[oi];
    if (removed[i]) continue;
    for (int oj = oi + 1; oj < count; ++oj) {
      const int j = order[oj];
      if (removed[j]) continue;
      const Blob& a = blobs[i];
      const Blob& b = blobs[j];
      const double ra = std::numbers::sqrt2 * a.sigma;
      const double rb = std::numbers::sqrt2 * b.sigma;
      const double dx = a.x - b.x;
      const double dy = a.y - b.y;
      const double d = std::sqrt(dx * dx + dy * dy);
      const double inter = disc_intersection(ra, rb, d);
      const double rmin = std::min(ra, rb);
      const double frac = inter / (std::numbers::pi * rmin * rmin);
      if (frac > o_dog) {
        int victim;
        if (a.sigma != b.sigma) {
          victim = a.sigma < b.sigma ? i : j;
        } else if (a.response != b.response) {
          victim = a.response < b.response ? i : j;
        } else {
          victim = vox(a) > vox(b) ? i : j;
        }
        removed[victim] = true;
        if (victim == i) break;
      }
    }
  }

  std::vector<Blob> kept;
  kept.reserve(count);
  for (int i = 0; i < count; ++i)
    if (!removed[i]) kept.push_back(blobs[i]);
  std::sort(kept.begin(), kept.end(),
            [&](const Blob& a, const Blob& b) { return vox(a) < vox(b); });
  return kept;
}

}  // namespace mcseg
