#include "mcseg/hessian_blob.hpp"

#include <algorithm>
#include <cmath>

namespace mcseg {

namespace {

inline int reflect(int i, int n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
  }
  return i;
}

}  // namespace

HessianPlanes hessian_planes(const std::vector<double>& slice, int width, int height) {
  HessianPlanes h;
  h.width = width;
  h.height = height;
  h.xx.resize(slice.size());
  h.xy.resize(slice.size());
  h.yy.resize(slice.size());
  auto f = [&](int x, int y) {
    return slice[static_cast<std::size_t>(reflect(y, height)) * width + reflect(x, width)];
  };
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * width + x;
      const double c = slice[i];
      h.xx[i] = f(x + 1, y) - 2.0 * c + f(x - 1, y);
      h.yy[i] = f(x, y + 1) - 2.0 * c + f(x, y - 1);
      h.xy[i] = (f(x + 1, y + 1) - f(x + 1, y - 1) - f(x - 1, y + 1) + f(x - 1, y - 1)) / 4.0;
    }
  }
  return h;
}

BinaryMask hessian_mask(const std::vector<double>& slice, int width, int height, double h_thr) {
  const HessianPlanes h = hessian_planes(slice, width, height);
  BinaryMask mask(width, height);
  for (std::size_t i = 0; i < slice.size(); ++i) {
    const double tr = h.xx[i] + h.yy[i];
    if (!(tr < 0.0)) continue;
    const double det = h.xx[i] * h.yy[i] - h.xy[i] * h.xy[i];
    if (det < 0.0 || std::abs(det) / (tr * tr) <= h_thr) mask.bits[i] = 1;
  }
  return mask;
}

std::vector<BinaryMask> hessian_masks(const DoGStack& stack, double h_thr, int threads) {
  std::vector<BinaryMask> masks(stack.slices.size());
  parallel_for(static_cast<int>(stack.slices.size()), threads, [&](int i) {
    masks[i] = hessian_mask(stack.slices[i], stack.width, stack.height, h_thr);
  });
  return masks;
}

LabeledMask label_components(const BinaryMask& mask) {
  LabeledMask out(mask.width, mask.height);
  const int w = mask.width;
  const int h = mask.height;
  std::vector<std::size_t> stack;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (!mask.bits[i] || out.labels[i] != 0) continue;
      const std::int32_t label = ++out.count;
      out.labels[i] = label;
      stack.push_back(i);
      while (!stack.empty()) {
        const std::size_t p = stack.back();
        stack.pop_back();
        const int px = static_cast<int>(p % w);
        const int py = static_cast<int>(p / w);
        for (int dy = -1; dy <= 1; ++dy) {
          const int ny = py + dy;
          if (ny < 0 || ny >= h) continue;
          for (int dx = -1; dx <= 1; ++dx) {
            if (dx == 0 && dy == 0) continue;
            const int nx = px + dx;
            if (nx < 0 || nx >= w) continue;
            const std::size_t q = static_cast<std::size_t>(ny) * w + nx;
            if (mask.bits[q] && out.labels[q] == 0) {
              out.labels[q] = label;
              stack.push_back(q);
            }
          }
        }
      }
    }
  }
  return out;
}

BinaryMask extract_blob_objects(const std::vector<Blob>& blobs,
                                const std::vector<BinaryMask>& masks) {
  if (masks.empty()) throw ParameterError("extract_blob_objects: no masks");
  const int w = masks[0].width;
  const int h = masks[0].height;
  BinaryMask out(w, h);

  // Offsets within Euclidean distance 2, nearest first, ties by linear index.
  struct Offset {
    int dx, dy, d2;
  };
  std::vector<Offset> offsets;
  for (int dy = -2; dy <= 2; ++dy)
    for (int dx = -2; dx <= 2; ++dx)
      if (dx * dx + dy * dy <= 4) offsets.push_back({dx, dy, dx * dx + dy * dy});
  std::stable_sort(offsets.begin(), offsets.end(),
                   [](const Offset& a, const Offset& b) { return a.d2 < b.d2; });

  std::vector<LabeledMask> labeled(masks.size());
  std::vector<bool> have(masks.size(), false);
  std::vector<std::vector<std::uint8_t>> selected(masks.size());

  for (const Blob& blob : blobs) {
    if (blob.scale_index < 0 || blob.scale_index >= static_cast<int>(masks.size()))
      throw ParameterError("extract_blob_objects: blob scale out of range");
    const BinaryMask& mask = masks[blob.scale_index];
    int sx = -1, sy = -1;
    for (const Offset& o : offsets) {
      const int x = blob.x + o.dx;
      const int y = blob.y + o.dy;
      if (x < 0 || x >= w || y < 0 || y >= h) continue;
      if (mask.at(x, y)) {
        sx = x;
        sy = y;
        break;
      }
    }
    if (sx < 0) continue;
    if (!have[blob.scale_index]) {
      labeled[blob.scale_index] = label_components(mask);
      selected[blob.scale_index].assign(labeled[blob.scale_index].count + 1, 0);
      have[blob.scale_index] = true;
    }
    selected[blob.scale_index][labeled[blob.scale_index].at(sx, sy)] = 1;
  }

  for (std::size_t s = 0; s < masks.size(); ++s) {
    if (!have[s]) continue;
    const auto& lab = labeled[s].labels;
    const auto& sel = selected[s];
    for (std::size_t i = 0; i < lab.size(); ++i)
      if (lab[i] != 0 && sel[lab[i]]) out.bits[i] = 1;
  }
  return out;
}

HdogResult hdog_segment(const GrayImage& img, const HdogParams& params, int threads) {
  const ScaleSequence scales =
      make_scale_sequence(params.sigma_min, params.sigma_max, params.n_scales);
  const DoGStack stack = dog_stack(img, scales, threads);
  std::vector<Blob> blobs = detect_blobs(stack, params.t_dog);
  blobs = prune_overlaps(std::move(blobs), params.o_dog);
  const std::vector<BinaryMask> masks = hessian_masks(stack, params.h_thr, threads);
  HdogResult result;
  result.blobs = std::move(blobs);
  result.mask = extract_blob_objects(result.blobs, masks);
  return result;
}

}  // namespace mcseg
