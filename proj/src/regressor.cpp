#include "mcseg/regressor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "mcseg/core.hpp"
#include "mcseg/io.hpp"

namespace mcseg {
namespace {

// ---- little-endian binary primitives (MCM1 container) ----

template <typename T>
void write_le(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const char* what) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T)))
    throw FormatError(std::string("truncated model file reading ") + what);
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

// ---- feature-map primitives; layout (c*H + y)*W + x ----

void conv_forward(const std::vector<double>& in, int ic, int h, int w,
                  const Tensor& wt, const Tensor& bias, int oc, int k,
                  std::vector<double>& out) {
  const int r = k / 2;
  out.assign(static_cast<std::size_t>(oc) * h * w, 0.0);
  for (int o = 0; o < oc; ++o) {
    const double b = bias.v[o];
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = b;
        for (int i = 0; i < ic; ++i) {
          const double* wrow =
              &wt.v[((static_cast<std::size_t>(o) * ic + i) * k) * k];
          const double* plane = &in[static_cast<std::size_t>(i) * h * w];
          for (int dy = 0; dy < k; ++dy) {
            const int yy = y + dy - r;
            if (yy < 0 || yy >= h) continue;
            for (int dx = 0; dx < k; ++dx) {
              const int xx = x + dx - r;
              if (xx < 0 || xx >= w) continue;
              acc += wrow[dy * k + dx] * plane[yy * w + xx];
            }
          }
        }
        out[(static_cast<std::size_t>(o) * h + y) * w + x] = acc;
      }
    }
  }
}

void conv_backward(const std::vector<double>& in, int ic, int h, int w,
                   const Tensor& wt, int oc, int k,
                   const std::vector<double>& dout, Tensor& dw, Tensor& db,
                   std::vector<double>* din) {
  const int r = k / 2;
  dw.v.assign(wt.v.size(), 0.0);
  db.v.assign(static_cast<std::size_t>(oc), 0.0);
  if (din) din->assign(static_cast<std::size_t>(ic) * h * w, 0.0);
  for (int o = 0; o < oc; ++o) {
    const std::size_t obase = static_cast<std::size_t>(o) * h * w;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double g = dout[obase + y * w + x];
        if (g == 0.0) continue;
        db.v[o] += g;
        for (int i = 0; i < ic; ++i) {
          double* dwrow = &dw.v[((static_cast<std::size_t>(o) * ic + i) * k) * k];
          const double* wrow =
              &wt.v[((static_cast<std::size_t>(o) * ic + i) * k) * k];
          const double* plane = &in[static_cast<std::size_t>(i) * h * w];
          double* dplane = din ? &(*din)[static_cast<std::size_t>(i) * h * w] : nullptr;
          for (int dy = 0; dy < k; ++dy) {
            const int yy = y + dy - r;
            if (yy < 0 || yy >= h) continue;
            for (int dx = 0; dx < k; ++dx) {
              const int xx = x + dx - r;
              if (xx < 0 || xx >= w) continue;
              dwrow[dy * k + dx] += g * plane[yy * w + xx];
              if (dplane) dplane[yy * w + xx] += g * wrow[dy * k + dx];
            }
          }
        }
      }
    }
  }
}

void elu_inplace(std::vector<double>& v) {
  for (double& x : v) x = x > 0.0 ? x : std::expm1(x);
}

// dpre = dact * elu'(pre), elu'(x) = 1 for x > 0, exp(x) otherwise.
void elu_backward(const std::vector<double>& pre, std::vector<double>& grad) {
  for (std::size_t i = 0; i < pre.size(); ++i)
    if (pre[i] <= 0.0) grad[i] *= std::exp(pre[i]);
}

void avgpool2(const std::vector<double>& in, int c, int h, int w,
              std::vector<double>& out) {
  const int oh = h / 2, ow = w / 2;
  out.resize(static_cast<std::size_t>(c) * oh * ow);
  for (int i = 0; i < c; ++i) {
    const double* p = &in[static_cast<std::size_t>(i) * h * w];
    double* q = &out[static_cast<std::size_t>(i) * oh * ow];
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x)
        q[y * ow + x] = 0.25 * (p[(2 * y) * w + 2 * x] + p[(2 * y) * w + 2 * x + 1] +
                                p[(2 * y + 1) * w + 2 * x] +
                                p[(2 * y + 1) * w + 2 * x + 1]);
  }
}

void avgpool2_backward(const std::vector<double>& dout, int c, int h, int w,
                       std::vector<double>& din) {
  const int oh = h / 2, ow = w / 2;
  din.assign(static_cast<std::size_t>(c) * h * w, 0.0);
  for (int i = 0; i < c; ++i) {
    const double* q = &dout[static_cast<std::size_t>(i) * oh * ow];
    double* p = &din[static_cast<std::size_t>(i) * h * w];
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        const double g = 0.25 * q[y * ow + x];
        p[(2 * y) * w + 2 * x] = g;
        p[(2 * y) * w + 2 * x + 1] = g;
        p[(2 * y + 1) * w + 2 * x] = g;
        p[(2 * y + 1) * w + 2 * x + 1] = g;
      }
  }
}

void upsample2(const std::vector<double>& in, int c, int h, int w,
               std::vector<double>& out) {
  const int oh = 2 * h, ow = 2 * w;
  out.resize(static_cast<std::size_t>(c) * oh * ow);
  for (int i = 0; i < c; ++i) {
    const double* p = &in[static_cast<std::size_t>(i) * h * w];
    double* q = &out[static_cast<std::size_t>(i) * oh * ow];
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) q[y * ow + x] = p[(y / 2) * w + x / 2];
  }
}

void upsample2_backward(const std::vector<double>& dout, int c, int h, int w,
                        std::vector<double>& din) {
  const int oh = 2 * h, ow = 2 * w;
  din.assign(static_cast<std::size_t>(c) * h * w, 0.0);
  for (int i = 0; i < c; ++i) {
    const double* q = &dout[static_cast<std::size_t>(i) * oh * ow];
    double* p = &din[static_cast<std::size_t>(i) * h * w];
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) p[(y / 2) * w + x / 2] += q[y * ow + x];
  }
}

// ---- canonical parameter layout ----

int enc_in_channels(const RegressorConfig& c, int level) {
  return level == 0 ? 1 : c.channels[level - 1];
}

int dec_out_channels(const RegressorConfig& c, int level) {
  return level > 0 ? c.channels[level - 1] : c.channels[0];
}

std::vector<Tensor> make_param_shapes(const RegressorConfig& c) {
  std::vector<Tensor> params;
  const int k = c.kernel;
  for (int i = 0; i < c.levels; ++i) {
    params.push_back({{c.channels[i], enc_in_channels(c, i), k, k}, {}});
    params.push_back({{c.channels[i]}, {}});
  }
  for (int i = c.levels - 1; i >= 0; --i) {
    params.push_back({{dec_out_channels(c, i), c.channels[i], k, k}, {}});
    params.push_back({{dec_out_channels(c, i)}, {}});
  }
  params.push_back({{1, c.channels[0], k, k}, {}});
  params.push_back({{1}, {}});
  for (Tensor& t : params) {
    std::size_t n = 1;
    for (int d : t.shape) n *= static_cast<std::size_t>(d);
    t.v.assign(n, 0.0);
  }
  return params;
}

// Tensor indices within Model::params.
int enc_w(int level) { return 2 * level; }
int enc_b(int level) { return 2 * level + 1; }
int dec_w(const RegressorConfig& c, int level) {
  return 2 * c.levels + 2 * (c.levels - 1 - level);
}
int dec_b(const RegressorConfig& c, int level) { return dec_w(c, level) + 1; }
int head_w(const RegressorConfig& c) { return 4 * c.levels; }
int head_b(const RegressorConfig& c) { return 4 * c.levels + 1; }

Model init_model_with(const RegressorConfig& config, std::mt19937_64& rng) {
  Model model;
  model.config = config;
  model.params = make_param_shapes(config);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Tensor& t : model.params) {
    if (t.shape.size() < 2) continue;  // biases stay zero
    const int fan_in = t.shape[1] * t.shape[2] * t.shape[3];
    const double scale = std::sqrt(2.0 / fan_in);
    for (double& x : t.v) x = scale * normal(rng);
  }
  return model;
}

struct ForwardCache {
  std::vector<std::vector<double>> enc_in, enc_pre, enc_act;  // per level
  std::vector<std::vector<double>> dec_sum, dec_pre, dec_act;
  std::vector<double> head_pre, sig;
};

void check_forward_dims(const Model& model, std::size_t input_size, int width,
                        int height) {
  const int down = 1 << model.config.levels;
  if (width <= 0 || height <= 0 || width % down != 0 || height % down != 0)
    throw ParameterError("input dims must be positive and divisible by 2^levels");
  if (input_size != static_cast<std::size_t>(width) * height)
    throw ParameterError("input buffer does not match the given dims");
}

std::vector<double> run_forward(const Model& model, const std::vector<double>& input,
                                int width, int height, ForwardCache* cache) {
  check_forward_dims(model, input.size(), width, height);
  const RegressorConfig& c = model.config;
  const int L = c.levels;
  const int k = c.kernel;

  std::vector<std::vector<double>> enc_in(L), enc_pre(L), enc_act(L);
  std::vector<double> current = input;
  int h = height, w = width;
  for (int i = 0; i < L; ++i) {
    enc_in[i] = std::move(current);
    conv_forward(enc_in[i], enc_in_channels(c, i), h, w, model.params[enc_w(i)],
                 model.params[enc_b(i)], c.channels[i], k, enc_pre[i]);
    enc_act[i] = enc_pre[i];
    elu_inplace(enc_act[i]);
    avgpool2(enc_act[i], c.channels[i], h, w, current);
    h /= 2;
    w /= 2;
  }

  std::vector<std::vector<double>> dec_sum(L), dec_pre(L), dec_act(L);
  for (int i = L - 1; i >= 0; --i) {
    std::vector<double> up;
    upsample2(current, c.channels[i], h, w, up);
    h *= 2;
    w *= 2;
    for (std::size_t j = 0; j < up.size(); ++j) up[j] += enc_act[i][j];
    dec_sum[i] = std::move(up);
    conv_forward(dec_sum[i], c.channels[i], h, w, model.params[dec_w(c, i)],
                 model.params[dec_b(c, i)], dec_out_channels(c, i), k, dec_pre[i]);
    dec_act[i] = dec_pre[i];
    elu_inplace(dec_act[i]);
    current = dec_act[i];
  }

  std::vector<double> head_pre;
  conv_forward(dec_act[0], c.channels[0], height, width, model.params[head_w(c)],
               model.params[head_b(c)], 1, k, head_pre);
  std::vector<double> sig(head_pre.size());
  for (std::size_t i = 0; i < head_pre.size(); ++i)
    sig[i] = 1.0 / (1.0 + std::exp(-head_pre[i]));

  if (cache) {
    cache->enc_in = std::move(enc_in);
    cache->enc_pre = std::move(enc_pre);
    cache->enc_act = std::move(enc_act);
    cache->dec_sum = std::move(dec_sum);
    cache->dec_pre = std::move(dec_pre);
    cache->dec_act = std::move(dec_act);
    cache->head_pre = std::move(head_pre);
    cache->sig = sig;
  }
  return sig;
}

// Symmetric reflection fold of index i into [0, n), no sample repeated.
int reflect_index(int i, int n) {
  while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - 1 - i;
  return i;
}

double patch_mean_iou_at_half(const Model& model, const PatchSet& patches) {
  double total = 0.0;
  for (const Patch& p : patches.items) {
    const std::vector<double> pred = run_forward(model, p.image, p.size, p.size, nullptr);
    long inter = 0, uni = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const bool a = pred[i] >= 0.5;
      const bool b = p.target[i] > 0.0;
      inter += a && b;
      uni += a || b;
    }
    total += uni > 0 ? static_cast<double>(inter) / uni : 1.0;
  }
  return patches.items.empty() ? 0.0 : total / patches.items.size();
}

}  // namespace

void validate_regressor_config(const RegressorConfig& c) {
  if (c.levels < 1) throw ParameterError("levels must be >= 1");
  if (static_cast<int>(c.channels.size()) != c.levels)
    throw ParameterError("channels must list one width per level");
  for (int ch : c.channels)
    if (ch < 1) throw ParameterError("channel widths must be positive");
  if (c.kernel < 1 || c.kernel % 2 == 0)
    throw ParameterError("kernel must be odd and positive");
  if (!(c.learning_rate >= 0.0)) throw ParameterError("learning_rate must be >= 0");
  if (!(c.beta1 > 0.0 && c.beta1 < 1.0)) throw ParameterError("beta1 must be in (0,1)");
  if (!(c.beta2 > 0.0 && c.beta2 < 1.0)) throw ParameterError("beta2 must be in (0,1)");
  if (!(c.adam_epsilon > 0.0)) throw ParameterError("adam_epsilon must be positive");
  if (c.batch_size < 1) throw ParameterError("batch_size must be >= 1");
  if (c.epochs < 1) throw ParameterError("epochs must be >= 1");
  if (!(c.dice_epsilon > 0.0)) throw ParameterError("dice_epsilon must be positive");
}

Model init_model(const RegressorConfig& config) {
  validate_regressor_config(config);
  std::mt19937_64 rng(config.rng_seed);
  return init_model_with(config, rng);
}

long parameter_count(const Model& model) {
  long n = 0;
  for (const Tensor& t : model.params) n += static_cast<long>(t.v.size());
  return n;
}

PatchSet extract_patches(const GrayImage& image, const ProximityMap& target,
                         int patch, int stride, bool require_positive) {
  if (image.width != target.width || image.height != target.height)
    throw DataError("image and target dimensions disagree");
  if (patch < 64) throw ParameterError("patch size must be >= 64");
  if (patch > image.width || patch > image.height)
    throw ParameterError("patch larger than image");
  if (stride < 1) throw ParameterError("stride must be positive");

  const auto anchors = [&](int extent) {
    std::vector<int> a;
    for (int x = 0;; x += stride) {
      if (x + patch >= extent) {
        a.push_back(extent - patch);
        break;
      }
      a.push_back(x);
    }
    return a;
  };

  PatchSet set;
  set.patch = patch;
  set.stride = stride;
  for (int ay : anchors(image.height)) {
    for (int ax : anchors(image.width)) {
      Patch p;
      p.size = patch;
      p.image.resize(static_cast<std::size_t>(patch) * patch);
      p.target.resize(p.image.size());
      bool positive = false;
      for (int y = 0; y < patch; ++y) {
        for (int x = 0; x < patch; ++x) {
          const std::size_t src =
              static_cast<std::size_t>(ay + y) * image.width + (ax + x);
          p.image[static_cast<std::size_t>(y) * patch + x] = image.data[src];
          const double t = target.values[src];
          p.target[static_cast<std::size_t>(y) * patch + x] = t;
          positive = positive || t > 0.0;
        }
      }
      if (!require_positive || positive) set.items.push_back(std::move(p));
    }
  }
  return set;
}

double dice_loss(const std::vector<double>& pred, const std::vector<double>& target,
                 double epsilon) {
  if (pred.size() != target.size()) throw DataError("pred/target size mismatch");
  if (!(epsilon > 0.0)) throw ParameterError("dice epsilon must be positive");
  double inter = 0.0, total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    inter += pred[i] * target[i];
    total += pred[i] + target[i];
  }
  return 1.0 - (2.0 * inter + epsilon) / (total + epsilon);
}

double dice_loss(const ProximityMap& pred, const ProximityMap& target, double epsilon) {
  if (pred.width != target.width || pred.height != target.height)
    throw DataError("pred/target dimensions disagree");
  return dice_loss(pred.values, target.values, epsilon);
}

std::vector<double> dice_loss_gradient(const std::vector<double>& pred,
                                       const std::vector<double>& target,
                                       double epsilon) {
  if (pred.size() != target.size()) throw DataError("pred/target size mismatch");
  if (!(epsilon > 0.0)) throw ParameterError("dice epsilon must be positive");
  double inter = 0.0, total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    inter += pred[i] * target[i];
    total += pred[i] + target[i];
  }
  const double num = 2.0 * inter + epsilon;
  const double den = total + epsilon;
  std::vector<double> grad(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i)
    grad[i] = -(2.0 * target[i] * den - num) / (den * den);
  return grad;
}

std::vector<double> forward(const Model& model, const std::vector<double>& input,
                            int width, int height) {
  return run_forward(model, input, width, height, nullptr);
}

std::vector<Tensor> loss_gradients(const Model& model, const std::vector<double>& input,
                                   const std::vector<double>& target, int width,
                                   int height, double* loss) {
  if (target.size() != static_cast<std::size_t>(width) * height)
    throw DataError("target does not match the given dims");
  const RegressorConfig& c = model.config;
  const int L = c.levels;
  const int k = c.kernel;

  ForwardCache cache;
  const std::vector<double> pred = run_forward(model, input, width, height, &cache);
  if (loss) *loss = dice_loss(pred, target, c.dice_epsilon);

  std::vector<Tensor> grads = make_param_shapes(c);

  // Sigmoid head.
  std::vector<double> dhead = dice_loss_gradient(pred, target, c.dice_epsilon);
  for (std::size_t i = 0; i < dhead.size(); ++i)
    dhead[i] *= cache.sig[i] * (1.0 - cache.sig[i]);
  std::vector<double> dcurrent;
  conv_backward(cache.dec_act[0], c.channels[0], height, width,
                model.params[head_w(c)], 1, k, dhead, grads[head_w(c)],
                grads[head_b(c)], &dcurrent);

  // Decoder, reverse of its processing order (shallow to deep), accumulating
  // skip gradients for the encoder activations.
  std::vector<std::vector<double>> dskip(L);
  int h = height, w = width;
  for (int i = 0; i < L; ++i) {
    elu_backward(cache.dec_pre[i], dcurrent);
    std::vector<double> dsum;
    conv_backward(cache.dec_sum[i], c.channels[i], h, w, model.params[dec_w(c, i)],
                  dec_out_channels(c, i), k, dcurrent, grads[dec_w(c, i)],
                  grads[dec_b(c, i)], &dsum);
    dskip[i] = dsum;  // additive skip: same gradient flows to the encoder copy
    upsample2_backward(dsum, c.channels[i], h / 2, w / 2, dcurrent);
    h /= 2;
    w /= 2;
  }

  // Encoder, deep to shallow; dcurrent holds the gradient on each pooled map.
  for (int i = L - 1; i >= 0; --i) {
    std::vector<double> dact;
    avgpool2_backward(dcurrent, c.channels[i], h * 2, w * 2, dact);
    h *= 2;
    w *= 2;
    for (std::size_t j = 0; j < dact.size(); ++j) dact[j] += dskip[i][j];
    elu_backward(cache.enc_pre[i], dact);
    std::vector<double>* din = i > 0 ? &dcurrent : nullptr;
    conv_backward(cache.enc_in[i], enc_in_channels(c, i), h, w,
                  model.params[enc_w(i)], c.channels[i], k, dact, grads[enc_w(i)],
                  grads[enc_b(i)], din);
  }
  return grads;
}

Model train(const PatchSet& patches, const RegressorConfig& config, bool augment,
            const PatchSet* validation, std::vector<double>* loss_trace) {
  validate_regressor_config(config);
  if (patches.items.empty()) throw DataError("no patches to train on");
  const int down = 1 << config.levels;
  for (const Patch& p : patches.items)
    if (p.size <= 0 || p.size % down != 0)
      throw ParameterError("patch size must be divisible by 2^levels");

  std::mt19937_64 rng(config.rng_seed);
  Model model = init_model_with(config, rng);

  std::vector<Tensor> m = make_param_shapes(config), v = make_param_shapes(config);
  long step = 0;

  Model best_model = model;
  double best_iou = -1.0;

  const int n = static_cast<int>(patches.items.size());
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;

  std::bernoulli_distribution coin(0.5);
  std::uniform_real_distribution<double> unit_scale(0.9, 1.1);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (int start = 0; start < n; start += config.batch_size) {
      const int count = std::min(config.batch_size, n - start);
      std::vector<Tensor> acc = make_param_shapes(config);
      double batch_loss = 0.0;
      for (int b = 0; b < count; ++b) {
        const Patch& src = patches.items[order[start + b]];
        Patch p = src;
        if (augment) {
          const bool hflip = coin(rng);
          const bool vflip = coin(rng);
          const double brightness = unit_scale(rng);
          const double gamma = unit_scale(rng);
          const int s = p.size;
          if (hflip) {
            for (int y = 0; y < s; ++y)
              for (int x = 0; x < s / 2; ++x) {
                std::swap(p.image[y * s + x], p.image[y * s + (s - 1 - x)]);
                std::swap(p.target[y * s + x], p.target[y * s + (s - 1 - x)]);
              }
          }
          if (vflip) {
            for (int y = 0; y < s / 2; ++y)
              for (int x = 0; x < s; ++x) {
                std::swap(p.image[y * s + x], p.image[(s - 1 - y) * s + x]);
                std::swap(p.target[y * s + x], p.target[(s - 1 - y) * s + x]);
              }
          }
          for (double& x : p.image)
            x = std::clamp(
                std::pow(std::clamp(x, 0.0, 1.0), gamma) * brightness, 0.0, 1.0);
          if (p.size > 320) {
            std::uniform_int_distribution<int> off(0, p.size - 320);
            const int ox = off(rng), oy = off(rng);
            Patch cropped;
            cropped.size = 320;
            cropped.image.resize(320 * 320);
            cropped.target.resize(320 * 320);
            for (int y = 0; y < 320; ++y)
              for (int x = 0; x < 320; ++x) {
                cropped.image[y * 320 + x] = p.image[(oy + y) * p.size + (ox + x)];
                cropped.target[y * 320 + x] = p.target[(oy + y) * p.size + (ox + x)];
              }
            p = std::move(cropped);
          }
        }
        double loss = 0.0;
        const std::vector<Tensor> g =
            loss_gradients(model, p.image, p.target, p.size, p.size, &loss);
        batch_loss += loss;
        for (std::size_t t = 0; t < acc.size(); ++t)
          for (std::size_t j = 0; j < acc[t].v.size(); ++j) acc[t].v[j] += g[t].v[j];
      }
      epoch_loss += batch_loss;
      const double inv = 1.0 / count;

      ++step;
      const double bc1 = 1.0 - std::pow(config.beta1, step);
      const double bc2 = 1.0 - std::pow(config.beta2, step);
      for (std::size_t t = 0; t < model.params.size(); ++t) {
        for (std::size_t j = 0; j < model.params[t].v.size(); ++j) {
          const double g = acc[t].v[j] * inv;
          m[t].v[j] = config.beta1 * m[t].v[j] + (1.0 - config.beta1) * g;
          v[t].v[j] = config.beta2 * v[t].v[j] + (1.0 - config.beta2) * g * g;
          model.params[t].v[j] -= config.learning_rate * (m[t].v[j] / bc1) /
                                  (std::sqrt(v[t].v[j] / bc2) + config.adam_epsilon);
        }
      }
    }
    if (loss_trace) loss_trace->push_back(epoch_loss / n);
    if (validation) {
      const double iou = patch_mean_iou_at_half(model, *validation);
      if (iou > best_iou) {
        best_iou = iou;
        best_model = model;
      }
    }
  }
  return validation ? best_model : model;
}

ProximityMap predict_full(const Model& model, const GrayImage& image, int tile,
                          int overlap, int threads) {
  const int down = 1 << model.config.levels;
  if (tile < down || tile % down != 0)
    throw ParameterError("tile must be a positive multiple of 2^levels");
  if (overlap < 0 || overlap >= tile)
    throw ParameterError("overlap must be in [0, tile)");
  const int step = tile - overlap;

  const int pw = std::max(image.width, tile);
  const int ph = std::max(image.height, tile);
  std::vector<double> padded(static_cast<std::size_t>(pw) * ph);
  for (int y = 0; y < ph; ++y) {
    const int sy = reflect_index(y, image.height);
    for (int x = 0; x < pw; ++x)
      padded[static_cast<std::size_t>(y) * pw + x] =
          image.data[static_cast<std::size_t>(sy) * image.width +
                     reflect_index(x, image.width)];
  }

  const auto anchors = [&](int extent) {
    std::vector<int> a;
    for (int x = 0;; x += step) {
      if (x + tile >= extent) {
        a.push_back(extent - tile);
        break;
      }
      a.push_back(x);
    }
    return a;
  };
  const std::vector<int> xs = anchors(pw), ys = anchors(ph);

  std::vector<std::vector<double>> results(xs.size() * ys.size());
  parallel_for(static_cast<int>(results.size()), threads, [&](int idx) {
    const int ax = xs[idx % xs.size()];
    const int ay = ys[idx / xs.size()];
    std::vector<double> input(static_cast<std::size_t>(tile) * tile);
    for (int y = 0; y < tile; ++y)
      for (int x = 0; x < tile; ++x)
        input[static_cast<std::size_t>(y) * tile + x] =
            padded[static_cast<std::size_t>(ay + y) * pw + (ax + x)];
    results[idx] = run_forward(model, input, tile, tile, nullptr);
  });

  std::vector<double> sum(padded.size(), 0.0);
  std::vector<int> hits(padded.size(), 0);
  for (std::size_t idx = 0; idx < results.size(); ++idx) {
    const int ax = xs[idx % xs.size()];
    const int ay = ys[idx / xs.size()];
    for (int y = 0; y < tile; ++y)
      for (int x = 0; x < tile; ++x) {
        const std::size_t at = static_cast<std::size_t>(ay + y) * pw + (ax + x);
        sum[at] += results[idx][static_cast<std::size_t>(y) * tile + x];
        ++hits[at];
      }
  }

  ProximityMap out;
  out.width = image.width;
  out.height = image.height;
  out.pixel_spacing_mm = image.pixel_spacing_mm;
  out.values.resize(static_cast<std::size_t>(image.width) * image.height);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) {
      const std::size_t at = static_cast<std::size_t>(y) * pw + x;
      out.values[static_cast<std::size_t>(y) * image.width + x] = sum[at] / hits[at];
    }
  return out;
}

void save_model(const Model& model, const std::string& path) {
  validate_regressor_config(model.config);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  const RegressorConfig& c = model.config;
  out.write("MCM1", 4);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.levels));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.kernel));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.channels.size()));
  for (int ch : c.channels) write_le<std::uint32_t>(out, static_cast<std::uint32_t>(ch));
  write_le<double>(out, c.learning_rate);
  write_le<double>(out, c.beta1);
  write_le<double>(out, c.beta2);
  write_le<double>(out, c.adam_epsilon);
  write_le<double>(out, c.dice_epsilon);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.batch_size));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.epochs));
  write_le<std::uint64_t>(out, c.rng_seed);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.params.size()));
  for (const Tensor& t : model.params) {
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) write_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (double x : t.v) write_le<float>(out, static_cast<float>(x));
  }
  if (!out) throw FormatError("short write to '" + path + "'");
}

Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open model file '" + path + "'");
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "MCM1", 4) != 0)
    throw FormatError("'" + path + "' is not an MCM1 model file");

  RegressorConfig c;
  c.levels = static_cast<int>(read_le<std::uint32_t>(in, "levels"));
  c.kernel = static_cast<int>(read_le<std::uint32_t>(in, "kernel"));
  const std::uint32_t nch = read_le<std::uint32_t>(in, "channel count");
  if (c.levels < 1 || c.levels > 16 || nch != static_cast<std::uint32_t>(c.levels))
    throw FormatError("inconsistent model header in '" + path + "'");
  c.channels.resize(nch);
  for (std::uint32_t i = 0; i < nch; ++i) {
    c.channels[i] = static_cast<int>(read_le<std::uint32_t>(in, "channel width"));
    if (c.channels[i] < 1 || c.channels[i] > 4096)
      throw FormatError("bad channel width in '" + path + "'");
  }
  c.learning_rate = read_le<double>(in, "learning_rate");
  c.beta1 = read_le<double>(in, "beta1");
  c.beta2 = read_le<double>(in, "beta2");
  c.adam_epsilon = read_le<double>(in, "adam_epsilon");
  c.dice_epsilon = read_le<double>(in, "dice_epsilon");
  c.batch_size = static_cast<int>(read_le<std::uint32_t>(in, "batch_size"));
  c.epochs = static_cast<int>(read_le<std::uint32_t>(in, "epochs"));
  c.rng_seed = read_le<std::uint64_t>(in, "rng_seed");
  try {
    validate_regressor_config(c);
  } catch (const ParameterError& e) {
    throw FormatError("invalid model config in '" + path + "': " + e.what());
  }

  Model model;
  model.config = c;
  model.params = make_param_shapes(c);
  const std::uint32_t count = read_le<std::uint32_t>(in, "tensor count");
  if (count != model.params.size())
    throw FormatError("unexpected tensor count in '" + path + "'");
  for (Tensor& t : model.params) {
    const std::uint32_t ndim = read_le<std::uint32_t>(in, "tensor rank");
    if (ndim != t.shape.size())
      throw FormatError("unexpected tensor rank in '" + path + "'");
    for (int d : t.shape) {
      const std::uint32_t got = read_le<std::uint32_t>(in, "tensor dim");
      if (got != static_cast<std::uint32_t>(d))
        throw FormatError("unexpected tensor shape in '" + path + "'");
    }
    for (double& x : t.v) x = read_le<float>(in, "tensor value");
  }
  return model;
}

ExternalProximity load_external_proximity(const std::string& path) {
  ExternalProximity out;
  out.map = read_mcf1(path);
  for (double& x : out.map.values) {
    if (!std::isfinite(x)) throw FormatError("non-finite proximity value in '" + path + "'");
    if (x < 0.0 || x > 1.0) {
      x = std::clamp(x, 0.0, 1.0);
      ++out.clamped;
    }
  }
  return out;
}

}  // namespace mcseg
