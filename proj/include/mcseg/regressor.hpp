#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mcseg/core.hpp"

namespace mcseg {

struct RegressorConfig {
  std::vector<int> channels{8, 16, 32};  // width per encoder level
  int levels = 3;                        // 2x downsampling stages
  int kernel = 3;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int batch_size = 8;
  int epochs = 40;
  std::uint64_t rng_seed = 1;
  double dice_epsilon = 1.0;
};

void validate_regressor_config(const RegressorConfig& config);  // throws ParameterError

struct Tensor {
  std::vector<int> shape;
  std::vector<double> v;
};

// Parameters in a fixed canonical order: encoder conv weight/bias per level
// (shallow to deep), decoder conv weight/bias per level (deep to shallow, the
// processing order), then the final 1-channel head weight/bias.
struct Model {
  RegressorConfig config;
  std::vector<Tensor> params;
};

// He-initialized weights (normal with stdev sqrt(2/fan_in)), zero biases, all
// drawn in canonical parameter order from one generator seeded with rng_seed.
Model init_model(const RegressorConfig& config);

long parameter_count(const Model& model);

struct Patch {
  int size = 0;
  std::vector<double> image, target;  // row-major, size x size
};

struct PatchSet {
  int patch = 0, stride = 0;
  std::vector<Patch> items;
};

// Top-left anchored grid; the last row/column anchor is shifted inward so
// patches stay in bounds. With require_positive, only patches whose target
// contains a positive value are kept.
PatchSet extract_patches(const GrayImage& image, const ProximityMap& target,
                         int patch, int stride, bool require_positive);

// Soft Dice loss 1 - (2*sum(p*t)+eps)/(sum(p)+sum(t)+eps), in [0,1).
double dice_loss(const std::vector<double>& pred, const std::vector<double>& target,
                 double epsilon);
double dice_loss(const ProximityMap& pred, const ProximityMap& target, double epsilon);

// dL/dpred per pixel: -(2*t*D - N)/D^2 with N, D the Dice numerator and
// denominator above.
std::vector<double> dice_loss_gradient(const std::vector<double>& pred,
                                       const std::vector<double>& target,
                                       double epsilon);

// Encoder stages (3x3 conv, zero padding, ELU, 2x average pool with the
// pre-pool activation kept as a skip), mirrored decoder (nearest-neighbor 2x
// upsample, additive skip, conv + ELU), then a 1-channel conv and sigmoid.
// Width and height must be divisible by 2^levels.
std::vector<double> forward(const Model& model, const std::vector<double>& input,
                            int width, int height);

// Loss gradient w.r.t. every parameter for one (input, target) patch, tensors
// shaped like model.params; also reports the patch loss.
std::vector<Tensor> loss_gradients(const Model& model, const std::vector<double>& input,
                                   const std::vector<double>& target, int width,
                                   int height, double* loss = nullptr);

// Mini-batch Adam on the Dice loss. Deterministic for a fixed seed: init,
// per-epoch shuffling, and augmentation draws all come from one generator.
// Augmentation (when enabled): horizontal/vertical flip with p = 0.5 applied
// to patch and target alike, then brightness scale and gamma each uniform in
// [0.9, 1.1] on the image only (values clamped to [0,1]), and a random crop to
// 320 px when the patch is larger. When `validation` is given, the model with
// the best mean IoU per validation patch (prediction >= 0.5 vs target > 0,
// ties to the earlier epoch) is returned; otherwise the final model.
Model train(const PatchSet& patches, const RegressorConfig& config, bool augment,
            const PatchSet* validation = nullptr,
            std::vector<double>* loss_trace = nullptr);

// Tiled full-image inference: tiles of `tile` px overlapping by `overlap` px,
// forward per tile, overlaps blended by averaging. Images smaller than the
// tile are reflect-padded and cropped back.
ProximityMap predict_full(const Model& model, const GrayImage& image, int tile,
                          int overlap, int threads = 1);

void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

struct ExternalProximity {
  ProximityMap map;
  long clamped = 0;  // values outside [0,1] clamped on load
};

ExternalProximity load_external_proximity(const std::string& path);

}  // namespace mcseg
