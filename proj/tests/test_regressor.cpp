#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <vector>

#include "doctest.h"
#include "mcseg/core.hpp"
#include "mcseg/io.hpp"
#include "mcseg/proximity.hpp"
#include "mcseg/regressor.hpp"
#include "test_util.hpp"

using namespace mcseg;
namespace fs = std::filesystem;

namespace {

RegressorConfig tiny_config() {
  RegressorConfig cfg;
  cfg.channels = {2, 3};
  cfg.levels = 2;
  cfg.kernel = 3;
  return cfg;
}

std::vector<double> random_vec(std::size_t n, std::uint64_t seed, double lo, double hi) {
  std::vector<double> v(n);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& x : v) x = dist(rng);
  return v;
}

// Dense training pair: many near-touching spots with full-disc annotations so
// the proximity target covers most of the patch.
Patch dense_patch(std::uint64_t seed, int size = 64) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(-1.5, 1.5);
  std::uniform_real_distribution<double> radius(3.0, 4.0);
  std::uniform_real_distribution<double> contrast(0.15, 0.3);
  GrayImage img(size, size, 0.2);
  BinaryMask annotations(size, size);
  for (int gy = 5; gy < size - 4; gy += 7)
    for (int gx = 5; gx < size - 4; gx += 7) {
      const double cx = gx + jitter(rng), cy = gy + jitter(rng);
      const double r = radius(rng);
      testutil::add_gaussian_bump(img, cx, cy, r / std::sqrt(2.0 * std::log(2.0)),
                                  contrast(rng));
      testutil::fill_disc(annotations, cx, cy, r);
    }
  ProximityMap target = proximity_map(annotations, {10.0, 1.0});
  Patch p;
  p.size = size;
  p.image = img.data;
  p.target = target.values;
  return p;
}

}  // namespace

TEST_SUITE("regressor") {

TEST_CASE("parameter count and shapes at the default configuration") {
  RegressorConfig cfg;
  Model model = init_model(cfg);
  // Stock widths {8,16,32}: encoders 80+1168+4640, decoders 4624+1160+584,
  // head 73.
  CHECK(parameter_count(model) == 12329);
  // Encoder conv weights: [out, in, k, k]; first stage takes the 1-channel image.
  REQUIRE(!model.params.empty());
  CHECK(model.params[0].shape == std::vector<int>{8, 1, 3, 3});
  CHECK(model.params[1].shape == std::vector<int>{8});
  // Biases start at zero, weights do not.
  for (double v : model.params[1].v) CHECK(v == 0.0);
  double wsum = 0.0;
  for (double v : model.params[0].v) wsum += std::abs(v);
  CHECK(wsum > 0.0);
}

TEST_CASE("initialization is reproducible and seed-sensitive") {
  RegressorConfig cfg = tiny_config();
  Model a = init_model(cfg);
  Model b = init_model(cfg);
  REQUIRE(a.params.size() == b.params.size());
  for (std::size_t i = 0; i < a.params.size(); ++i) CHECK(a.params[i].v == b.params[i].v);

  cfg.rng_seed = 2;
  Model c = init_model(cfg);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.params.size(); ++i)
    if (a.params[i].v != c.params[i].v) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("configuration validation rejects bad shapes") {
  RegressorConfig bad = tiny_config();
  bad.levels = 3;  // channels has only 2 entries
  CHECK_THROWS_AS(validate_regressor_config(bad), ParameterError);
  bad = tiny_config();
  bad.kernel = 4;  // even kernels have no center
  CHECK_THROWS_AS(validate_regressor_config(bad), ParameterError);
  bad = tiny_config();
  bad.channels = {0, 3};
  CHECK_THROWS_AS(validate_regressor_config(bad), ParameterError);
  bad = tiny_config();
  bad.batch_size = 0;
  CHECK_THROWS_AS(validate_regressor_config(bad), ParameterError);
}

TEST_CASE("patch extraction anchors cover the image with inward shift") {
  GrayImage img(512, 512, 0.1);
  ProximityMap target(512, 512);
  target.at(100, 100) = 0.5;
  PatchSet one = extract_patches(img, target, 512, 480, true);
  CHECK(one.items.size() == 1);

  GrayImage wide(992, 512, 0.1);
  ProximityMap wide_target(992, 512);
  for (double& v : wide_target.values) v = 0.3;
  PatchSet two = extract_patches(wide, wide_target, 512, 480, true);
  CHECK(two.items.size() == 2);  // anchors 0 and 480, 32 px overlap

  // Patches without any positive target are dropped when required.
  ProximityMap zeros(992, 512);
  CHECK(extract_patches(wide, zeros, 512, 480, true).items.empty());
  CHECK(extract_patches(wide, zeros, 512, 480, false).items.size() == 2);

  // Patch content is the exact sub-window.
  GrayImage small(96, 64, 0.0);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 96; ++x) small.at(x, y) = x + 100.0 * y;
  ProximityMap small_target(96, 64);
  for (double& v : small_target.values) v = 0.2;
  PatchSet set = extract_patches(small, small_target, 64, 48, false);
  REQUIRE(set.items.size() == 2);  // anchors 0 and 32
  CHECK(set.items[1].image[0] == 32.0);  // (32, 0)
}

TEST_CASE("dice loss identities") {
  const std::vector<double> ones(100, 1.0);
  const std::vector<double> zeros(100, 0.0);
  CHECK(dice_loss(ones, ones, 1.0) == 0.0);
  CHECK(dice_loss(zeros, zeros, 1.0) == 0.0);  // epsilon rescues the empty case

  std::vector<double> left(200, 0.0), right(200, 0.0);
  for (int i = 0; i < 100; ++i) left[i] = 1.0;
  for (int i = 100; i < 200; ++i) right[i] = 1.0;
  CHECK(dice_loss(left, right, 1.0) == 1.0 - 1.0 / 201.0);

  // Binary identity holds for any mask, graded maps score by soft overlap.
  const auto soft = random_vec(64, 7, 0.0, 1.0);
  const double loss = dice_loss(soft, soft, 1.0);
  CHECK(loss >= 0.0);
  CHECK(loss < 1.0);
}

TEST_CASE("dice gradient matches finite differences and the empty-case limit") {
  auto pred = random_vec(64, 11, 0.05, 0.95);
  const auto target = random_vec(64, 12, 0.0, 1.0);
  const auto grad = dice_loss_gradient(pred, target, 1.0);
  REQUIRE(grad.size() == pred.size());
  const double h = 1e-6;
  for (std::size_t i = 0; i < pred.size(); i += 7) {
    const double keep = pred[i];
    pred[i] = keep + h;
    const double up = dice_loss(pred, target, 1.0);
    pred[i] = keep - h;
    const double down = dice_loss(pred, target, 1.0);
    pred[i] = keep;
    const double fd = (up - down) / (2.0 * h);
    CHECK(std::abs(grad[i] - fd) < 1e-4 * std::max(1.0, std::abs(fd)));
  }

  // Both empty: loss 0 but pushing any pixel up is penalized at unit rate.
  const std::vector<double> zeros(16, 0.0);
  const auto zero_grad = dice_loss_gradient(zeros, zeros, 1.0);
  for (double g : zero_grad) CHECK(g == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("forward emits sigmoid outputs and honors the zero-head identity") {
  RegressorConfig cfg = tiny_config();
  Model model = init_model(cfg);
  const auto input = random_vec(32 * 32, 3, 0.0, 1.0);
  const auto out = forward(model, input, 32, 32);
  REQUIRE(out.size() == input.size());
  for (double v : out) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }

  // Zeroing the head collapses the output to sigmoid(0) = 0.5 exactly.
  Model headless = model;
  for (double& v : headless.params[headless.params.size() - 2].v) v = 0.0;
  for (double& v : headless.params.back().v) v = 0.0;
  const auto half = forward(headless, input, 32, 32);
  for (double v : half) CHECK(v == 0.5);

  // Dimensions must be divisible by 2^levels.
  CHECK_THROWS_AS((void)forward(model, std::vector<double>(30 * 32, 0.0), 30, 32),
                  ParameterError);
}

TEST_CASE("backpropagated gradients match finite differences everywhere") {
  RegressorConfig cfg = tiny_config();
  Model model = init_model(cfg);
  REQUIRE(parameter_count(model) <= 10000);
  const int w = 16, h = 16;  // tiny patch keeps the full sweep fast
  const auto input = random_vec(static_cast<std::size_t>(w) * h, 5, 0.0, 1.0);
  const auto target = random_vec(static_cast<std::size_t>(w) * h, 6, 0.0, 1.0);

  double base_loss = 0.0;
  const auto grads = loss_gradients(model, input, target, w, h, &base_loss);
  REQUIRE(grads.size() == model.params.size());
  CHECK(base_loss > 0.0);

  const double step = 1e-5;
  double worst = 0.0;
  for (std::size_t t = 0; t < model.params.size(); ++t) {
    REQUIRE(grads[t].v.size() == model.params[t].v.size());
    for (std::size_t i = 0; i < model.params[t].v.size(); ++i) {
      Model bumped = model;
      bumped.params[t].v[i] += step;
      const auto up = forward(bumped, input, w, h);
      bumped.params[t].v[i] -= 2.0 * step;
      const auto down = forward(bumped, input, w, h);
      const double fd = (dice_loss(up, target, 1.0) - dice_loss(down, target, 1.0)) /
                        (2.0 * step);
      const double err = std::abs(grads[t].v[i] - fd) /
                         std::max({std::abs(fd), std::abs(grads[t].v[i]), 1e-6});
      worst = std::max(worst, err);
    }
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("training drives the loss down deterministically") {
  PatchSet set;
  set.patch = 64;
  set.stride = 64;
  set.items = {dense_patch(1), dense_patch(2)};

  RegressorConfig cfg;
  cfg.epochs = 12;
  cfg.learning_rate = 3e-4;
  std::vector<double> trace_a, trace_b;
  Model a = train(set, cfg, false, nullptr, &trace_a);
  Model b = train(set, cfg, false, nullptr, &trace_b);
  REQUIRE(trace_a.size() == 12);
  CHECK(trace_a == trace_b);  // bitwise identical reruns
  CHECK(trace_a.back() < trace_a.front());
  for (std::size_t i = 0; i < a.params.size(); ++i) CHECK(a.params[i].v == b.params[i].v);

  // Zero learning rate leaves the initial parameters untouched and the
  // epoch losses constant.
  RegressorConfig frozen = cfg;
  frozen.learning_rate = 0.0;
  std::vector<double> flat;
  Model untouched = train(set, frozen, false, nullptr, &flat);
  Model fresh = init_model(frozen);
  for (std::size_t i = 0; i < fresh.params.size(); ++i)
    CHECK(untouched.params[i].v == fresh.params[i].v);
  for (double v : flat) CHECK(v == flat.front());
}

TEST_CASE("augmentation changes the trajectory but stays reproducible") {
  PatchSet set;
  set.patch = 64;
  set.stride = 64;
  set.items = {dense_patch(3), dense_patch(4)};
  RegressorConfig cfg;
  cfg.epochs = 3;
  std::vector<double> plain, aug1, aug2;
  (void)train(set, cfg, false, nullptr, &plain);
  (void)train(set, cfg, true, nullptr, &aug1);
  (void)train(set, cfg, true, nullptr, &aug2);
  CHECK(aug1 == aug2);
  CHECK(aug1 != plain);
}

TEST_CASE("validation selects by patch intersection over union") {
  PatchSet set;
  set.patch = 64;
  set.stride = 64;
  set.items = {dense_patch(5), dense_patch(6)};
  RegressorConfig cfg;
  cfg.epochs = 4;
  PatchSet val = set;
  Model picked = train(set, cfg, false, &val);
  Model last = train(set, cfg, false, nullptr);
  // Both runs are deterministic; the validated pick may differ from the
  // final-epoch model but must share its architecture.
  CHECK(parameter_count(picked) == parameter_count(last));
}

TEST_CASE("model files round trip bitwise and reject corruption") {
  const auto dir = testutil::work_dir("regressor_io");
  Model model = init_model(tiny_config());
  const auto path = (dir / "model.mcm1").string();
  save_model(model, path);
  Model back = load_model(path);
  CHECK(back.config.levels == model.config.levels);
  CHECK(back.config.channels == model.config.channels);
  REQUIRE(back.params.size() == model.params.size());
  // Values are stored as 32-bit floats, so loading rounds each parameter to
  // float precision and a second save/load is a fixed point.
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    CHECK(back.params[i].shape == model.params[i].shape);
    REQUIRE(back.params[i].v.size() == model.params[i].v.size());
    for (std::size_t j = 0; j < model.params[i].v.size(); ++j)
      CHECK(back.params[i].v[j] ==
            static_cast<double>(static_cast<float>(model.params[i].v[j])));
  }
  const auto repath = (dir / "model2.mcm1").string();
  save_model(back, repath);
  CHECK(testutil::same_bytes(path, repath));
  Model again = load_model(repath);
  for (std::size_t i = 0; i < back.params.size(); ++i)
    CHECK(again.params[i].v == back.params[i].v);

  const auto input = random_vec(32 * 32, 9, 0.0, 1.0);
  CHECK(forward(back, input, 32, 32) == forward(again, input, 32, 32));

  fs::resize_file(path, fs::file_size(path) - 16);
  CHECK_THROWS_AS((void)load_model(path), FormatError);
  CHECK_THROWS_AS((void)load_model((dir / "missing.mcm1").string()), FormatError);
}

TEST_CASE("tiled prediction handles any image size deterministically") {
  Model model = init_model(tiny_config());

  // Smaller than one tile: reflect-padded, cropped back.
  GrayImage small = testutil::random_image(48, 40, 31);
  ProximityMap out = predict_full(model, small, 64, 16);
  CHECK(out.width == 48);
  CHECK(out.height == 40);
  for (double v : out.values) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }

  // Constant input gives a near-constant interior response.
  GrayImage flat(64, 64, 0.37);
  ProximityMap flat_out = predict_full(model, flat, 64, 0);
  const double mid = flat_out.at(32, 32);
  for (int y = 24; y < 40; ++y)
    for (int x = 24; x < 40; ++x) CHECK(std::abs(flat_out.at(x, y) - mid) < 1e-6);

  // Overlap only affects the blended bands.
  GrayImage img = testutil::random_image(128, 64, 41);
  ProximityMap no_overlap = predict_full(model, img, 64, 0);
  ProximityMap blended = predict_full(model, img, 64, 32);
  for (int y = 0; y < 64; ++y)
    for (int x : {0, 10, 31, 96, 110, 127})
      CHECK(no_overlap.at(x, y) == blended.at(x, y));

  // Thread count cannot change the numbers.
  ProximityMap multi = predict_full(model, img, 64, 32, 4);
  CHECK(multi.values == blended.values);

  // Tile geometry is validated.
  CHECK_THROWS_AS((void)predict_full(model, img, 30, 0), ParameterError);   // not 2^levels
  CHECK_THROWS_AS((void)predict_full(model, img, 64, 64), ParameterError);  // overlap >= tile
}

TEST_CASE("external proximity maps are clamped on load with a count") {
  const auto dir = testutil::work_dir("regressor_ext");
  ProximityMap map(8, 4, 0.07);
  for (double& v : map.values) v = 0.4;
  map.at(0, 0) = 1.2;
  map.at(3, 2) = -0.5;
  const auto path = (dir / "ext.mcf1").string();
  write_mcf1(map, path);
  ExternalProximity ext = load_external_proximity(path);
  CHECK(ext.clamped == 2);
  CHECK(ext.map.at(0, 0) == 1.0);
  CHECK(ext.map.at(3, 2) == 0.0);
  CHECK(ext.map.at(1, 1) == doctest::Approx(0.4));
}

}  // TEST_SUITE
