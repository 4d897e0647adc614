#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "mcseg/core.hpp"

#ifndef MCSEG_TEST_WORK
#define MCSEG_TEST_WORK "test_work"
#endif

namespace testutil {

// Scratch directory for one test; created fresh on first use per name.
inline std::filesystem::path work_dir(const std::string& name) {
  std::filesystem::path dir = std::filesystem::path(MCSEG_TEST_WORK) / name;
  std::filesystem::create_directories(dir);
  return dir;
}

inline mcseg::GrayImage random_image(int w, int h, std::uint64_t seed,
                                     double lo = 0.0, double hi = 1.0) {
  mcseg::GrayImage img(w, h);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& v : img.data) v = dist(rng);
  return img;
}

inline mcseg::BinaryMask random_mask(int w, int h, std::uint64_t seed, double density) {
  mcseg::BinaryMask mask(w, h);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  for (auto& b : mask.bits) b = dist(rng) < density ? 1 : 0;
  return mask;
}

// Isotropic Gaussian bump added in place: amp * exp(-d^2 / (2 sigma^2)).
inline void add_gaussian_bump(mcseg::GrayImage& img, double cx, double cy,
                              double sigma, double amp) {
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
      img.at(x, y) += amp * std::exp(-d2 / (2.0 * sigma * sigma));
    }
}

inline void fill_rect(mcseg::BinaryMask& mask, int x0, int y0, int w, int h) {
  for (int y = y0; y < y0 + h; ++y)
    for (int x = x0; x < x0 + w; ++x) mask.at(x, y) = 1;
}

inline void fill_rect(mcseg::LabeledMask& mask, int x0, int y0, int w, int h,
                      std::int32_t label) {
  for (int y = y0; y < y0 + h; ++y)
    for (int x = x0; x < x0 + w; ++x) mask.at(x, y) = label;
}

inline void fill_disc(mcseg::BinaryMask& mask, double cx, double cy, double r) {
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) mask.at(x, y) = 1;
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

inline bool same_bytes(const std::filesystem::path& a, const std::filesystem::path& b) {
  return read_file_bytes(a) == read_file_bytes(b) && std::filesystem::file_size(a) > 0;
}

}  // namespace testutil
