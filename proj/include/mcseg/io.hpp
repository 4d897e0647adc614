#pragma once

#include <string>

#include "mcseg/core.hpp"

namespace mcseg {

// Binary PGM (P5). Pixels are normalized to [0,1] by the header maxval on
// read; maxval > 255 means two bytes per sample, most significant byte first.
GrayImage read_pgm(const std::string& path, double pixel_spacing_mm = 0.070);
void write_pgm16(const GrayImage& img, const std::string& path);  // maxval 65535

// 8-bit PGM mask: nonzero reads as set, set writes as 255.
BinaryMask read_mask_pgm(const std::string& path);
void write_mask_pgm(const BinaryMask& mask, const std::string& path);

// MCF1 float container: magic "MCF1", u32 width, u32 height, f64
// pixel_spacing_mm, then row-major f32 payload; all little-endian.
void write_mcf1(const ProximityMap& map, const std::string& path);
ProximityMap read_mcf1(const std::string& path);

// Labeled masks ride the same container with integer-valued floats.
void write_labels_mcf1(const LabeledMask& labels, double pixel_spacing_mm,
                       const std::string& path);
LabeledMask read_labels_mcf1(const std::string& path, double* pixel_spacing_mm = nullptr);

}  // namespace mcseg
