#include "mcseg/io.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace mcseg {

namespace {

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open input file: " + path);
  return in;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open output file: " + path);
  return out;
}

// Reads the next whitespace-delimited token, skipping '#' comments.
int read_pnm_int(std::istream& in, const std::string& path) {
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (!std::isspace(c)) {
      break;
    } else {
      c = in.get();
    }
  }
  if (c == EOF || !std::isdigit(c)) throw FormatError("malformed PGM header: " + path);
  long v = 0;
  while (c != EOF && std::isdigit(c)) {
    v = v * 10 + (c - '0');
    if (v > 1L << 30) throw FormatError("PGM header value out of range: " + path);
    c = in.get();
  }
  return static_cast<int>(v);
}

struct PgmHeader {
  int width, height, maxval;
};

PgmHeader read_pgm_header(std::istream& in, const std::string& path) {
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || magic[1] != '5')
    throw FormatError("not a binary PGM (P5) file: " + path);
  PgmHeader h;
  h.width = read_pnm_int(in, path);
  h.height = read_pnm_int(in, path);
  h.maxval = read_pnm_int(in, path);
  if (h.width <= 0 || h.height <= 0) throw FormatError("bad PGM dimensions: " + path);
  if (h.maxval <= 0 || h.maxval > 65535) throw FormatError("bad PGM maxval: " + path);
  return h;
}

template <typename T>
void write_le(std::ostream& out, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const std::string& path) {
  unsigned char buf[sizeof(T)];
  in.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (!in) throw FormatError("truncated file: " + path);
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

}  // namespace

GrayImage read_pgm(const std::string& path, double pixel_spacing_mm) {
  auto in = open_input(path);
  const PgmHeader h = read_pgm_header(in, path);
  GrayImage img(h.width, h.height, 0.0, pixel_spacing_mm);
  const std::size_t n = img.size();
  const double scale = 1.0 / h.maxval;
  if (h.maxval < 256) {
    std::vector<unsigned char> row(n);
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(n));
    if (!in) throw FormatError("truncated PGM payload: " + path);
    for (std::size_t i = 0; i < n; ++i) img.data[i] = row[i] * scale;
  } else {
    std::vector<unsigned char> raw(n * 2);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n * 2));
    if (!in) throw FormatError("truncated PGM payload: " + path);
    for (std::size_t i = 0; i < n; ++i) {
      const int v = (raw[2 * i] << 8) | raw[2 * i + 1];
      img.data[i] = v * scale;
    }
  }
  return img;
}

void write_pgm16(const GrayImage& img, const std::string& path) {
  auto out = open_output(path);
  char header[64];
  std::snprintf(header, sizeof(header), "P5\n%d %d\n65535\n", img.width, img.height);
  out.write(header, static_cast<std::streamsize>(std::strlen(header)));
  std::vector<unsigned char> raw(img.size() * 2);
  for (std::size_t i = 0; i < img.size(); ++i) {
    double v = img.data[i];
    v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    const int q = static_cast<int>(std::lround(v * 65535.0));
    raw[2 * i] = static_cast<unsigned char>(q >> 8);
    raw[2 * i + 1] = static_cast<unsigned char>(q & 0xff);
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw FormatError("failed writing PGM: " + path);
}

BinaryMask read_mask_pgm(const std::string& path) {
  auto in = open_input(path);
  const PgmHeader h = read_pgm_header(in, path);
  BinaryMask mask(h.width, h.height);
  const std::size_t n = mask.size();
  const int bytes = h.maxval < 256 ? 1 : 2;
  std::vector<unsigned char> raw(n * bytes);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!in) throw FormatError("truncated PGM payload: " + path);
  for (std::size_t i = 0; i < n; ++i) {
    const int v = bytes == 1 ? raw[i] : (raw[2 * i] << 8) | raw[2 * i + 1];
    mask.bits[i] = v != 0 ? 1 : 0;
  }
  return mask;
}

void write_mask_pgm(const BinaryMask& mask, const std::string& path) {
  auto out = open_output(path);
  char header[64];
  std::snprintf(header, sizeof(header), "P5\n%d %d\n255\n", mask.width, mask.height);
  out.write(header, static_cast<std::streamsize>(std::strlen(header)));
  std::vector<unsigned char> raw(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) raw[i] = mask.bits[i] ? 255 : 0;
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw FormatError("failed writing PGM: " + path);
}

void write_mcf1(const ProximityMap& map, const std::string& path) {
  auto out = open_output(path);
  out.write("MCF1", 4);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(map.width));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(map.height));
  write_le<double>(out, map.pixel_spacing_mm);
  for (double v : map.values) write_le<float>(out, static_cast<float>(v));
  if (!out) throw FormatError("failed writing MCF1: " + path);
}

ProximityMap read_mcf1(const std::string& path) {
  auto in = open_input(path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "MCF1", 4) != 0)
    throw FormatError("not an MCF1 file: " + path);
  const auto w = read_le<std::uint32_t>(in, path);
  const auto h = read_le<std::uint32_t>(in, path);
  const double spacing = read_le<double>(in, path);
  if (w == 0 || h == 0 || w > (1u << 20) || h > (1u << 20))
    throw FormatError("bad MCF1 dimensions: " + path);
  if (!(spacing > 0.0) || !std::isfinite(spacing))
    throw FormatError("bad MCF1 pixel spacing: " + path);
  ProximityMap map(static_cast<int>(w), static_cast<int>(h), spacing);
  for (auto& v : map.values) v = read_le<float>(in, path);
  return map;
}

void write_labels_mcf1(const LabeledMask& labels, double pixel_spacing_mm,
                       const std::string& path) {
  ProximityMap map(labels.width, labels.height, pixel_spacing_mm);
  for (std::size_t i = 0; i < map.values.size(); ++i)
    map.values[i] = static_cast<double>(labels.labels[i]);
  write_mcf1(map, path);
}

LabeledMask read_labels_mcf1(const std::string& path, double* pixel_spacing_mm) {
  const ProximityMap map = read_mcf1(path);
  LabeledMask labels(map.width, map.height);
  int max_label = 0;
  for (std::size_t i = 0; i < map.values.size(); ++i) {
    const double v = map.values[i];
    const double r = std::nearbyint(v);
    if (!std::isfinite(v) || std::abs(v - r) > 1e-6 || r < 0.0 || r > 1e9)
      throw FormatError("label payload is not integer-valued: " + path);
    labels.labels[i] = static_cast<std::int32_t>(r);
    if (labels.labels[i] > max_label) max_label = labels.labels[i];
  }
  labels.count = max_label;
  if (pixel_spacing_mm) *pixel_spacing_mm = map.pixel_spacing_mm;
  return labels;
}

}  // namespace mcseg
