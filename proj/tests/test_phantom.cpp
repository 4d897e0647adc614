#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "mcseg/core.hpp"
#include "mcseg/phantom.hpp"
#include "test_util.hpp"

using namespace mcseg;

TEST_SUITE("phantom") {

TEST_CASE("generation is reproducible per seed") {
  PhantomSpec spec;
  spec.width = 128;
  spec.height = 128;
  spec.blob_count = 8;
  Phantom a = generate_phantom(spec, 77);
  Phantom b = generate_phantom(spec, 77);
  CHECK(a.image.data == b.image.data);
  CHECK(a.truth.bits == b.truth.bits);
  CHECK(a.annotations.bits == b.annotations.bits);
  REQUIRE(a.blobs.size() == b.blobs.size());
  for (std::size_t i = 0; i < a.blobs.size(); ++i) {
    CHECK(a.blobs[i].cx == b.blobs[i].cx);
    CHECK(a.blobs[i].contrast == b.blobs[i].contrast);
  }

  Phantom c = generate_phantom(spec, 78);
  CHECK(a.image.data != c.image.data);
}

TEST_CASE("blob parameters respect the requested ranges") {
  PhantomSpec spec;
  spec.width = 256;
  spec.height = 256;
  spec.blob_count = 25;
  spec.radius_min_px = 2.0;
  spec.radius_max_px = 6.0;
  spec.contrast_min = 0.1;
  spec.contrast_max = 0.3;
  spec.clusters = 3;
  spec.archetype = "grouped";
  Phantom ph = generate_phantom(spec, 5);
  REQUIRE(ph.blobs.size() == 25);
  const double half_max = std::sqrt(2.0 * std::log(2.0));
  for (std::size_t i = 0; i < ph.blobs.size(); ++i) {
    const PhantomBlob& blob = ph.blobs[i];
    CHECK(blob.radius_px >= 2.0);
    CHECK(blob.radius_px <= 6.0);
    CHECK(blob.contrast >= 0.1);
    CHECK(blob.contrast <= 0.3);
    CHECK(blob.sigma_px == doctest::Approx(blob.radius_px / half_max));
    CHECK(blob.cluster == static_cast<int>(i) % 3);  // round-robin group assignment
    // Centers stay inside the safety margin.
    CHECK(blob.cx >= 0.0);
    CHECK(blob.cx <= 255.0);
  }
  CHECK(ph.archetype == "grouped");
}

TEST_CASE("well separated blobs produce one truth object each") {
  PhantomSpec spec;
  spec.width = 448;
  spec.height = 448;
  spec.blob_count = 20;
  spec.radius_max_px = 6.0;
  spec.min_center_dist_px = 24.0;  // 4x the max radius
  Phantom ph = generate_phantom(spec, 11);
  CHECK(ph.truth_labels.count == 20);

  // Annotations live inside the truth discs.
  for (std::size_t i = 0; i < ph.annotations.bits.size(); ++i)
    if (ph.annotations.bits[i]) CHECK(ph.truth.bits[i] == 1);

  // Pairwise separation is honored.
  for (std::size_t i = 0; i < ph.blobs.size(); ++i)
    for (std::size_t j = i + 1; j < ph.blobs.size(); ++j) {
      const double dx = ph.blobs[i].cx - ph.blobs[j].cx;
      const double dy = ph.blobs[i].cy - ph.blobs[j].cy;
      CHECK(std::sqrt(dx * dx + dy * dy) >= 24.0);
    }
}

TEST_CASE("truth discs follow the half-max radius convention") {
  PhantomSpec spec;
  spec.width = 64;
  spec.height = 64;
  spec.blob_count = 1;
  spec.radius_min_px = spec.radius_max_px = 5.0;
  spec.background_amplitude = 0.0;
  spec.noise_stdev = 0.0;
  spec.contrast_min = spec.contrast_max = 0.2;
  Phantom ph = generate_phantom(spec, 3);
  REQUIRE(ph.blobs.size() == 1);
  const PhantomBlob& blob = ph.blobs[0];

  // With a flat background and no noise the image is exactly the analytic
  // profile: a truncated Gaussian bump whose value at the disc edge is half
  // the peak contrast.
  const double reach2 = 9.0 * blob.sigma_px * blob.sigma_px;
  const double inv2s2 = 1.0 / (2.0 * blob.sigma_px * blob.sigma_px);
  double worst = 0.0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      const double d2 = (x - blob.cx) * (x - blob.cx) + (y - blob.cy) * (y - blob.cy);
      CHECK(ph.truth.at(x, y) == (d2 <= 25.0 ? 1 : 0));
      double want = spec.background_level;
      if (d2 <= reach2) want += blob.contrast * std::exp(-d2 * inv2s2);
      worst = std::max(worst, std::abs(ph.image.at(x, y) - want));
    }
  CHECK(worst < 1e-12);
  const double ratio = std::exp(-25.0 * inv2s2);
  CHECK(ratio == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("small blobs annotate a single pixel, large ones the full disc") {
  PhantomSpec spec;
  spec.width = 96;
  spec.height = 96;
  spec.blob_count = 1;
  spec.noise_stdev = 0.0;
  spec.background_amplitude = 0.0;

  spec.radius_min_px = spec.radius_max_px = 2.0;
  Phantom tiny = generate_phantom(spec, 9);
  CHECK(tiny.annotations.count() == 1);
  CHECK(tiny.truth.count() > 1);

  spec.radius_min_px = spec.radius_max_px = 4.0;
  Phantom big = generate_phantom(spec, 9);
  CHECK(big.annotations.count() == big.truth.count());
  CHECK(big.annotations.bits == big.truth.bits);
}

TEST_CASE("zero blobs give clean masks, noise applies last") {
  PhantomSpec spec;
  spec.width = 64;
  spec.height = 64;
  spec.blob_count = 0;
  Phantom empty = generate_phantom(spec, 21);
  CHECK(empty.truth.count() == 0);
  CHECK(empty.annotations.count() == 0);
  CHECK(empty.truth_labels.count == 0);
  CHECK(empty.blobs.empty());

  // Disabling pixel noise changes the image but not the geometry.
  PhantomSpec noisy = spec;
  noisy.blob_count = 4;
  PhantomSpec silent = noisy;
  silent.noise_stdev = 0.0;
  Phantom with_noise = generate_phantom(noisy, 33);
  Phantom without = generate_phantom(silent, 33);
  CHECK(with_noise.truth.bits == without.truth.bits);
  CHECK(with_noise.image.data != without.image.data);
  double diff = 0.0;
  for (std::size_t i = 0; i < with_noise.image.size(); ++i)
    diff = std::max(diff, std::abs(with_noise.image.data[i] - without.image.data[i]));
  CHECK(diff < 6.0 * noisy.noise_stdev);  // bounded by the tail of the pixel noise
}

TEST_CASE("archetypes shape the blob layout") {
  PhantomSpec spec;
  spec.width = 320;
  spec.height = 320;
  spec.blob_count = 24;
  spec.clusters = 3;
  spec.cluster_spread_px = 10.0;

  spec.archetype = "grouped";
  Phantom grouped = generate_phantom(spec, 41);
  // Blobs of one group stay near their shared anchor: within-group pairwise
  // distances are far below the image diagonal.
  for (int g = 0; g < 3; ++g) {
    double max_d = 0.0;
    for (std::size_t i = 0; i < grouped.blobs.size(); ++i)
      for (std::size_t j = i + 1; j < grouped.blobs.size(); ++j) {
        if (grouped.blobs[i].cluster != g || grouped.blobs[j].cluster != g) continue;
        const double dx = grouped.blobs[i].cx - grouped.blobs[j].cx;
        const double dy = grouped.blobs[i].cy - grouped.blobs[j].cy;
        max_d = std::max(max_d, std::sqrt(dx * dx + dy * dy));
      }
    CHECK(max_d < 80.0);
  }

  spec.archetype = "linear";
  spec.clusters = 1;
  Phantom linear = generate_phantom(spec, 43);
  // Principal axis carries almost all the variance.
  double mx = 0.0, my = 0.0;
  for (const auto& blob : linear.blobs) {
    mx += blob.cx;
    my += blob.cy;
  }
  mx /= linear.blobs.size();
  my /= linear.blobs.size();
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (const auto& blob : linear.blobs) {
    sxx += (blob.cx - mx) * (blob.cx - mx);
    syy += (blob.cy - my) * (blob.cy - my);
    sxy += (blob.cx - mx) * (blob.cy - my);
  }
  const double tr = sxx + syy;
  const double disc = std::sqrt((sxx - syy) * (sxx - syy) + 4.0 * sxy * sxy);
  const double l1 = 0.5 * (tr + disc);
  CHECK(l1 / tr > 0.9);

  CHECK_NOTHROW((void)generate_phantom([&] {
    PhantomSpec s = spec;
    s.archetype = "regional";
    return s;
  }(), 45));
  CHECK_NOTHROW((void)generate_phantom([&] {
    PhantomSpec s = spec;
    s.archetype = "segmental";
    return s;
  }(), 46));
}

TEST_CASE("invalid specifications are parameter errors") {
  PhantomSpec spec;
  spec.archetype = "swirl";
  CHECK_THROWS_AS((void)generate_phantom(spec, 1), ParameterError);

  spec = PhantomSpec{};
  spec.width = 8;
  CHECK_THROWS_AS((void)generate_phantom(spec, 1), ParameterError);

  spec = PhantomSpec{};
  spec.contrast_min = 0.001;  // below the pixel noise
  spec.contrast_max = 0.001;
  CHECK_THROWS_AS((void)generate_phantom(spec, 1), ParameterError);

  spec = PhantomSpec{};
  spec.radius_min_px = 5.0;
  spec.radius_max_px = 3.0;
  CHECK_THROWS_AS((void)generate_phantom(spec, 1), ParameterError);

  // A tiny canvas cannot hold the default blob radii margin.
  spec = PhantomSpec{};
  spec.width = 20;
  spec.height = 20;
  CHECK_THROWS_AS((void)generate_phantom(spec, 1), ParameterError);
}

TEST_CASE("impossible packing is a data error") {
  PhantomSpec spec;
  spec.width = 128;
  spec.height = 128;
  spec.blob_count = 30;
  spec.min_center_dist_px = 100.0;  // cannot fit 30 such centers
  CHECK_THROWS_AS((void)generate_phantom(spec, 2), DataError);
}

}  // TEST_SUITE
