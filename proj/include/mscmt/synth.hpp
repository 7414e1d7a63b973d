#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "mscmt/errors.hpp"
#include "mscmt/rng.hpp"
#include "mscmt/sample.hpp"

namespace mscmt {

// Synthetic phantoms: an elliptical "brain" with a bright rim, low-frequency
// interior texture, gaussian pixel noise and salt-and-pepper impulses, plus
// one tumor blob whose geometry encodes the class:
//   0: large star-shaped blob with an irregular boundary, off-center
//   1: small round blob close to the center
//   2: medium smooth round blob out toward the rim
// Classes cycle with the sample index, so counts are balanced to within one.
// Every draw comes from a per-sample generator, so any subset of samples is
// reproducible independently of the others.

namespace detail {

struct Ellipse {
  double cy, cx, a, b;  // a: column semi-axis, b: row semi-axis

  double metric(double r, double c) const {
    double dx = (c - cx) / a, dy = (r - cy) / b;
    return std::sqrt(dx * dx + dy * dy);
  }
};

}  // namespace detail

inline Sample synth_sample(uint64_t seed, int index, int size) {
  Rng rng(mix_seed(seed, static_cast<uint64_t>(index)));
  const int label = index % kNumClasses;
  const double S = size;

  Sample s;
  s.id = "synth-" + std::string(5 - std::min<size_t>(5, std::to_string(index).size()), '0') +
         std::to_string(index);
  s.label = label;
  s.patient_id = "p" + std::to_string(label) + "-" +
                 std::to_string(index / kNumClasses / 4);
  s.image = Image(size, size);
  s.mask = Mask(size, size);

  detail::Ellipse brain{S * rng.uniform(0.48, 0.52), S * rng.uniform(0.48, 0.52),
                        S * rng.uniform(0.33, 0.38), S * rng.uniform(0.36, 0.44)};

  struct Wave {
    double amp, fr, fc, phase;
  };
  Wave waves[3];
  for (auto& w : waves)
    w = {rng.uniform(0.02, 0.05), rng.uniform(0.5, 3.0) * 2.0 * M_PI / S,
         rng.uniform(0.5, 3.0) * 2.0 * M_PI / S, rng.uniform(0.0, 2.0 * M_PI)};

  // Tumor placement: center at fraction t of the scaled radius along a random
  // direction. The largest blob radius is kept under min(a,b)*(1-t) minus a
  // margin, which bounds the distance to the ellipse boundary from below.
  const double psi = rng.uniform(0.0, 2.0 * M_PI);
  double t = 0, radius = 0, star_amp = 0;
  double star_k[3] = {0, 0, 0}, star_p[3] = {0, 0, 0};
  switch (label) {
    case 0: {
      t = rng.uniform(0.0, 0.15);
      radius = S * rng.uniform(0.13, 0.17);
      star_amp = 0.3;
      double mag = 0;
      for (int i = 0; i < 3; ++i) {
        star_k[i] = rng.uniform(-1.0, 1.0);
        star_p[i] = rng.uniform(0.0, 2.0 * M_PI);
        mag += std::abs(star_k[i]);
      }
      for (double& k : star_k) k /= mag;
      break;
    }
    case 1:
      t = rng.uniform(0.0, 0.08);
      radius = S * rng.uniform(0.04, 0.055);
      break;
    case 2:
      t = rng.uniform(0.45, 0.58);
      radius = S * rng.uniform(0.085, 0.095);
      break;
  }
  const double tum_cy = brain.cy + brain.b * t * std::sin(psi);
  const double tum_cx = brain.cx + brain.a * t * std::cos(psi);
  const double fit = std::min(brain.a, brain.b) * (1.0 - t) - 2.0;
  const double max_radius = radius * (1.0 + star_amp);
  if (max_radius > fit)
    throw DataError("phantom " + s.id + ": tumor does not fit the brain ellipse");

  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      const double m = brain.metric(r, c);
      double v;
      if (m > 1.0) {
        v = 0.02 + 0.005 * std::abs(rng.gaussian());
      } else if (m > 0.93) {
        v = 0.75 + 0.02 * rng.gaussian();
      } else {
        v = 0.32 + 0.12 * (1.0 - m);
        for (const auto& w : waves) v += w.amp * std::cos(w.fr * r + w.fc * c + w.phase);
        v += 0.015 * rng.gaussian();
      }
      const double dr = r - tum_cy, dc = c - tum_cx;
      const double dist = std::hypot(dr, dc);
      double bound = radius;
      if (star_amp > 0) {
        const double phi = std::atan2(dr, dc);
        double mod = 0;
        for (int i = 0; i < 3; ++i) mod += star_k[i] * std::cos((i + 3) * phi + star_p[i]);
        bound = radius * (1.0 + star_amp * mod);
      }
      if (dist < bound) {
        s.mask.at(r, c) = 1;
        switch (label) {
          case 0: v = 0.62 + 0.08 * std::cos(0.25 * dr) * std::sin(0.21 * dc) +
                      0.03 * rng.gaussian();
            break;
          case 1: v = 0.68 + 0.02 * rng.gaussian(); break;
          case 2: v = 0.66 - 0.08 * (dist / radius) + 0.015 * rng.gaussian(); break;
        }
      } else if (dist < bound + 1.5 && m <= 0.93) {
        // soft edge on the image only; the mask stays a hard predicate
        const double blend = (dist - bound) / 1.5;
        v = v * blend + (0.64 - 0.1 * blend) * (1.0 - blend);
      }
      s.image.at(r, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }

  const int impulses = std::max(8, size * size * 3 / 1000);
  for (int i = 0; i < impulses; ++i) {
    int r = rng.uniform_int(size), c = rng.uniform_int(size);
    s.image.at(r, c) = rng.uniform() < 0.5 ? 0.0f : 1.0f;
  }

  if (s.mask.count() == 0) throw DataError("phantom " + s.id + ": empty tumor mask");
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c)
      if (s.mask.at(r, c) && brain.metric(r, c) > 1.0)
        throw DataError("phantom " + s.id + ": tumor leaks outside the brain");
  return s;
}

inline std::vector<Sample> synth_generate(int n, uint64_t seed, int size = 128) {
  if (n < 1) throw UsageError("synth_generate: n must be >= 1");
  if (size < 48) throw UsageError("synth_generate: size must be >= 48 for the blobs to fit");
  std::vector<Sample> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back(synth_sample(seed, i, size));
  return out;
}

}  // namespace mscmt
