#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "idcgan/rng.hpp"
#include "idcgan/tensor.hpp"

namespace idcgan {

// Parameters of the procedural streak renderer. Angles are measured in
// degrees from vertical (0 = straight down), positive tilting right.
struct RainParams {
  double intensity = 0.7;   // streak brightness scale in [0,1]
  double angle_deg = 0.0;   // [-45, 45]
  double density = 25.0;    // expected streaks per 10^4 pixels
  double length_px = 18.0;  // mean streak length
  double width_px = 1.6;    // mean streak width
  std::uint64_t seed = 0;
  enum class Mode { rain, snow } mode = Mode::rain;
};

// Renders an oriented streak field w (single channel, [1,H,W], values in
// [0,1], w >= 0 everywhere). Streak count is Poisson with mean
// density*H*W/1e4; each streak is an anti-aliased capsule at
// angle_deg +- N(0, 2 deg) with length ~ N(length_px, length_px/4),
// alpha-accumulated with the intensity scale; the field is finished with a
// 3x3 binomial blur and clamped to [0,1]. Snow mode draws round kernels
// (length collapsed to the width). Fully determined by the seed.
inline Tensor<float> render_streaks(const RainParams& params, int h, int w) {
  expect(h >= 16 && w >= 16, "render_streaks: image must be at least 16x16");
  expect(params.intensity >= 0.0 && params.intensity <= 1.0,
         "render_streaks: intensity must be in [0,1]");
  expect(params.density > 0.0, "render_streaks: density must be positive");
  expect(params.length_px >= 1.0, "render_streaks: length must be >= 1");
  expect(params.width_px > 0.0, "render_streaks: width must be positive");

  Rng rng(params.seed);
  const double mean_count = params.density * h * w / 1e4;
  const std::int64_t count = rng.poisson(mean_count);

  const bool snow = params.mode == RainParams::Mode::snow;
  const double mean_len = snow ? std::max(1.0, params.width_px) : params.length_px;

  Eigen::ArrayXd field = Eigen::ArrayXd::Zero(static_cast<std::int64_t>(h) * w);
  for (std::int64_t s = 0; s < count; ++s) {
    const double cx = rng.uniform(0.0, w);
    const double cy = rng.uniform(0.0, h);
    const double ang = (params.angle_deg + rng.normal(0.0, 2.0)) * M_PI / 180.0;
    const double len = std::max(1.0, rng.normal(mean_len, mean_len / 4.0));
    const double wid = std::max(0.5, rng.normal(params.width_px, params.width_px / 4.0));
    const double alpha = params.intensity * rng.uniform(0.5, 1.0);
    // direction from vertical: (dx, dy) = (sin a, cos a), y growing downward
    const double dx = std::sin(ang), dy = std::cos(ang);
    const double hx = dx * len / 2.0, hy = dy * len / 2.0;
    const double reach = wid / 2.0 + 1.5;
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - std::abs(hx) - reach)));
    const int x1 = std::min(w - 1, static_cast<int>(std::ceil(cx + std::abs(hx) + reach)));
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - std::abs(hy) - reach)));
    const int y1 = std::min(h - 1, static_cast<int>(std::ceil(cy + std::abs(hy) + reach)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        // distance from the pixel center to the capsule spine
        const double px = x + 0.5 - cx, py = y + 0.5 - cy;
        const double t = std::clamp(px * dx + py * dy, -len / 2.0, len / 2.0);
        const double ex = px - t * dx, ey = py - t * dy;
        const double dist = std::sqrt(ex * ex + ey * ey);
        const double cov = std::clamp(wid / 2.0 + 0.5 - dist, 0.0, 1.0);
        if (cov > 0.0) field[static_cast<std::int64_t>(y) * w + x] += alpha * cov;
      }
    }
  }

  // 3x3 binomial blur ([1,2,1]/4 separable), replicated edges
  Eigen::ArrayXd tmp(field.size());
  auto clampi = [](int i, int n) { return std::min(std::max(i, 0), n - 1); };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::int64_t row = static_cast<std::int64_t>(y) * w;
      tmp[row + x] = 0.25 * (field[row + clampi(x - 1, w)] + 2.0 * field[row + x] +
                             field[row + clampi(x + 1, w)]);
    }
  }
  Tensor<float> out = Tensor<float>::zeros({1, h, w});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double v = 0.25 * (tmp[static_cast<std::int64_t>(clampi(y - 1, h)) * w + x] +
                               2.0 * tmp[static_cast<std::int64_t>(y) * w + x] +
                               tmp[static_cast<std::int64_t>(clampi(y + 1, h)) * w + x]);
      out.data[static_cast<std::int64_t>(y) * w + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return out;
}

// Additive observation model: x = clamp(y + w, 0, 1), the single-channel
// field broadcast over RGB. Rain only brightens, so mean(x) >= mean(y).
inline Tensor<float> composite(const Tensor<float>& clean, const Tensor<float>& field) {
  expect(clean.shape.size() == 3 && clean.dim(0) == 3,
         "composite: clean image must be [3,H,W], got " + to_string(clean.shape));
  expect(field.shape.size() == 3 && field.dim(0) == 1 && field.dim(1) == clean.dim(1) &&
             field.dim(2) == clean.dim(2),
         "composite: field " + to_string(field.shape) + " does not match image " +
             to_string(clean.shape));
  const std::int64_t hw = clean.dim(1) * clean.dim(2);
  Tensor<float> out = Tensor<float>::zeros(clean.shape);
  for (int c = 0; c < 3; ++c) {
    out.data.segment(c * hw, hw) =
        (clean.data.segment(c * hw, hw) + field.data).min(1.0f).max(0.0f);
  }
  return out;
}

}  // namespace idcgan
