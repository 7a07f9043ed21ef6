#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "idcgan/tensor.hpp"

namespace idcgan {

// Single-channel image in [0,1], row-major H x W, 64-bit. All quality
// measures run on such luminance planes.
struct Plane {
  int h = 0, w = 0;
  Eigen::ArrayXd v;

  double at(int i, int j) const { return v[static_cast<std::int64_t>(i) * w + j]; }
};

// BT.601 luminance of an RGB image laid out [3,H,W] (values in [0,1]).
template <typename Scalar>
Plane luminance(const Tensor<Scalar>& rgb) {
  expect(rgb.shape.size() == 3 && rgb.dim(0) == 3,
         "luminance: input must be [3,H,W], got " + to_string(rgb.shape));
  Plane p;
  p.h = static_cast<int>(rgb.dim(1));
  p.w = static_cast<int>(rgb.dim(2));
  const std::int64_t hw = static_cast<std::int64_t>(p.h) * p.w;
  p.v.resize(hw);
  for (std::int64_t i = 0; i < hw; ++i) {
    p.v[i] = 0.299 * static_cast<double>(rgb.data[i]) +
             0.587 * static_cast<double>(rgb.data[hw + i]) +
             0.114 * static_cast<double>(rgb.data[2 * hw + i]);
  }
  return p;
}

namespace metrics_detail {

inline void check_pair(const Plane& a, const Plane& b, const char* who, int min_dim) {
  expect(a.h == b.h && a.w == b.w, std::string(who) + ": image size mismatch");
  expect(std::min(a.h, a.w) >= min_dim,
         std::string(who) + ": image smaller than the " + std::to_string(min_dim) + "-px window");
}

inline std::vector<double> gaussian_kernel(double sigma, int radius) {
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    sum += v;
  }
  for (double& v : k) v /= sum;
  return k;
}

// Separable filtering keeping only fully-covered (valid) positions.
inline Eigen::ArrayXd filter_valid(const Eigen::ArrayXd& img, int h, int w,
                                   const std::vector<double>& k) {
  const int r = static_cast<int>(k.size());
  const int ow = w - r + 1, oh = h - r + 1;
  Eigen::ArrayXd tmp(static_cast<std::int64_t>(h) * ow);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < ow; ++j) {
      double acc = 0.0;
      for (int t = 0; t < r; ++t) acc += k[static_cast<std::size_t>(t)] * img[static_cast<std::int64_t>(i) * w + j + t];
      tmp[static_cast<std::int64_t>(i) * ow + j] = acc;
    }
  }
  Eigen::ArrayXd out(static_cast<std::int64_t>(oh) * ow);
  for (int i = 0; i < oh; ++i) {
    for (int j = 0; j < ow; ++j) {
      double acc = 0.0;
      for (int t = 0; t < r; ++t) acc += k[static_cast<std::size_t>(t)] * tmp[static_cast<std::int64_t>(i + t) * ow + j];
      out[static_cast<std::int64_t>(i) * ow + j] = acc;
    }
  }
  return out;
}

// Same-size filtering with half-sample symmetric (reflected) borders.
inline Eigen::ArrayXd filter_same_reflect(const Eigen::ArrayXd& img, int h, int w,
                                          const std::vector<double>& k) {
  const int r = (static_cast<int>(k.size()) - 1) / 2;
  auto reflect = [](int i, int n) {
    while (i < 0 || i >= n) {
      if (i < 0) i = -i - 1;
      if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
  };
  Eigen::ArrayXd tmp(static_cast<std::int64_t>(h) * w), out(static_cast<std::int64_t>(h) * w);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      double acc = 0.0;
      for (int t = -r; t <= r; ++t)
        acc += k[static_cast<std::size_t>(t + r)] * img[static_cast<std::int64_t>(i) * w + reflect(j + t, w)];
      tmp[static_cast<std::int64_t>(i) * w + j] = acc;
    }
  }
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      double acc = 0.0;
      for (int t = -r; t <= r; ++t)
        acc += k[static_cast<std::size_t>(t + r)] * tmp[static_cast<std::int64_t>(reflect(i + t, h)) * w + j];
      out[static_cast<std::int64_t>(i) * w + j] = acc;
    }
  }
  return out;
}

inline Eigen::ArrayXd downsample2(const Eigen::ArrayXd& img, int h, int w, int& oh, int& ow) {
  oh = (h + 1) / 2;
  ow = (w + 1) / 2;
  Eigen::ArrayXd out(static_cast<std::int64_t>(oh) * ow);
  for (int i = 0; i < oh; ++i)
    for (int j = 0; j < ow; ++j)
      out[static_cast<std::int64_t>(i) * ow + j] = img[static_cast<std::int64_t>(2 * i) * w + 2 * j];
  return out;
}

// Summed-area table with a zero top row / left column.
inline Eigen::ArrayXd sat(const Eigen::ArrayXd& img, int h, int w) {
  Eigen::ArrayXd s((static_cast<std::int64_t>(h) + 1) * (w + 1));
  s.setZero();
  for (int i = 0; i < h; ++i) {
    double rowsum = 0.0;
    for (int j = 0; j < w; ++j) {
      rowsum += img[static_cast<std::int64_t>(i) * w + j];
      s[static_cast<std::int64_t>(i + 1) * (w + 1) + (j + 1)] =
          s[static_cast<std::int64_t>(i) * (w + 1) + (j + 1)] + rowsum;
    }
  }
  return s;
}

inline double sat_window(const Eigen::ArrayXd& s, int w, int i, int j, int bs) {
  const int stride = w + 1;
  return s[static_cast<std::int64_t>(i + bs) * stride + (j + bs)] -
         s[static_cast<std::int64_t>(i) * stride + (j + bs)] -
         s[static_cast<std::int64_t>(i + bs) * stride + j] +
         s[static_cast<std::int64_t>(i) * stride + j];
}

}  // namespace metrics_detail

// Peak signal-to-noise ratio against peak level 1; identical images (and any
// value beyond it) report the 99 dB cap so reports stay numeric.
inline double psnr(const Plane& ref, const Plane& test) {
  metrics_detail::check_pair(ref, test, "psnr", 1);
  const double mse = (ref.v - test.v).square().sum() / static_cast<double>(ref.v.size());
  if (mse <= 0.0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

// Windowed SSIM: 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03, L=1,
// averaged over all fully-covered window positions.
inline double ssim(const Plane& ref, const Plane& test) {
  using namespace metrics_detail;
  check_pair(ref, test, "ssim", 11);
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const auto k = gaussian_kernel(1.5, 5);
  const auto mu1 = filter_valid(ref.v, ref.h, ref.w, k);
  const auto mu2 = filter_valid(test.v, test.h, test.w, k);
  const auto e11 = filter_valid(ref.v * ref.v, ref.h, ref.w, k);
  const auto e22 = filter_valid(test.v * test.v, test.h, test.w, k);
  const auto e12 = filter_valid(ref.v * test.v, ref.h, ref.w, k);
  double acc = 0.0;
  for (std::int64_t i = 0; i < mu1.size(); ++i) {
    const double m12 = mu1[i] * mu2[i];
    const double m11 = mu1[i] * mu1[i], m22 = mu2[i] * mu2[i];
    const double s11 = e11[i] - m11, s22 = e22[i] - m22, s12 = e12[i] - m12;
    const double num = (2.0 * m12 + c1) * (2.0 * s12 + c2);
    const double den = (m11 + m22 + c1) * (s11 + s22 + c2);
    acc += num / den;
  }
  return acc / static_cast<double>(mu1.size());
}

// Universal quality index over a sliding 8x8 uniform window, with the
// original degenerate-denominator conventions (luminance-only comparison
// when both windows are constant, 1 when both statistics vanish).
inline double uqi(const Plane& ref, const Plane& test) {
  using namespace metrics_detail;
  check_pair(ref, test, "uqi", 8);
  constexpr int bs = 8;
  constexpr double n = 64.0;
  const auto sx = sat(ref.v, ref.h, ref.w);
  const auto sy = sat(test.v, test.h, test.w);
  const auto sxx = sat(ref.v * ref.v, ref.h, ref.w);
  const auto syy = sat(test.v * test.v, test.h, test.w);
  const auto sxy = sat(ref.v * test.v, ref.h, ref.w);
  const int oh = ref.h - bs + 1, ow = ref.w - bs + 1;
  double acc = 0.0;
  for (int i = 0; i < oh; ++i) {
    for (int j = 0; j < ow; ++j) {
      const double mx = sat_window(sx, ref.w, i, j, bs) / n;
      const double my = sat_window(sy, ref.w, i, j, bs) / n;
      const double vx = sat_window(sxx, ref.w, i, j, bs) / n - mx * mx;
      const double vy = sat_window(syy, ref.w, i, j, bs) / n - my * my;
      const double cxy = sat_window(sxy, ref.w, i, j, bs) / n - mx * my;
      const double d1 = vx + vy;
      const double d2 = mx * mx + my * my;
      double q = 1.0;
      if (d1 == 0.0 && d2 != 0.0) {
        q = (2.0 * (mx * my)) / d2;
      } else if (d1 * d2 != 0.0) {
        q = ((4.0 * cxy) * (mx * my)) / (d1 * d2);
      }
      acc += q;
    }
  }
  return acc / (static_cast<double>(oh) * ow);
}

// Pixel-domain visual information fidelity: 4 scales, scale s smoothed with
// a Gaussian of sigma 2^(4-s)/5 (kernel width 2*ceil(3*sigma)+1) and
// downsampled x2 after the first scale; local statistics with noise
// stabilizer sigma_n^2 = 2; ratio of summed log-information terms. The
// stabilizer is calibrated for 8-bit luminance, so the planes are evaluated
// on the 0-255 scale.
inline double vif(const Plane& ref, const Plane& test) {
  using namespace metrics_detail;
  check_pair(ref, test, "vif", 32);
  if (ref.v.size() == test.v.size() && (ref.v == test.v).all()) return 1.0;
  constexpr double sigma_nsq = 2.0;
  Eigen::ArrayXd r = 255.0 * ref.v, d = 255.0 * test.v;
  int h = ref.h, w = ref.w;
  double num = 0.0, den = 0.0;
  for (int s = 1; s <= 4; ++s) {
    const double sigma = std::pow(2.0, 4 - s) / 5.0;
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    const auto k = gaussian_kernel(sigma, radius);
    if (s > 1) {
      const auto rs = filter_same_reflect(r, h, w, k);
      const auto ds = filter_same_reflect(d, h, w, k);
      int oh = 0, ow = 0;
      r = downsample2(rs, h, w, oh, ow);
      d = downsample2(ds, h, w, oh, ow);
      h = oh;
      w = ow;
    }
    const auto mu1 = filter_same_reflect(r, h, w, k);
    const auto mu2 = filter_same_reflect(d, h, w, k);
    const auto e11 = filter_same_reflect(r * r, h, w, k);
    const auto e22 = filter_same_reflect(d * d, h, w, k);
    const auto e12 = filter_same_reflect(r * d, h, w, k);
    for (std::int64_t i = 0; i < mu1.size(); ++i) {
      double s1 = std::max(0.0, e11[i] - mu1[i] * mu1[i]);
      double s2 = std::max(0.0, e22[i] - mu2[i] * mu2[i]);
      const double s12 = e12[i] - mu1[i] * mu2[i];
      double g = s12 / (s1 + 1e-10);
      double sv = s2 - g * s12;
      if (s1 < 1e-10) {
        g = 0.0;
        sv = s2;
        s1 = 0.0;
      }
      if (s2 < 1e-10) {
        g = 0.0;
        sv = 0.0;
      }
      if (g < 0.0) {
        sv = s2;
        g = 0.0;
      }
      sv = std::max(sv, 1e-10);
      num += std::log10(1.0 + g * g * s1 / (sv + sigma_nsq));
      den += std::log10(1.0 + s1 / sigma_nsq);
    }
  }
  return den > 0.0 ? num / den : 1.0;
}

struct MetricSelection {
  bool psnr = true, ssim = true, uqi = true, vif = true;
};

struct MetricRow {
  std::string file;
  double psnr_db = 0.0, ssim = 0.0, uqi = 0.0, vif = 0.0;
};

struct MetricReport {
  std::vector<MetricRow> rows;
  MetricRow mean;  // file == "MEAN"
};

struct EvalPair {
  std::string name;
  Tensor<float> ref, test;  // RGB [3,H,W] in [0,1]
};

// Per-image rows plus corpus means; luminance conversion is applied before
// every measure.
inline MetricReport evaluate_corpus(const std::vector<EvalPair>& pairs,
                                    const MetricSelection& sel = {}) {
  expect(!pairs.empty(), "evaluate_corpus: need at least one pair");
  MetricReport rep;
  rep.mean.file = "MEAN";
  for (const auto& p : pairs) {
    const Plane ref = luminance(p.ref);
    const Plane test = luminance(p.test);
    MetricRow row;
    row.file = p.name;
    if (sel.psnr) row.psnr_db = psnr(ref, test);
    if (sel.ssim) row.ssim = ssim(ref, test);
    if (sel.uqi) row.uqi = uqi(ref, test);
    if (sel.vif) row.vif = vif(ref, test);
    rep.mean.psnr_db += row.psnr_db;
    rep.mean.ssim += row.ssim;
    rep.mean.uqi += row.uqi;
    rep.mean.vif += row.vif;
    rep.rows.push_back(std::move(row));
  }
  const double n = static_cast<double>(rep.rows.size());
  rep.mean.psnr_db /= n;
  rep.mean.ssim /= n;
  rep.mean.uqi /= n;
  rep.mean.vif /= n;
  return rep;
}

}  // namespace idcgan
