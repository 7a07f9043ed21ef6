#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "idcgan/ops.hpp"
#include "idcgan/rng.hpp"

namespace idcgan {

// Ordered map from canonical parameter name (e.g. "g.enc3.conv.kernel") to
// its tensor. The name set is determined solely by the network config.
template <typename Scalar>
using WeightStore = std::map<std::string, Tensor<Scalar>>;

// Generator: CBP(K)x4, CBP(K/2), CBP(1), DBR(K/2), DBR(K)x4, DBR(3), Tanh.
// All kernels 3x3, stride 1, pad 1. Skips: enc2 output is added to the dec4
// output, enc4 output to the dec2 output (the two K-channel pairs).
struct GeneratorConfig {
  int width = 64;  // K; must be even (the layer string uses K/2)
};

// Discriminator: CB(K2), CBP(2K2), CBP(4K2), CBP(8K2), C(1), Sigmoid.
// First three layers 4x4 stride 2 pad 1, last two 4x4 stride 1 pad 1; the
// sigmoid patch map is reduced to one probability per sample by spatial mean.
struct DiscriminatorConfig {
  int width = 48;  // K2
};

// Frozen feature network mirroring the VGG-16 front up to its second block:
// conv3-64, ReLU, conv3-64, ReLU, maxpool2, conv3-128, ReLU, conv3-128, ReLU.
// Weights are either seeded random or supplied via a checkpoint; they never
// receive gradient updates.
struct PerceptualConfig {
  enum class Source { seeded_random, checkpoint };
  Source source = Source::seeded_random;
  std::string checkpoint_path;
};

namespace detail {

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// Per-tensor stream so the draw order never depends on map iteration.
template <typename Scalar>
Tensor<Scalar> gaussian_tensor(Shape shape, std::uint64_t seed, const std::string& name,
                               double stddev) {
  Rng rng(splitmix64(seed) ^ fnv1a64(name));
  Tensor<Scalar> t = Tensor<Scalar>::zeros(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) {
    t.data[i] = static_cast<Scalar>(rng.normal(0.0, stddev));
  }
  return t;
}

template <typename Scalar>
void add_conv(WeightStore<Scalar>& w, const std::string& prefix, Shape kernel_shape,
              std::int64_t cout, std::uint64_t seed) {
  w.emplace(prefix + ".kernel",
            gaussian_tensor<Scalar>(std::move(kernel_shape), seed, prefix + ".kernel", 0.02));
  w.emplace(prefix + ".bias", Tensor<Scalar>::zeros({cout}));
}

template <typename Scalar>
void add_bn(WeightStore<Scalar>& w, const std::string& prefix, std::int64_t c) {
  w.emplace(prefix + ".gamma", Tensor<Scalar>::constant({c}, Scalar(1)));
  w.emplace(prefix + ".beta", Tensor<Scalar>::zeros({c}));
  w.emplace(prefix + ".running_mean", Tensor<Scalar>::zeros({c}));
  w.emplace(prefix + ".running_var", Tensor<Scalar>::constant({c}, Scalar(1)));
}

template <typename Scalar>
void add_prelu(WeightStore<Scalar>& w, const std::string& prefix, std::int64_t c) {
  w.emplace(prefix + ".slope", Tensor<Scalar>::constant({c}, Scalar(0.25)));
}

template <typename Scalar>
Tensor<Scalar>& param(WeightStore<Scalar>& w, const std::string& name) {
  auto it = w.find(name);
  expect(it != w.end(), "missing parameter '" + name + "' (weight store does not match config)");
  return it->second;
}

template <typename Scalar>
const Tensor<Scalar>& param(const WeightStore<Scalar>& w, const std::string& name) {
  auto it = w.find(name);
  expect(it != w.end(), "missing parameter '" + name + "' (weight store does not match config)");
  return it->second;
}

inline void generator_widths(const GeneratorConfig& cfg, int enc_out[6], int dec_out[6]) {
  const int k = cfg.width;
  expect(k >= 2 && k % 2 == 0, "generator width must be even and >= 2");
  enc_out[0] = k;
  enc_out[1] = k;
  enc_out[2] = k;
  enc_out[3] = k;
  enc_out[4] = k / 2;
  enc_out[5] = 1;
  dec_out[0] = k / 2;
  dec_out[1] = k;
  dec_out[2] = k;
  dec_out[3] = k;
  dec_out[4] = k;
  dec_out[5] = 3;
}

}  // namespace detail

template <typename Scalar>
WeightStore<Scalar> init_weights(const GeneratorConfig& cfg, std::uint64_t seed) {
  int enc[6], dec[6];
  detail::generator_widths(cfg, enc, dec);
  WeightStore<Scalar> w;
  int cin = 3;
  for (int i = 0; i < 6; ++i) {
    const std::string p = "g.enc" + std::to_string(i + 1);
    detail::add_conv(w, p + ".conv", {enc[i], cin, 3, 3}, enc[i], seed);
    detail::add_bn(w, p + ".bn", enc[i]);
    detail::add_prelu(w, p + ".prelu", enc[i]);
    cin = enc[i];
  }
  for (int i = 0; i < 6; ++i) {
    const std::string p = "g.dec" + std::to_string(i + 1);
    // deconv kernels are stored [Cin, Cout, kh, kw]
    detail::add_conv(w, p + ".conv", {cin, dec[i], 3, 3}, dec[i], seed);
    detail::add_bn(w, p + ".bn", dec[i]);
    cin = dec[i];
  }
  return w;
}

template <typename Scalar>
WeightStore<Scalar> init_weights(const DiscriminatorConfig& cfg, std::uint64_t seed) {
  const int k2 = cfg.width;
  expect(k2 >= 1, "discriminator width must be positive");
  const int widths[5] = {k2, 2 * k2, 4 * k2, 8 * k2, 1};
  WeightStore<Scalar> w;
  int cin = 6;  // condition and candidate are channel-concatenated
  for (int i = 0; i < 5; ++i) {
    const std::string p = "d.l" + std::to_string(i + 1);
    detail::add_conv(w, p + ".conv", {widths[i], cin, 4, 4}, widths[i], seed);
    if (i < 4) detail::add_bn(w, p + ".bn", widths[i]);
    if (i >= 1 && i < 4) detail::add_prelu(w, p + ".prelu", widths[i]);
    cin = widths[i];
  }
  return w;
}

template <typename Scalar>
WeightStore<Scalar> init_weights(const PerceptualConfig&, std::uint64_t seed) {
  WeightStore<Scalar> w;
  detail::add_conv(w, "v.conv1", {64, 3, 3, 3}, 64, seed);
  detail::add_conv(w, "v.conv2", {64, 64, 3, 3}, 64, seed);
  detail::add_conv(w, "v.conv3", {128, 64, 3, 3}, 128, seed);
  detail::add_conv(w, "v.conv4", {128, 128, 3, 3}, 128, seed);
  return w;
}

// Parameters that receive optimizer updates (running statistics are state,
// not trainable parameters).
inline bool is_trainable_param(const std::string& name) {
  return name.find(".running_") == std::string::npos;
}

// Symmetric skip-connected generator; maps [N,3,H,W] in [-1,1] to the same
// shape, Tanh tail. Spatially size-preserving (all strides are 1).
template <typename Scalar>
Tensor<Scalar> generator_forward(Tape<Scalar>* tape, const Tensor<Scalar>& x,
                                 WeightStore<Scalar>& w, const GeneratorConfig& cfg, Mode mode) {
  expect(x.shape.size() == 4 && x.dim(1) == 3,
         "generator: input must be [N,3,H,W], got " + to_string(x.shape));
  expect(x.dim(2) >= 8 && x.dim(3) >= 8, "generator: spatial dims must be >= 8");
  int enc[6], dec[6];
  detail::generator_widths(cfg, enc, dec);

  auto cbp = [&](int i, const Tensor<Scalar>& in) {
    const std::string p = "g.enc" + std::to_string(i);
    auto y = conv2d(tape, in, detail::param(w, p + ".conv.kernel"),
                    detail::param(w, p + ".conv.bias"), 1, 1);
    y = batchnorm(tape, y, detail::param(w, p + ".bn.gamma"), detail::param(w, p + ".bn.beta"),
                  detail::param(w, p + ".bn.running_mean"),
                  detail::param(w, p + ".bn.running_var"), mode);
    return prelu(tape, y, detail::param(w, p + ".prelu.slope"));
  };
  auto dbr = [&](int i, const Tensor<Scalar>& in) {
    const std::string p = "g.dec" + std::to_string(i);
    auto y = deconv2d(tape, in, detail::param(w, p + ".conv.kernel"),
                      detail::param(w, p + ".conv.bias"), 1, 1);
    y = batchnorm(tape, y, detail::param(w, p + ".bn.gamma"), detail::param(w, p + ".bn.beta"),
                  detail::param(w, p + ".bn.running_mean"),
                  detail::param(w, p + ".bn.running_var"), mode);
    return relu(tape, y);
  };

  auto c1 = cbp(1, x);
  auto c2 = cbp(2, c1);
  auto c3 = cbp(3, c2);
  auto c4 = cbp(4, c3);
  auto h = cbp(5, c4);
  h = cbp(6, h);
  h = dbr(1, h);
  h = dbr(2, h);
  h = add(tape, h, c4);
  h = dbr(3, h);
  h = dbr(4, h);
  h = add(tape, h, c2);
  h = dbr(5, h);
  h = dbr(6, h);
  return tanh(tape, h);
}

// Sigmoid patch map of the conditional discriminator, before aggregation.
template <typename Scalar>
Tensor<Scalar> discriminator_patch_map(Tape<Scalar>* tape, const Tensor<Scalar>& condition,
                                       const Tensor<Scalar>& candidate, WeightStore<Scalar>& w,
                                       const DiscriminatorConfig& cfg, Mode mode) {
  expect(condition.shape == candidate.shape,
         "discriminator: condition " + to_string(condition.shape) + " vs candidate " +
             to_string(candidate.shape));
  expect(condition.shape.size() == 4 && condition.dim(1) == 3,
         "discriminator: inputs must be [N,3,H,W]");
  const std::int64_t h = condition.dim(2), wdt = condition.dim(3);
  expect(h % 8 == 0 && wdt % 8 == 0 && h >= 24 && wdt >= 24,
         "discriminator: spatial dims must be multiples of 8 and >= 24, got " +
             to_string(condition.shape));
  expect(detail::param(w, "d.l1.conv.kernel").dim(0) == cfg.width,
         "discriminator: weight store does not match the configured width");
  const int strides[5] = {2, 2, 2, 1, 1};
  auto out = concat_channels(tape, condition, candidate);
  for (int i = 0; i < 5; ++i) {
    const std::string p = "d.l" + std::to_string(i + 1);
    out = conv2d(tape, out, detail::param(w, p + ".conv.kernel"),
                 detail::param(w, p + ".conv.bias"), strides[i], 1);
    if (i < 4) {
      out = batchnorm(tape, out, detail::param(w, p + ".bn.gamma"),
                      detail::param(w, p + ".bn.beta"),
                      detail::param(w, p + ".bn.running_mean"),
                      detail::param(w, p + ".bn.running_var"), mode);
    }
    if (i >= 1 && i < 4) out = prelu(tape, out, detail::param(w, p + ".prelu.slope"));
  }
  return sigmoid(tape, out);
}

// Probability score per sample in [0,1]: spatial mean of the patch map.
template <typename Scalar>
Tensor<Scalar> discriminator_forward(Tape<Scalar>* tape, const Tensor<Scalar>& condition,
                                     const Tensor<Scalar>& candidate, WeightStore<Scalar>& w,
                                     const DiscriminatorConfig& cfg, Mode mode) {
  return per_sample_mean(tape, discriminator_patch_map(tape, condition, candidate, w, cfg, mode));
}

// Frozen feature transform: [N,3,H,W] -> [N,128,H/2,W/2]. Gradients flow
// through into the image but never into the (unwatched) weights.
template <typename Scalar>
Tensor<Scalar> perceptual_forward(Tape<Scalar>* tape, const Tensor<Scalar>& img,
                                  const WeightStore<Scalar>& w) {
  expect(img.shape.size() == 4 && img.dim(1) == 3,
         "perceptual: input must be [N,3,H,W], got " + to_string(img.shape));
  expect(img.dim(2) % 2 == 0 && img.dim(3) % 2 == 0,
         "perceptual: spatial dims must be even, got " + to_string(img.shape));
  auto h = relu(tape, conv2d(tape, img, detail::param(w, "v.conv1.kernel"),
                             detail::param(w, "v.conv1.bias"), 1, 1));
  h = relu(tape, conv2d(tape, h, detail::param(w, "v.conv2.kernel"),
                        detail::param(w, "v.conv2.bias"), 1, 1));
  h = maxpool2(tape, h);
  h = relu(tape, conv2d(tape, h, detail::param(w, "v.conv3.kernel"),
                        detail::param(w, "v.conv3.bias"), 1, 1));
  h = relu(tape, conv2d(tape, h, detail::param(w, "v.conv4.kernel"),
                        detail::param(w, "v.conv4.bias"), 1, 1));
  return h;
}

}  // namespace idcgan
