#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

#include "idcgan/losses.hpp"
#include "idcgan/rng.hpp"

namespace idcgan {

struct GradCheckResult {
  std::string name;
  double max_err = 0.0;
  bool pass = false;
};

namespace gradcheck_detail {

using DTensor = Tensor<double>;

inline DTensor randn(Shape shape, Rng& rng, double stddev = 1.0, double mean = 0.0) {
  DTensor t = DTensor::zeros(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t.data[i] = rng.normal(mean, stddev);
  return t;
}

// Random values kept away from zero so ReLU/PReLU kinks cannot sit inside
// the finite-difference stencil.
inline DTensor randn_away_from_zero(Shape shape, Rng& rng, double margin = 0.1) {
  DTensor t = randn(std::move(shape), rng);
  for (std::int64_t i = 0; i < t.size(); ++i) {
    t.data[i] += t.data[i] >= 0 ? margin : -margin;
  }
  return t;
}

// Replaces store values with O(1)-scaled randoms so batch-norm inverse-std
// factors stay moderate; the production init (std 0.02) makes the network so
// sharply curved near the origin that the finite-difference stencil itself
// loses accuracy.
inline void condition_weights(WeightStore<double>& w, Rng& rng) {
  for (auto& [name, t] : w) {
    if (!is_trainable_param(name)) continue;
    double mean = 0.0, stddev = 0.3;
    if (name.ends_with(".gamma")) mean = 1.0, stddev = 0.1;
    if (name.ends_with(".beta")) stddev = 0.1;
    if (name.ends_with(".slope")) mean = 0.25, stddev = 0.05;
    if (name.ends_with(".bias")) stddev = 0.1;
    for (std::int64_t i = 0; i < t.size(); ++i) t.data[i] = rng.normal(mean, stddev);
  }
}

inline std::vector<std::int64_t> pick_coords(std::int64_t size, int max_coords, Rng& rng) {
  std::vector<std::int64_t> all(static_cast<std::size_t>(size));
  for (std::int64_t i = 0; i < size; ++i) all[static_cast<std::size_t>(i)] = i;
  if (max_coords <= 0 || size <= max_coords) return all;
  rng.shuffle(all);
  all.resize(static_cast<std::size_t>(max_coords));
  std::sort(all.begin(), all.end());
  return all;
}

// Compares reverse-mode gradients against central finite differences.
// `make` evaluates the scalar loss from the current leaf values: once on a
// tape for the analytic pass, then repeatedly off-tape for the stencil.
template <typename MakeLoss>
GradCheckResult check(const std::string& name, MakeLoss&& make, std::vector<DTensor*> leaves,
                      Rng& rng, int max_coords = 0, double h = 1e-3, double tol = 1e-4) {
  Tape<double> tape;
  for (auto* leaf : leaves) tape.watch(*leaf);
  auto loss = make(&tape);
  tape.backward(loss);
  std::vector<DTensor> analytic;
  analytic.reserve(leaves.size());
  for (auto* leaf : leaves) analytic.push_back(tape.grad(*leaf));

  GradCheckResult res{name, 0.0, false};
  auto eval = [&make]() { return make(static_cast<Tape<double>*>(nullptr)).scalar(); };
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    DTensor& leaf = *leaves[li];
    for (std::int64_t i : pick_coords(leaf.size(), max_coords, rng)) {
      const double saved = leaf.data[i];
      leaf.data[i] = saved + h;
      const double fp = eval();
      leaf.data[i] = saved - h;
      const double fm = eval();
      leaf.data[i] = saved + 0.5 * h;
      const double fp2 = eval();
      leaf.data[i] = saved - 0.5 * h;
      const double fm2 = eval();
      leaf.data[i] = saved;
      const double fd = (fp - fm) / (2.0 * h);
      const double fd_half = (fp2 - fm2) / h;
      const double a = analytic[li].data[i];
      const double scale = std::max({std::abs(a), std::abs(fd), 1e-6});
      // central differences only estimate the derivative where the function
      // is smooth across the stencil; a step-size-dependent estimate means a
      // ReLU/PReLU kink sits inside it, so the coordinate carries no signal
      if (std::abs(fd - fd_half) > 0.25 * tol * scale) continue;
      const double err = std::abs(a - fd) / scale;
      res.max_err = std::max(res.max_err, err);
    }
  }
  res.pass = res.max_err < tol;
  return res;
}

}  // namespace gradcheck_detail

// Finite-difference verification of every differentiable op, both full
// networks, the frozen feature network, and the loss surface. Deterministic
// for a fixed seed. All math in 64-bit.
inline std::vector<GradCheckResult> gradcheck_suite(std::uint64_t seed) {
  using namespace gradcheck_detail;
  std::vector<GradCheckResult> out;
  int section = 0;
  auto next_rng = [&] { return Rng(derive_seed(seed, static_cast<std::uint64_t>(section++))); };

  {  // conv2d, 3x3 stride 1 pad 1
    Rng rng = next_rng();
    DTensor x = randn({2, 3, 8, 8}, rng);
    DTensor k = randn({4, 3, 3, 3}, rng, 0.3);
    DTensor b = randn({4}, rng, 0.3);
    out.push_back(check(
        "conv2d 3x3 s1 p1",
        [&](Tape<double>* t) { return mean_sq(t, conv2d(t, x, k, b, 1, 1)); }, {&x, &k, &b}, rng));
  }
  {  // conv2d, 4x4 stride 2 pad 1 (discriminator front-end geometry)
    Rng rng = next_rng();
    DTensor x = randn({1, 3, 8, 8}, rng);
    DTensor k = randn({5, 3, 4, 4}, rng, 0.3);
    DTensor b = randn({5}, rng, 0.3);
    out.push_back(check(
        "conv2d 4x4 s2 p1",
        [&](Tape<double>* t) { return mean_sq(t, conv2d(t, x, k, b, 2, 1)); }, {&x, &k, &b}, rng));
  }
  {  // deconv2d, 3x3 stride 1 pad 1
    Rng rng = next_rng();
    DTensor x = randn({1, 4, 8, 8}, rng);
    DTensor k = randn({4, 3, 3, 3}, rng, 0.3);
    DTensor b = randn({3}, rng, 0.3);
    out.push_back(check(
        "deconv2d 3x3 s1 p1",
        [&](Tape<double>* t) { return mean_sq(t, deconv2d(t, x, k, b, 1, 1)); }, {&x, &k, &b},
        rng));
  }
  {  // deconv2d, 4x4 stride 2 pad 1 (upsampling geometry)
    Rng rng = next_rng();
    DTensor x = randn({1, 3, 5, 5}, rng);
    DTensor k = randn({3, 2, 4, 4}, rng, 0.3);
    DTensor b = randn({2}, rng, 0.3);
    out.push_back(check(
        "deconv2d 4x4 s2 p1",
        [&](Tape<double>* t) { return mean_sq(t, deconv2d(t, x, k, b, 2, 1)); }, {&x, &k, &b},
        rng));
  }
  {  // batchnorm, train mode
    Rng rng = next_rng();
    DTensor x = randn({2, 4, 5, 5}, rng);
    DTensor g = randn({4}, rng, 0.2, 1.0);
    DTensor be = randn({4}, rng, 0.2);
    DTensor rm = DTensor::zeros({4});
    DTensor rv = DTensor::constant({4}, 1.0);
    out.push_back(check(
        "batchnorm train",
        [&](Tape<double>* t) {
          return mean_sq(t, batchnorm(t, x, g, be, rm, rv, Mode::train));
        },
        {&x, &g, &be}, rng));
  }
  {  // batchnorm, eval mode
    Rng rng = next_rng();
    DTensor x = randn({2, 4, 5, 5}, rng);
    DTensor g = randn({4}, rng, 0.2, 1.0);
    DTensor be = randn({4}, rng, 0.2);
    DTensor rm = randn({4}, rng, 0.3);
    DTensor rv = randn({4}, rng, 0.1, 1.0);
    out.push_back(check(
        "batchnorm eval",
        [&](Tape<double>* t) { return mean_sq(t, batchnorm(t, x, g, be, rm, rv, Mode::eval)); },
        {&x, &g, &be}, rng));
  }
  {  // prelu
    Rng rng = next_rng();
    DTensor x = randn_away_from_zero({2, 3, 4, 4}, rng);
    DTensor s = randn({3}, rng, 0.1, 0.25);
    out.push_back(check(
        "prelu", [&](Tape<double>* t) { return mean_sq(t, prelu(t, x, s)); }, {&x, &s}, rng));
  }
  {  // relu / tanh / sigmoid
    Rng rng = next_rng();
    DTensor x = randn_away_from_zero({1, 3, 8, 8}, rng);
    out.push_back(check(
        "relu", [&](Tape<double>* t) { return mean_sq(t, relu(t, x)); }, {&x}, rng));
    DTensor y = randn({1, 2, 6, 6}, rng);
    out.push_back(check(
        "tanh", [&](Tape<double>* t) { return mean_sq(t, tanh(t, y)); }, {&y}, rng));
    DTensor z = randn({1, 2, 6, 6}, rng);
    out.push_back(check(
        "sigmoid", [&](Tape<double>* t) { return mean_sq(t, sigmoid(t, z)); }, {&z}, rng));
  }
  {  // maxpool2 (values spread so the argmax never flips inside the stencil)
    Rng rng = next_rng();
    DTensor x = DTensor::zeros({1, 3, 8, 8});
    std::vector<std::int64_t> order(static_cast<std::size_t>(x.size()));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<std::int64_t>(i);
    rng.shuffle(order);
    for (std::size_t i = 0; i < order.size(); ++i) {
      x.data[static_cast<std::int64_t>(i)] = 0.05 * static_cast<double>(order[i]) - 4.8;
    }
    out.push_back(check(
        "maxpool2", [&](Tape<double>* t) { return mean_sq(t, maxpool2(t, x)); }, {&x}, rng));
  }
  {  // structural ops
    Rng rng = next_rng();
    DTensor a = randn({2, 2, 4, 4}, rng);
    DTensor b = randn({2, 2, 4, 4}, rng);
    out.push_back(check(
        "add/sub/scale/concat",
        [&](Tape<double>* t) {
          return mean_sq(t, concat_channels(t, add(t, a, b), sub(t, a, scale(t, b, 0.7))));
        },
        {&a, &b}, rng));
    DTensor m = randn({3, 2, 4, 4}, rng);
    out.push_back(check(
        "per_sample_mean",
        [&](Tape<double>* t) { return mean_sq(t, per_sample_mean(t, m)); }, {&m}, rng));
  }
  {  // log-based score losses through a sigmoid squash
    Rng rng = next_rng();
    DTensor z1 = randn({6}, rng);
    DTensor z2 = randn({6}, rng);
    out.push_back(check(
        "adversarial loss",
        [&](Tape<double>* t) { return adversarial_loss(t, sigmoid(t, z1)); }, {&z1}, rng));
    out.push_back(check(
        "discriminator loss",
        [&](Tape<double>* t) {
          return discriminator_loss(t, sigmoid(t, z1), sigmoid(t, z2));
        },
        {&z1, &z2}, rng));
  }
  {  // euclidean loss
    Rng rng = next_rng();
    DTensor p = randn({2, 3, 6, 6}, rng);
    DTensor y = randn({2, 3, 6, 6}, rng);
    out.push_back(check(
        "euclidean loss", [&](Tape<double>* t) { return euclidean_loss(t, p, y); }, {&p}, rng));
  }
  {  // perceptual network and loss
    Rng rng = next_rng();
    auto v = init_weights<double>(PerceptualConfig{}, 77);
    DTensor img = randn({1, 3, 8, 8}, rng);
    out.push_back(check(
        "perceptual net",
        [&](Tape<double>* t) { return mean_sq(t, perceptual_forward(t, img, v)); }, {&img}, rng,
        0, 1e-5));
    DTensor tgt = randn({1, 3, 8, 8}, rng);
    out.push_back(check(
        "perceptual loss",
        [&](Tape<double>* t) { return perceptual_loss(t, img, tgt, v); }, {&img}, rng, 0, 1e-5));
  }
  {  // generator end-to-end: input fully, every parameter subsampled
    Rng rng = next_rng();
    GeneratorConfig gc;
    auto g = init_weights<double>(gc, 11);
    condition_weights(g, rng);
    DTensor x = randn({1, 3, 8, 8}, rng, 0.5);
    DTensor tgt = randn({1, 3, 8, 8}, rng, 0.5);
    out.push_back(check(
        "generator/input",
        [&](Tape<double>* t) {
          return euclidean_loss(t, generator_forward(t, x, g, gc, Mode::train), tgt);
        },
        {&x}, rng, 0, 1e-5));
    std::vector<DTensor*> params;
    for (auto& [name, tensor] : g) {
      if (is_trainable_param(name)) params.push_back(&tensor);
    }
    out.push_back(check(
        "generator/params",
        [&](Tape<double>* t) {
          return euclidean_loss(t, generator_forward(t, x, g, gc, Mode::train), tgt);
        },
        params, rng, 3, 1e-5));
  }
  {  // discriminator end-to-end (smallest admissible spatial size)
    Rng rng = next_rng();
    DiscriminatorConfig dc;
    auto d = init_weights<double>(dc, 12);
    condition_weights(d, rng);
    DTensor cond = randn({1, 3, 24, 24}, rng, 0.5);
    DTensor cand = randn({1, 3, 24, 24}, rng, 0.5);
    out.push_back(check(
        "discriminator/inputs",
        [&](Tape<double>* t) {
          return discriminator_forward(t, cond, cand, d, dc, Mode::train);
        },
        {&cond, &cand}, rng, 32, 1e-5));
    std::vector<DTensor*> params;
    for (auto& [name, tensor] : d) {
      if (is_trainable_param(name)) params.push_back(&tensor);
    }
    out.push_back(check(
        "discriminator/params",
        [&](Tape<double>* t) {
          return discriminator_forward(t, cond, cand, d, dc, Mode::train);
        },
        params, rng, 3, 1e-5));
  }
  {  // refined loss composite: pred feeds both the discriminator and V
    Rng rng = next_rng();
    DiscriminatorConfig dc;
    auto d = init_weights<double>(dc, 13);
    condition_weights(d, rng);
    auto v = init_weights<double>(PerceptualConfig{}, 14);
    DTensor cond = randn({1, 3, 24, 24}, rng, 0.5);
    DTensor pred = randn({1, 3, 24, 24}, rng, 0.5);
    DTensor tgt = randn({1, 3, 24, 24}, rng, 0.5);
    const LossWeights lw = make_loss_weights(Ablation::id_cgan, 6.6e-3, 1.0);
    out.push_back(check(
        "refined loss/pred",
        [&](Tape<double>* t) {
          auto scores = discriminator_forward(t, cond, pred, d, dc, Mode::train);
          return refined_loss(t, pred, tgt, &scores, lw, &v).objective;
        },
        {&pred}, rng, 24, 1e-5));
  }
  return out;
}

// Runs the suite, prints one line per check, returns true iff all pass.
inline bool run_gradcheck(std::uint64_t seed, std::ostream& os) {
  const auto results = gradcheck_suite(seed);
  bool all = true;
  for (const auto& r : results) {
    os << std::left << std::setw(28) << r.name << " max rel err "
       << std::scientific << std::setprecision(2) << r.max_err << (r.pass ? "  ok" : "  FAIL")
       << '\n';
    os.unsetf(std::ios::floatfield);
    all = all && r.pass;
  }
  os << (all ? "gradcheck: all checks passed" : "gradcheck: FAILURES detected") << '\n';
  return all;
}

}  // namespace idcgan
