#pragma once

#include <string>

#include "idcgan/nets.hpp"
#include "idcgan/ops.hpp"

namespace idcgan {

// Score floor so log terms stay finite for scores at {0,1}.
inline constexpr double kScoreEps = 1e-7;

// Training configurations: GEN (Euclidean only), CGAN (Euclidean +
// adversarial), CGAN-P (perceptual + adversarial, Euclidean term disabled),
// ID-CGAN (all three).
enum class Ablation { gen, cgan, cgan_p, id_cgan };

inline std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::gen: return "gen";
    case Ablation::cgan: return "cgan";
    case Ablation::cgan_p: return "cgan-p";
    case Ablation::id_cgan: return "id-cgan";
  }
  return "?";
}

inline bool ablation_from_string(const std::string& s, Ablation& out) {
  if (s == "gen") out = Ablation::gen;
  else if (s == "cgan") out = Ablation::cgan;
  else if (s == "cgan-p") out = Ablation::cgan_p;
  else if (s == "id-cgan") out = Ablation::id_cgan;
  else return false;
  return true;
}

struct LossWeights {
  double lambda_a = 6.6e-3;
  double lambda_p = 1.0;
  bool euclidean_enabled = true;
};

inline LossWeights make_loss_weights(Ablation a, double lambda_a, double lambda_p) {
  expect(lambda_a >= 0 && lambda_p >= 0, "loss weights must be nonnegative");
  switch (a) {
    case Ablation::gen: return {0.0, 0.0, true};
    case Ablation::cgan: return {lambda_a, 0.0, true};
    case Ablation::cgan_p: return {lambda_a, lambda_p, false};
    case Ablation::id_cgan: return {lambda_a, lambda_p, true};
  }
  return {};
}

// Per-batch loss values; l_rp always satisfies the weighted-sum identity
// l_rp = l_e + lambda_a*l_a + lambda_p*l_p regardless of the ablation.
struct LossReport {
  double l_e = 0.0;
  double l_p = 0.0;
  double l_a = 0.0;
  double l_rp = 0.0;
  double d_loss = 0.0;
};

// Per-pixel squared error, normalized by C*H*W and averaged over the batch
// (equal to the plain mean of squared differences).
template <typename Scalar>
Tensor<Scalar> euclidean_loss(Tape<Scalar>* tape, const Tensor<Scalar>& pred,
                              const Tensor<Scalar>& target) {
  expect(pred.shape == target.shape, "euclidean_loss: shape mismatch " + to_string(pred.shape) +
                                         " vs " + to_string(target.shape));
  return mean_sq(tape, sub(tape, pred, target));
}

// Squared distance between frozen feature maps, normalized by the feature
// volume. The target branch is evaluated off-tape, so gradients flow through
// the feature network into pred only.
template <typename Scalar>
Tensor<Scalar> perceptual_loss(Tape<Scalar>* tape, const Tensor<Scalar>& pred,
                               const Tensor<Scalar>& target, const WeightStore<Scalar>& v) {
  expect(pred.shape == target.shape, "perceptual_loss: shape mismatch " + to_string(pred.shape) +
                                         " vs " + to_string(target.shape));
  auto fp = perceptual_forward(tape, pred, v);
  auto ft = perceptual_forward<Scalar>(nullptr, target.detached(), v);
  return mean_sq(tape, sub(tape, fp, ft));
}

// Entropy loss guiding the generator: -(1/N) * sum log D(...); decreases as
// the discriminator is more fooled.
template <typename Scalar>
Tensor<Scalar> adversarial_loss(Tape<Scalar>* tape, const Tensor<Scalar>& scores) {
  return neg_mean_log(tape, scores, kScoreEps);
}

// Discriminator objective: -(1/N) * sum [log real_i + log(1 - fake_i)]
// (maximizing the conditional GAN value function as a minimization).
template <typename Scalar>
Tensor<Scalar> discriminator_loss(Tape<Scalar>* tape, const Tensor<Scalar>& real_scores,
                                  const Tensor<Scalar>& fake_scores) {
  expect(real_scores.size() >= 1 && fake_scores.size() >= 1, "discriminator_loss: empty batch");
  auto lr = neg_mean_log(tape, real_scores, kScoreEps);
  auto lf = neg_mean_log_one_minus(tape, fake_scores, kScoreEps);
  return add(tape, lr, lf);
}

template <typename Scalar>
struct RefinedLoss {
  Tensor<Scalar> objective;  // the term the generator minimizes
  LossReport report;
};

// Refined loss l_rp = l_e + lambda_a*l_a + lambda_p*l_p and the ablation
// objective built from its enabled terms. `scores` may be null when no
// adversarial term participates (GEN); `v` may be null when lambda_p == 0.
// For CGAN-P the Euclidean term is excluded from the objective but still
// computed and reported.
template <typename Scalar>
RefinedLoss<Scalar> refined_loss(Tape<Scalar>* tape, const Tensor<Scalar>& pred,
                                 const Tensor<Scalar>& target, const Tensor<Scalar>* scores,
                                 const LossWeights& lw, const WeightStore<Scalar>* v) {
  RefinedLoss<Scalar> out;
  auto l_e = euclidean_loss(tape, pred, target);
  out.report.l_e = static_cast<double>(l_e.scalar());

  bool have_objective = false;
  Tensor<Scalar> objective;
  if (lw.euclidean_enabled) {
    objective = l_e;
    have_objective = true;
  }
  if (lw.lambda_a > 0) {
    expect(scores != nullptr, "refined_loss: lambda_a > 0 requires discriminator scores");
    auto l_a = adversarial_loss(tape, *scores);
    out.report.l_a = static_cast<double>(l_a.scalar());
    auto term = scale(tape, l_a, lw.lambda_a);
    objective = have_objective ? add(tape, objective, term) : term;
    have_objective = true;
  }
  if (lw.lambda_p > 0) {
    expect(v != nullptr, "refined_loss: lambda_p > 0 requires the perceptual network");
    auto l_p = perceptual_loss(tape, pred, target, *v);
    out.report.l_p = static_cast<double>(l_p.scalar());
    auto term = scale(tape, l_p, lw.lambda_p);
    objective = have_objective ? add(tape, objective, term) : term;
    have_objective = true;
  }
  expect(have_objective, "refined_loss: no loss term enabled");
  out.report.l_rp = out.report.l_e + lw.lambda_a * out.report.l_a + lw.lambda_p * out.report.l_p;
  out.objective = std::move(objective);
  return out;
}

}  // namespace idcgan
