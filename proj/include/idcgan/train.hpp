#pragma once

#include <string>
#include <vector>

#include "idcgan/adam.hpp"
#include "idcgan/dataset.hpp"
#include "idcgan/losses.hpp"
#include "idcgan/nets.hpp"

namespace idcgan {

struct TrainConfig {
  Ablation ablation = Ablation::id_cgan;
  int batch_size = 7;
  long iterations = 2000;       // desk default; paper scale is 100k
  double learning_rate = 2e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double lambda_a = 6.6e-3;
  double lambda_p = 1.0;
  int image_size = 64;          // desk default; paper scale is 256
  std::uint64_t seed = 0;
  long checkpoint_every = 0;    // 0: final checkpoint only
  long log_every = 10;
  int d_steps = 1;              // discriminator updates per generator update
  int gen_width = 64;           // K
  int disc_width = 48;          // K2
  PerceptualConfig perceptual;
};

void validate_train_config(const TrainConfig& cfg);

// Everything a training run mutates: the three weight stores, both
// optimizers, and the iteration counter. The loop owns this exclusively.
struct TrainerState {
  TrainConfig cfg;
  WeightStore<float> g, d, v;
  AdamState<float> adam_g, adam_d;
  long iteration = 0;
};

TrainerState make_trainer(const TrainConfig& cfg);

// Flattens the trainer into one named-tensor store (weights, optimizer
// moments, counters) and back; round-trips bit-exactly through the
// checkpoint format so save/load/continue equals an uninterrupted run.
WeightStore<float> trainer_to_store(const TrainerState& st);
TrainerState trainer_from_store(const WeightStore<float>& store, const TrainConfig& cfg);

// One alternating optimization step on a batch (x rainy, y clean, both in
// [-1,1]): first the discriminator (skipped for GEN), then the generator
// against the updated discriminator.
LossReport train_step(TrainerState& st, const Tensor<float>& x, const Tensor<float>& y);

struct TrainRunResult {
  long iterations_run = 0;
  std::string final_checkpoint;
  std::string log_path;
};

// Seeded-shuffled batches, reshuffled each epoch; emits a CSV TrainLog row
// every log_every iterations, checkpoints every checkpoint_every, and a
// final checkpoint at the end. `resume` continues a saved run to the
// configured iteration count.
TrainRunResult train_run(const std::vector<ImagePair>& data, const TrainConfig& cfg,
                         const std::string& out_dir, const std::string& resume_path = "");

// Eval-mode de-raining of an RGB image in [0,1]; dimensions not divisible
// by 8 are reflect-padded for inference and cropped back.
Tensor<float> derain_image(const Tensor<float>& rgb01, WeightStore<float>& g_weights);

// Extracts the "g.*" subset of a full trainer store (accepts bare
// generator stores unchanged).
WeightStore<float> generator_weights_from(const WeightStore<float>& store);

}  // namespace idcgan
