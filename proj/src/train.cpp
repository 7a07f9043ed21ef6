#include "idcgan/train.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "idcgan/checkpoint.hpp"

namespace fs = std::filesystem;

namespace idcgan {

void validate_train_config(const TrainConfig& cfg) {
  expect(cfg.batch_size >= 1, "config: batch_size must be >= 1");
  expect(cfg.iterations >= 1, "config: iterations must be >= 1");
  expect(cfg.learning_rate > 0, "config: learning_rate must be positive");
  expect(cfg.lambda_a >= 0 && cfg.lambda_p >= 0, "config: loss weights must be nonnegative");
  expect(cfg.image_size >= 24 && cfg.image_size % 8 == 0,
         "config: image_size must be a multiple of 8 and at least 24");
  expect(cfg.log_every >= 1, "config: log_every must be >= 1");
  expect(cfg.checkpoint_every >= 0, "config: checkpoint_every must be >= 0");
  expect(cfg.d_steps >= 1, "config: d_steps must be >= 1");
  expect(cfg.gen_width >= 2 && cfg.gen_width % 2 == 0, "config: gen_width must be even");
  expect(cfg.disc_width >= 1, "config: disc_width must be >= 1");
}

TrainerState make_trainer(const TrainConfig& cfg) {
  validate_train_config(cfg);
  TrainerState st;
  st.cfg = cfg;
  st.g = init_weights<float>(GeneratorConfig{cfg.gen_width}, derive_seed(cfg.seed, 1));
  st.d = init_weights<float>(DiscriminatorConfig{cfg.disc_width}, derive_seed(cfg.seed, 2));
  if (cfg.perceptual.source == PerceptualConfig::Source::checkpoint) {
    st.v = load_checkpoint(cfg.perceptual.checkpoint_path);
    const auto expected = init_weights<float>(PerceptualConfig{}, 0);
    for (const auto& [name, t] : expected) {
      auto it = st.v.find(name);
      if (it == st.v.end() || it->second.shape != t.shape) {
        throw DataError("perceptual checkpoint '" + cfg.perceptual.checkpoint_path +
                        "' does not define tensor '" + name + "' with shape " +
                        to_string(t.shape));
      }
    }
  } else {
    st.v = init_weights<float>(PerceptualConfig{}, derive_seed(cfg.seed, 3));
  }
  return st;
}

namespace {

Tensor<float> scalar_tensor(float v) {
  Tensor<float> t = Tensor<float>::zeros({1});
  t.data[0] = v;
  return t;
}

std::map<std::string, Tensor<float>> collect_grads(const Tape<float>& tape,
                                                   const WeightStore<float>& params) {
  std::map<std::string, Tensor<float>> grads;
  for (const auto& [name, t] : params) {
    if (!is_trainable_param(name)) continue;
    grads.emplace(name, tape.grad(t));
  }
  return grads;
}

void watch_trainable(Tape<float>& tape, WeightStore<float>& params) {
  for (auto& [name, t] : params) {
    if (is_trainable_param(name)) tape.watch(t);
  }
}

std::string checkpoint_name(long iter) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "checkpoint_%06ld.idcg", iter);
  return buf;
}

}  // namespace

WeightStore<float> trainer_to_store(const TrainerState& st) {
  WeightStore<float> store;
  for (const auto& [name, t] : st.g) store.emplace(name, t.detached());
  for (const auto& [name, t] : st.d) store.emplace(name, t.detached());
  for (const auto& [name, t] : st.v) store.emplace(name, t.detached());
  auto put_moments = [&store](const AdamState<float>& adam, const WeightStore<float>& params) {
    for (const auto& [name, mom] : adam.moments) {
      Tensor<float> m, v;
      m.shape = params.at(name).shape;
      m.data = mom.m;
      v.shape = params.at(name).shape;
      v.data = mom.v;
      store.emplace("opt." + name + ".m", std::move(m));
      store.emplace("opt." + name + ".v", std::move(v));
    }
  };
  put_moments(st.adam_g, st.g);
  put_moments(st.adam_d, st.d);
  store.emplace("meta.iteration", scalar_tensor(static_cast<float>(st.iteration)));
  store.emplace("meta.adam_t.g", scalar_tensor(static_cast<float>(st.adam_g.t)));
  store.emplace("meta.adam_t.d", scalar_tensor(static_cast<float>(st.adam_d.t)));
  return store;
}

TrainerState trainer_from_store(const WeightStore<float>& store, const TrainConfig& cfg) {
  validate_train_config(cfg);
  TrainerState st;
  st.cfg = cfg;
  const TrainerState expected = make_trainer(cfg);
  auto take = [&store](const std::string& name, const Tensor<float>& like) {
    auto it = store.find(name);
    if (it == store.end() || it->second.shape != like.shape) {
      throw DataError("checkpoint does not match the configured architecture: tensor '" + name +
                      "' with shape " + to_string(like.shape) + " missing or mismatched");
    }
    return it->second;
  };
  for (const auto& [name, t] : expected.g) st.g.emplace(name, take(name, t));
  for (const auto& [name, t] : expected.d) st.d.emplace(name, take(name, t));
  for (const auto& [name, t] : expected.v) st.v.emplace(name, take(name, t));
  auto get_moments = [&store](AdamState<float>& adam, const WeightStore<float>& params) {
    for (const auto& [name, t] : params) {
      if (!is_trainable_param(name)) continue;
      const auto mit = store.find("opt." + name + ".m");
      const auto vit = store.find("opt." + name + ".v");
      if (mit == store.end() || vit == store.end()) continue;  // fresh optimizer entry
      expect(mit->second.size() == t.size() && vit->second.size() == t.size(),
             "checkpoint optimizer state mismatched for '" + name + "'");
      auto& mom = adam.moments[name];
      mom.m = mit->second.data;
      mom.v = vit->second.data;
    }
  };
  get_moments(st.adam_g, st.g);
  get_moments(st.adam_d, st.d);
  auto meta = [&store](const std::string& name) -> long {
    auto it = store.find(name);
    if (it == store.end() || it->second.size() != 1) {
      throw DataError("checkpoint is missing '" + name + "'");
    }
    return static_cast<long>(it->second.data[0]);
  };
  st.iteration = meta("meta.iteration");
  st.adam_g.t = meta("meta.adam_t.g");
  st.adam_d.t = meta("meta.adam_t.d");
  return st;
}

LossReport train_step(TrainerState& st, const Tensor<float>& x, const Tensor<float>& y) {
  const TrainConfig& cfg = st.cfg;
  expect(x.shape == y.shape && x.shape.size() == 4 && x.dim(0) >= 1,
         "train_step: batch shapes must match and be nonempty");
  const GeneratorConfig gc{cfg.gen_width};
  const DiscriminatorConfig dc{cfg.disc_width};
  const LossWeights lw = make_loss_weights(cfg.ablation, cfg.lambda_a, cfg.lambda_p);
  LossReport report;

  Tape<float> tg;
  watch_trainable(tg, st.g);
  auto fake = generator_forward(&tg, x, st.g, gc, Mode::train);

  if (cfg.ablation != Ablation::gen) {
    const auto fake_const = fake.detached();
    for (int k = 0; k < cfg.d_steps; ++k) {
      Tape<float> td;
      watch_trainable(td, st.d);
      auto real_scores = discriminator_forward(&td, x, y, st.d, dc, Mode::train);
      auto fake_scores = discriminator_forward(&td, x, fake_const, st.d, dc, Mode::train);
      auto d_loss = discriminator_loss(&td, real_scores, fake_scores);
      if (!d_loss.all_finite()) throw NumericError("non-finite discriminator loss");
      report.d_loss = static_cast<double>(d_loss.scalar());
      td.backward(d_loss);
      adam_step(st.d, collect_grads(td, st.d), st.adam_d, cfg.learning_rate, cfg.adam_beta1,
                cfg.adam_beta2, cfg.adam_eps);
    }
  }

  Tensor<float> scores;
  const bool adversarial = lw.lambda_a > 0;
  if (adversarial) {
    scores = discriminator_forward(&tg, x, fake, st.d, dc, Mode::train);
  }
  auto refined = refined_loss(&tg, fake, y, adversarial ? &scores : nullptr, lw,
                              lw.lambda_p > 0 ? &st.v : nullptr);
  if (!refined.objective.all_finite()) throw NumericError("non-finite generator loss");
  tg.backward(refined.objective);
  adam_step(st.g, collect_grads(tg, st.g), st.adam_g, cfg.learning_rate, cfg.adam_beta1,
            cfg.adam_beta2, cfg.adam_eps);

  report.l_e = refined.report.l_e;
  report.l_p = refined.report.l_p;
  report.l_a = refined.report.l_a;
  report.l_rp = refined.report.l_rp;
  return report;
}

TrainRunResult train_run(const std::vector<ImagePair>& data, const TrainConfig& cfg,
                         const std::string& out_dir, const std::string& resume_path) {
  validate_train_config(cfg);
  expect(!data.empty(), "train_run: empty dataset");
  expect(static_cast<long>(data.size()) >= cfg.batch_size,
         "train_run: dataset has fewer pairs than the batch size");
  for (const auto& pair : data) {  // fail fast before step 1
    expect(pair.clean.shape == Shape{3, cfg.image_size, cfg.image_size} &&
               pair.rainy.shape == pair.clean.shape,
           "train_run: pair '" + pair.name + "' is not " + std::to_string(cfg.image_size) + "x" +
               std::to_string(cfg.image_size));
    if (!pair.clean.all_finite() || !pair.rainy.all_finite()) {
      throw DataError("train_run: pair '" + pair.name + "' holds non-finite values");
    }
  }

  TrainerState st = resume_path.empty()
                        ? make_trainer(cfg)
                        : trainer_from_store(load_checkpoint(resume_path), cfg);
  expect(st.iteration <= cfg.iterations,
         "train_run: checkpoint is already past the requested iteration count");

  fs::create_directories(out_dir);
  const std::string log_path = (fs::path(out_dir) / "train_log.csv").string();
  const bool fresh_log = resume_path.empty() || !fs::exists(log_path);
  std::ofstream log(log_path, fresh_log ? std::ios::trunc : std::ios::app);
  if (!log) throw DataError("cannot write train log '" + log_path + "'");
  if (fresh_log) log << "iter,l_e,l_p,l_a,l_rp,d_loss\n";

  const long pairs = static_cast<long>(data.size());
  const long batches_per_epoch = pairs / cfg.batch_size;
  const std::int64_t chw = static_cast<std::int64_t>(3) * cfg.image_size * cfg.image_size;
  std::vector<std::size_t> perm(static_cast<std::size_t>(pairs));
  long perm_epoch = -1;

  Tensor<float> x = Tensor<float>::zeros({cfg.batch_size, 3, cfg.image_size, cfg.image_size});
  Tensor<float> y = Tensor<float>::zeros({cfg.batch_size, 3, cfg.image_size, cfg.image_size});

  TrainRunResult result;
  result.log_path = log_path;
  for (long iter = st.iteration + 1; iter <= cfg.iterations; ++iter) {
    const long epoch = (iter - 1) / batches_per_epoch;
    const long slot = (iter - 1) % batches_per_epoch;
    if (epoch != perm_epoch) {
      for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
      Rng rng(derive_seed(cfg.seed, 0x5e0'0000ull + static_cast<std::uint64_t>(epoch)));
      rng.shuffle(perm);
      perm_epoch = epoch;
    }
    for (int b = 0; b < cfg.batch_size; ++b) {
      const ImagePair& pair = data[perm[static_cast<std::size_t>(slot * cfg.batch_size + b)]];
      x.data.segment(b * chw, chw) = pair.rainy.data;
      y.data.segment(b * chw, chw) = pair.clean.data;
    }
    const LossReport rep = train_step(st, x, y);
    st.iteration = iter;
    ++result.iterations_run;

    if (iter % cfg.log_every == 0 || iter == cfg.iterations) {
      char line[256];
      std::snprintf(line, sizeof line, "%ld,%.9g,%.9g,%.9g,%.9g,%.9g\n", iter, rep.l_e, rep.l_p,
                    rep.l_a, rep.l_rp, rep.d_loss);
      log << line;
      log.flush();
    }
    if (cfg.checkpoint_every > 0 && iter % cfg.checkpoint_every == 0 && iter != cfg.iterations) {
      save_checkpoint(trainer_to_store(st), (fs::path(out_dir) / checkpoint_name(iter)).string());
    }
  }
  result.final_checkpoint = (fs::path(out_dir) / "checkpoint_final.idcg").string();
  save_checkpoint(trainer_to_store(st), result.final_checkpoint);
  return result;
}

WeightStore<float> generator_weights_from(const WeightStore<float>& store) {
  WeightStore<float> g;
  for (const auto& [name, t] : store) {
    if (name.rfind("g.", 0) == 0) g.emplace(name, t.detached());
  }
  if (g.empty()) throw DataError("checkpoint holds no generator weights");
  return g;
}

Tensor<float> derain_image(const Tensor<float>& rgb01, WeightStore<float>& g_weights) {
  expect(rgb01.shape.size() == 3 && rgb01.dim(0) == 3,
         "derain: input must be [3,H,W], got " + to_string(rgb01.shape));
  const int h = static_cast<int>(rgb01.dim(1)), w = static_cast<int>(rgb01.dim(2));
  const auto kit = g_weights.find("g.enc1.conv.kernel");
  if (kit == g_weights.end()) throw DataError("generator weights are missing 'g.enc1.conv.kernel'");
  const GeneratorConfig gc{static_cast<int>(kit->second.dim(0))};

  Tensor<float> batch = Tensor<float>::zeros({1, 3, h, w});
  batch.data = rgb01.data * 2.0f - 1.0f;
  const int th = std::max(8, (h + 7) / 8 * 8), tw = std::max(8, (w + 7) / 8 * 8);
  if (th != h || tw != w) batch = pad_reflect_br(batch, th - h, tw - w);
  auto out = generator_forward<float>(nullptr, batch, g_weights, gc, Mode::eval);
  if (th != h || tw != w) out = crop_tl(out, h, w);
  Tensor<float> result = Tensor<float>::zeros({3, h, w});
  result.data = ((out.data + 1.0f) * 0.5f).min(1.0f).max(0.0f);
  return result;
}

}  // namespace idcgan
