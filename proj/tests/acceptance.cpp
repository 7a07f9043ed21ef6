// Acceptance suite: one pass/fail line per criterion, exit 0 iff all pass.
// Desk-scale property checks plus an overfit sanity experiment.
#include <unistd.h>

#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "idcgan/checkpoint.hpp"
#include "idcgan/dataset.hpp"
#include "idcgan/gradcheck.hpp"
#include "idcgan/image_io.hpp"
#include "idcgan/metrics.hpp"
#include "idcgan/train.hpp"
#include "oracles.hpp"

using namespace idcgan;
namespace fs = std::filesystem;

namespace {

struct Criterion {
  std::string name;
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

Tensor<float> random_image(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  Tensor<float> t = Tensor<float>::zeros(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t.data[i] = float(rng.uniform(lo, hi));
  return t;
}

std::vector<unsigned char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("idcgan_accept_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

// ---- 1. gradient suite ------------------------------------------------------

Criterion run_gradient_suite() {
  Criterion c{"gradient finite-difference suite"};
  const auto t0 = std::chrono::steady_clock::now();
  std::ostringstream sink;
  const bool ok = run_gradcheck(20260809, sink);
  const double dt = seconds_since(t0);
  double worst = 0.0;
  for (const auto& r : gradcheck_suite(20260809)) worst = std::max(worst, r.max_err);
  c.pass = ok && dt < 60.0;
  c.detail = fmt("max rel err %.2e, %.1f s (< 60 s)", worst, dt);
  if (!ok) c.detail += "; failing checks:\n" + sink.str();
  return c;
}

// ---- 2. adjointness ---------------------------------------------------------

Criterion run_adjointness() {
  Criterion c{"deconv2d/conv2d inner-product adjoint identity"};
  Rng rng(1001);
  double worst = 0.0;
  int tested = 0;
  while (tested < 20) {
    const int ci = 1 + int(rng.below(4)), co = 1 + int(rng.below(4));
    const int kh = 1 + int(rng.below(5)), kw = 1 + int(rng.below(5));
    const int stride = 1 + int(rng.below(3));
    const int pad = int(rng.below(std::uint64_t(std::min(kh, kw))));
    const int oh = 2 + int(rng.below(5)), ow = 2 + int(rng.below(5));
    const int h = (oh - 1) * stride + kh - 2 * pad, w = (ow - 1) * stride + kw - 2 * pad;
    if (h < 1 || w < 1) continue;
    ++tested;
    auto x = random_image({2, ci, h, w}, rng.next_u64());
    auto k = random_image({co, ci, kh, kw}, rng.next_u64());
    Tensor<float> bc = Tensor<float>::zeros({co}), bd = Tensor<float>::zeros({ci});
    auto cx = conv2d<float>(nullptr, x, k, bc, stride, pad);
    auto y = random_image(cx.shape, rng.next_u64());
    Tensor<float> kd = k;
    kd.shape = {co, ci, kh, kw};
    auto dy = deconv2d<float>(nullptr, y, kd, bd, stride, pad);
    const double lhs = cx.data.cast<double>().matrix().dot(y.data.cast<double>().matrix());
    const double rhs = x.data.cast<double>().matrix().dot(dy.data.cast<double>().matrix());
    worst = std::max(worst, std::abs(lhs - rhs) / std::max({1.0, std::abs(lhs), std::abs(rhs)}));
  }
  c.pass = worst < 1e-5;
  c.detail = fmt("20 geometries, worst relative gap %.2e (< 1e-5)", worst);
  return c;
}

// ---- 3. loss identities -----------------------------------------------------

Criterion run_loss_identities() {
  Criterion c{"refined-loss identities and ablation reductions"};
  auto v = init_weights<float>(PerceptualConfig{}, 2002);
  bool ok = true;
  std::string why;
  for (int trial = 0; trial < 5 && ok; ++trial) {
    auto pred = random_image({2, 3, 16, 16}, 3000 + trial);
    auto target = random_image({2, 3, 16, 16}, 4000 + trial);
    auto scores = random_image({2}, 5000 + trial, 0.05, 0.95);

    const auto lw = make_loss_weights(Ablation::id_cgan, 6.6e-3, 1.0);
    auto r = refined_loss<float>(nullptr, pred, target, &scores, lw, &v);
    if (r.report.l_rp != r.report.l_e + lw.lambda_a * r.report.l_a + lw.lambda_p * r.report.l_p) {
      ok = false;
      why = "weighted-sum identity broke";
    }

    auto gen = refined_loss<float>(nullptr, pred, target, nullptr,
                                   make_loss_weights(Ablation::gen, 0, 0), nullptr);
    const float le = euclidean_loss<float>(nullptr, pred, target).scalar();
    if (gen.objective.scalar() != le) {
      ok = false;
      why = "GEN objective != L_E";
    }

    auto cg = refined_loss<float>(nullptr, pred, target, &scores,
                                  make_loss_weights(Ablation::cgan, 6.6e-3, 1.0), nullptr);
    const float la = adversarial_loss<float>(nullptr, scores).scalar();
    const float weighted_a = float(6.6e-3) * la;
    if (cg.objective.scalar() != le + weighted_a) {
      ok = false;
      why = "CGAN objective != L_E + lambda_a*L_A";
    }

    auto cgp = refined_loss<float>(nullptr, pred, target, &scores,
                                   make_loss_weights(Ablation::cgan_p, 6.6e-3, 1.0), &v);
    const float lp = perceptual_loss<float>(nullptr, pred, target, v).scalar();
    const float weighted_p = 1.0f * lp;
    if (cgp.objective.scalar() != weighted_a + weighted_p) {
      ok = false;
      why = "CGAN-P objective != lambda_a*L_A + lambda_p*L_P";
    }

    Tensor<float> perfect = Tensor<float>::constant({2}, 1.0f);
    auto zero = refined_loss<float>(nullptr, pred, pred, &perfect, lw, &v);
    if (zero.report.l_rp != 0.0) {
      ok = false;
      why = "zero-at-identity broke";
    }
  }
  c.pass = ok;
  c.detail = ok ? "weighted sum exact; GEN/CGAN/CGAN-P reductions exact; zero at identity" : why;
  return c;
}

// ---- 4. metric oracles ------------------------------------------------------

Criterion run_metric_oracles() {
  Criterion c{"quality-measure oracles"};
  Rng rng(6001);
  double worst_ssim = 0.0, worst_uqi = 0.0;
  for (int t = 0; t < 10; ++t) {
    Plane a{32, 32, Eigen::ArrayXd(1024)}, b{32, 32, Eigen::ArrayXd(1024)};
    for (int i = 0; i < 1024; ++i) {
      a.v[i] = rng.uniform();
      b.v[i] = rng.uniform();
    }
    worst_ssim = std::max(worst_ssim, std::abs(ssim(a, b) - oracles::ssim_direct(a, b)));
    worst_uqi = std::max(worst_uqi, std::abs(uqi(a, b) - oracles::uqi_direct(a, b)));
  }

  Plane base{48, 48, Eigen::ArrayXd(48 * 48)};
  for (int i = 0; i < 48; ++i)
    for (int j = 0; j < 48; ++j)
      base.v[std::int64_t(i) * 48 + j] = 0.5 + 0.4 * std::sin(i * 0.3) * std::cos(j * 0.2);
  Plane shifted = base;
  shifted.v += 10.0 / 255.0;
  const double psnr_uniform = psnr(base, shifted);

  const bool maxima = psnr(base, base) == 99.0 && ssim(base, base) == 1.0 &&
                      uqi(base, base) == 1.0 && vif(base, base) == 1.0;

  auto noisy = [&](double sigma) {
    Rng nr(7001);
    Plane p = base;
    for (auto& v : p.v) v = std::clamp(v + nr.normal(0.0, sigma), 0.0, 1.0);
    return p;
  };
  const double v02 = vif(base, noisy(0.02)), v05 = vif(base, noisy(0.05)),
               v10 = vif(base, noisy(0.10));

  c.pass = worst_ssim < 1e-8 && worst_uqi < 1e-8 && std::abs(psnr_uniform - 28.13) < 0.01 &&
           maxima && v02 > v05 && v05 > v10;
  c.detail = fmt("ssim|impl-oracle| %.1e, uqi %.1e; psnr(10/255)=%.4f dB; maxima %s; "
                 "vif %.3f > %.3f > %.3f",
                 worst_ssim, worst_uqi, psnr_uniform, maxima ? "exact" : "BROKEN", v02, v05, v10);
  return c;
}

// ---- 5. overfit sanity ------------------------------------------------------

std::vector<ImagePair> overfit_pairs(int count, int size, std::uint64_t seed) {
  std::vector<ImagePair> pairs;
  for (int i = 0; i < count; ++i) {
    Tensor<float> clean = oracles::bright_clean_image(size, derive_seed(seed, 50 + i));
    RainParams p;
    p.seed = derive_seed(seed, std::uint64_t(i));
    p.intensity = 0.75;
    p.angle_deg = -25.0 + 17.0 * i;
    p.density = 28;
    p.length_px = 14;
    p.width_px = 1.5;
    auto rainy = composite(clean, render_streaks(p, size, size));
    ImagePair pair;
    char name[16];
    std::snprintf(name, sizeof name, "p%02d.png", i);
    pair.name = name;
    pair.clean = clean;
    pair.clean.data = clean.data * 2.0f - 1.0f;
    pair.rainy = rainy;
    pair.rainy.data = rainy.data * 2.0f - 1.0f;
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

Criterion run_overfit() {
  Criterion c{"desk-scale overfit sanity (ID-CGAN, 4 pairs, 64x64)"};
  const auto t0 = std::chrono::steady_clock::now();
  TempDir tmp("overfit");
  auto pairs = overfit_pairs(4, 64, 42);

  TrainConfig cfg;
  cfg.ablation = Ablation::id_cgan;
  cfg.batch_size = 4;
  cfg.image_size = 64;
  cfg.iterations = 600;  // well inside the 2000-iteration budget
  cfg.seed = 7;
  cfg.log_every = 50;
  const auto run = train_run(pairs, cfg, tmp / "run");
  auto g = generator_weights_from(load_checkpoint(run.final_checkpoint));

  std::vector<EvalPair> rainy_pairs, derained_pairs;
  double psnr_sum = 0.0, ssim_sum = 0.0;
  for (const auto& p : pairs) {
    Tensor<float> clean01 = p.clean;
    clean01.data = (clean01.data + 1.0f) * 0.5f;
    Tensor<float> rainy01 = p.rainy;
    rainy01.data = (rainy01.data + 1.0f) * 0.5f;
    auto derained = derain_image(rainy01, g);
    psnr_sum += psnr(luminance(clean01), luminance(derained));
    ssim_sum += ssim(luminance(clean01), luminance(derained));
    rainy_pairs.push_back({p.name, clean01, rainy01});
    derained_pairs.push_back({p.name, clean01, derained});
  }
  const double mean_psnr = psnr_sum / 4.0, mean_ssim = ssim_sum / 4.0;
  const auto before = evaluate_corpus(rainy_pairs);
  const auto after = evaluate_corpus(derained_pairs);
  const bool improved = after.mean.psnr_db > before.mean.psnr_db &&
                        after.mean.ssim > before.mean.ssim &&
                        after.mean.uqi > before.mean.uqi && after.mean.vif > before.mean.vif;
  const double dt = seconds_since(t0);
  c.pass = mean_psnr >= 25.0 && mean_ssim >= 0.85 && improved && dt < 1800.0;
  c.detail = fmt("%ld iters: PSNR %.2f dB (>= 25), SSIM %.4f (>= 0.85); "
                 "derained vs rainy means: psnr %.2f>%.2f ssim %.3f>%.3f uqi %.3f>%.3f "
                 "vif %.3f>%.3f; %.0f s (< 1800 s)",
                 run.iterations_run, mean_psnr, mean_ssim, after.mean.psnr_db,
                 before.mean.psnr_db, after.mean.ssim, before.mean.ssim, after.mean.uqi,
                 before.mean.uqi, after.mean.vif, before.mean.vif, dt);
  return c;
}

// ---- 6. architecture shape contracts ---------------------------------------

Criterion run_shapes() {
  Criterion c{"architecture shape contracts"};
  GeneratorConfig gc;
  auto g = init_weights<float>(gc, 8001);
  bool ok = true;
  std::string why;
  for (int size : {64, 128, 256}) {
    auto x = random_image({1, 3, size, size}, 9000 + size);
    auto y = generator_forward<float>(nullptr, x, g, gc, Mode::eval);
    if (y.shape != Shape{1, 3, size, size}) {
      ok = false;
      why = fmt("generator broke %dx%d", size, size);
    }
  }
  DiscriminatorConfig dc;
  auto d = init_weights<float>(dc, 8002);
  auto cond = random_image({1, 3, 256, 256}, 9501);
  auto cand = random_image({1, 3, 256, 256}, 9502);
  auto map = discriminator_patch_map<float>(nullptr, cond, cand, d, dc, Mode::eval);
  if (map.shape != Shape{1, 1, 30, 30}) {
    ok = false;
    why = "patch map is not 30x30 at 256x256";
  }
  for (auto& [name, t] : d) {
    if (name.find(".running_var") == std::string::npos) t.data.setZero();
  }
  auto small_cond = random_image({2, 3, 64, 64}, 9503);
  auto small_cand = random_image({2, 3, 64, 64}, 9504);
  auto score = discriminator_forward<float>(nullptr, small_cond, small_cand, d, dc, Mode::train);
  if (!(score.data == 0.5f).all()) {
    ok = false;
    why = "zero-weight discriminator score is not exactly 0.5";
  }
  c.pass = ok;
  c.detail = ok ? "generator preserves 64/128/256; 256 patch map 30x30; zero-weight score 0.5"
              : why;
  return c;
}

// ---- 7. determinism & persistence -------------------------------------------

Criterion run_determinism() {
  Criterion c{"determinism and checkpoint persistence"};
  setenv("DERAIN_THREADS", "1", 1);  // single-threaded deterministic mode
  TempDir tmp("det");
  auto pairs = overfit_pairs(4, 32, 77);
  TrainConfig cfg;
  cfg.ablation = Ablation::id_cgan;
  cfg.batch_size = 2;
  cfg.image_size = 32;
  cfg.iterations = 8;
  cfg.seed = 5;
  cfg.gen_width = 16;
  cfg.disc_width = 16;
  cfg.log_every = 1;

  auto a = train_run(pairs, cfg, tmp / "a");
  auto b = train_run(pairs, cfg, tmp / "b");
  const bool logs_equal = slurp(a.log_path) == slurp(b.log_path);
  const bool ckpts_equal = slurp(a.final_checkpoint) == slurp(b.final_checkpoint);

  TrainConfig half = cfg;
  half.iterations = 4;
  auto h = train_run(pairs, half, tmp / "half");
  auto resumed = train_run(pairs, cfg, tmp / "resumed", h.final_checkpoint);
  const bool resume_equal = slurp(a.final_checkpoint) == slurp(resumed.final_checkpoint);
  unsetenv("DERAIN_THREADS");

  c.pass = logs_equal && ckpts_equal && resume_equal;
  c.detail = fmt("fixed-seed logs %s, checkpoints %s; save/load/continue %s uninterrupted run",
                 logs_equal ? "identical" : "DIFFER", ckpts_equal ? "identical" : "DIFFER",
                 resume_equal ? "bit-equals" : "DIFFERS FROM");
  return c;
}

// ---- 8. rain model -----------------------------------------------------------

Criterion run_rain_model() {
  Criterion c{"additive rain model"};
  TempDir tmp("rain");
  fs::create_directories(tmp / "src");
  for (int i = 0; i < 2; ++i) {
    encode_image(oracles::bright_clean_image(64, 100 + i),
                 (fs::path(tmp / "src") / ("c" + std::to_string(i) + ".png")).string());
  }
  auto rows = build_dataset(tmp / "src", tmp / "out", RainRanges{}, 8, 64, 3001);
  bool additive = true;
  for (const auto& row : rows) {
    const auto clean = decode_image((fs::path(tmp / "out") / row.clean).string());
    const auto rainy = decode_image((fs::path(tmp / "out") / row.rainy).string());
    additive = additive && ((rainy.data - clean.data) >= -1.0f / 255.0f).all();
  }

  RainRanges zero;
  zero.intensity_lo = zero.intensity_hi = 0.0;
  auto zrows = build_dataset(tmp / "src", tmp / "zero", zero, 2, 64, 3002);
  bool exact = true;
  for (const auto& row : zrows) {
    exact = exact && slurp((fs::path(tmp / "zero") / row.clean).string()) ==
                         slurp((fs::path(tmp / "zero") / row.rainy).string());
  }

  RainParams p;
  p.intensity = 0.8;
  p.angle_deg = 20.0;
  p.density = 30.0;
  p.seed = 11;
  const double angle = oracles::dominant_angle_deg(render_streaks(p, 128, 128));

  c.pass = additive && exact && std::abs(angle - 20.0) <= 5.0;
  c.detail = fmt("rainy-clean >= -1/255 %s; intensity 0 reproduces clean %s; "
                 "orientation 20° recovered as %.1f° (±5°)",
                 additive ? "ok" : "BROKEN", exact ? "exactly" : "BROKEN", angle);
  return c;
}

}  // namespace

int main() {
  std::vector<Criterion (*)()> sections = {
      run_gradient_suite, run_adjointness, run_loss_identities, run_metric_oracles,
      run_overfit,        run_shapes,      run_determinism,     run_rain_model};
  std::vector<Criterion> results;
  for (std::size_t i = 0; i < sections.size(); ++i) {
    std::fprintf(stderr, "running criterion %zu/%zu...\n", i + 1, sections.size());
    results.push_back(sections[i]());
  }
  int passed = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    std::printf("[%zu/%zu] %s  %s — %s\n", i + 1, results.size(), r.pass ? "PASS" : "FAIL",
                r.name.c_str(), r.detail.c_str());
    passed += r.pass ? 1 : 0;
  }
  std::printf("acceptance: %d/%zu criteria passed\n", passed, results.size());
  return passed == int(results.size()) ? 0 : 1;
}
