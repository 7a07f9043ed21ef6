#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "idcgan/checkpoint.hpp"
#include "idcgan/config.hpp"
#include "idcgan/dataset.hpp"
#include "idcgan/gradcheck.hpp"
#include "idcgan/image_io.hpp"
#include "idcgan/metrics.hpp"
#include "idcgan/train.hpp"

namespace fs = std::filesystem;
using namespace idcgan;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

std::pair<double, double> parse_range(const std::string& flag, const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) {
    throw UsageError("--" + flag + " expects 'lo,hi', got '" + text + "'");
  }
  try {
    const double lo = std::stod(text.substr(0, comma));
    const double hi = std::stod(text.substr(comma + 1));
    if (hi < lo) throw UsageError("--" + flag + ": hi must be >= lo");
    return {lo, hi};
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception&) {
    throw UsageError("--" + flag + " expects numbers 'lo,hi', got '" + text + "'");
  }
}

int run_synth(const std::string& clean_dir, const std::string& out_dir, int count,
              std::uint64_t seed, const std::string& intensity, const std::string& angle,
              const std::string& density, int size, const std::string& mode) {
  RainRanges ranges;
  if (!intensity.empty()) {
    std::tie(ranges.intensity_lo, ranges.intensity_hi) = parse_range("intensity-range", intensity);
  }
  if (!angle.empty()) {
    std::tie(ranges.angle_lo, ranges.angle_hi) = parse_range("angle-range", angle);
  }
  if (!density.empty()) {
    std::tie(ranges.density_lo, ranges.density_hi) = parse_range("density-range", density);
  }
  if (mode == "rain") ranges.mode = RainParams::Mode::rain;
  else if (mode == "snow") ranges.mode = RainParams::Mode::snow;
  else throw UsageError("--mode must be rain or snow, got '" + mode + "'");
  if (ranges.intensity_lo < 0 || ranges.intensity_hi > 1) {
    throw UsageError("--intensity-range must stay within [0,1]");
  }
  if (ranges.density_lo <= 0) throw UsageError("--density-range must be positive");

  const auto rows = build_dataset(clean_dir, out_dir, ranges, count, size, seed);
  std::cout << "synth: wrote " << rows.size() << " pairs under " << out_dir << "\n";
  return kExitOk;
}

int run_train(CLI::App* cmd, const std::string& data_dir, const std::string& out_dir,
              const std::string& ablation_flag, const std::string& config_path,
              long iters, int batch, double lr, double lambda_a, double lambda_p, int size,
              std::uint64_t seed, const std::string& resume, long checkpoint_every,
              long log_every, const std::string& perceptual_ckpt) {
  TrainConfig cfg;  // built-in defaults
  if (!config_path.empty()) apply_config(cfg, parse_config_file(config_path));

  // CLI flags override the config file
  Ablation ablation = cfg.ablation;
  if (cmd->count("--ablation") > 0 && !ablation_from_string(ablation_flag, ablation)) {
    throw UsageError("unknown ablation '" + ablation_flag + "' (want gen|cgan|cgan-p|id-cgan)");
  }
  cfg.ablation = ablation;
  if (cmd->count("--iters") > 0) cfg.iterations = iters;
  if (cmd->count("--batch") > 0) cfg.batch_size = batch;
  if (cmd->count("--lr") > 0) cfg.learning_rate = lr;
  if (cmd->count("--lambda-a") > 0) cfg.lambda_a = lambda_a;
  if (cmd->count("--lambda-p") > 0) cfg.lambda_p = lambda_p;
  if (cmd->count("--size") > 0) cfg.image_size = size;
  if (cmd->count("--seed") > 0) cfg.seed = seed;
  if (cmd->count("--checkpoint-every") > 0) cfg.checkpoint_every = checkpoint_every;
  if (cmd->count("--log-every") > 0) cfg.log_every = log_every;
  if (cmd->count("--perceptual-checkpoint") > 0) {
    cfg.perceptual.source = PerceptualConfig::Source::checkpoint;
    cfg.perceptual.checkpoint_path = perceptual_ckpt;
  }

  // lambda flags only make sense where the corresponding term exists
  if (cfg.ablation == Ablation::gen &&
      (cmd->count("--lambda-a") > 0 || cmd->count("--lambda-p") > 0)) {
    throw UsageError("ablation 'gen' has no adversarial or perceptual term; λ flags are invalid");
  }
  if (cfg.ablation == Ablation::cgan && cmd->count("--lambda-p") > 0) {
    throw UsageError("ablation 'cgan' has no perceptual term; --lambda-p is invalid");
  }
  try {
    validate_train_config(cfg);
  } catch (const ShapeError& e) {
    throw UsageError(e.what());
  }

  const auto pairs = load_pairs(data_dir);
  const auto result = train_run(pairs, cfg, out_dir, resume);
  std::cout << "train: ran " << result.iterations_run << " iterations; final checkpoint "
            << result.final_checkpoint << "\n";
  return kExitOk;
}

int run_derain(const std::string& checkpoint_path, const std::string& input,
               const std::string& output) {
  auto g = generator_weights_from(load_checkpoint(checkpoint_path));
  if (fs::is_directory(input)) {
    fs::create_directories(output);
    const auto names = list_images(input);
    if (names.empty()) throw DataError("no images under '" + input + "'");
    for (const auto& name : names) {
      const auto img = decode_image((fs::path(input) / name).string());
      encode_image(derain_image(img, g), (fs::path(output) / name).string());
    }
    std::cout << "derain: wrote " << names.size() << " images under " << output << "\n";
  } else {
    const auto img = decode_image(input);
    std::string out_path = output;
    if (fs::is_directory(output)) {
      out_path = (fs::path(output) / fs::path(input).filename()).string();
    }
    encode_image(derain_image(img, g), out_path);
    std::cout << "derain: wrote " << out_path << "\n";
  }
  return kExitOk;
}

MetricSelection parse_metric_selection(const std::string& text) {
  MetricSelection sel{false, false, false, false};
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "psnr") sel.psnr = true;
    else if (item == "ssim") sel.ssim = true;
    else if (item == "uqi") sel.uqi = true;
    else if (item == "vif") sel.vif = true;
    else throw UsageError("--metrics: unknown measure '" + item + "'");
  }
  if (!sel.psnr && !sel.ssim && !sel.uqi && !sel.vif) {
    throw UsageError("--metrics selected nothing");
  }
  return sel;
}

void write_report_csv(const std::string& path, const MetricReport& rep,
                      const MetricSelection& sel) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write report '" + path + "'");
  out << "file";
  if (sel.psnr) out << ",psnr_db";
  if (sel.ssim) out << ",ssim";
  if (sel.uqi) out << ",uqi";
  if (sel.vif) out << ",vif";
  out << "\n";
  auto row = [&](const MetricRow& r) {
    out << r.file;
    char buf[32];
    if (sel.psnr) { std::snprintf(buf, sizeof buf, ",%.4f", r.psnr_db); out << buf; }
    if (sel.ssim) { std::snprintf(buf, sizeof buf, ",%.4f", r.ssim); out << buf; }
    if (sel.uqi) { std::snprintf(buf, sizeof buf, ",%.4f", r.uqi); out << buf; }
    if (sel.vif) { std::snprintf(buf, sizeof buf, ",%.4f", r.vif); out << buf; }
    out << "\n";
  };
  for (const auto& r : rep.rows) row(r);
  row(rep.mean);
  if (!out) throw DataError("write failed for report '" + path + "'");
}

int run_evaluate(const std::string& pairs_dir, const std::string& out_path,
                 const std::string& metrics_flag) {
  const MetricSelection sel =
      metrics_flag.empty() ? MetricSelection{} : parse_metric_selection(metrics_flag);
  const fs::path clean_dir = fs::path(pairs_dir) / "clean";
  const fs::path rainy_dir = fs::path(pairs_dir) / "rainy";
  const auto names = list_images(rainy_dir.string());
  if (names.empty()) throw DataError("no images under '" + rainy_dir.string() + "'");
  std::vector<EvalPair> pairs;
  for (const auto& name : names) {
    try {
      EvalPair pair;
      pair.name = name;
      pair.ref = decode_image((clean_dir / name).string());
      pair.test = decode_image((rainy_dir / name).string());
      expect(pair.ref.shape == pair.test.shape, "pair '" + name + "': size mismatch");
      pairs.push_back(std::move(pair));
    } catch (const std::exception& e) {
      std::cerr << "evaluate: skipping '" << name << "': " << e.what() << "\n";
    }
  }
  if (pairs.empty()) throw DataError("every pair failed to decode under '" + pairs_dir + "'");
  const auto rep = evaluate_corpus(pairs, sel);
  write_report_csv(out_path, rep, sel);
  std::cout << "evaluate: wrote " << rep.rows.size() << " rows to " << out_path << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ID-CGAN single-image de-raining: dataset synthesis, training, inference, "
               "evaluation"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Render a paired rain/snow dataset");
  std::string clean_dir, out_dir;
  int count = 0, size = 256;
  std::uint64_t seed = 0;
  std::string intensity_range, angle_range, density_range, mode = "rain";
  synth->add_option("--clean-dir", clean_dir, "Directory of clean source images")->required();
  synth->add_option("--out", out_dir, "Output dataset root")->required();
  synth->add_option("--count", count, "Number of pairs")->required();
  synth->add_option("--seed", seed, "Dataset seed");
  synth->add_option("--intensity-range", intensity_range, "Streak intensity range 'lo,hi'");
  synth->add_option("--angle-range", angle_range, "Streak angle range in degrees 'lo,hi'");
  synth->add_option("--density-range", density_range, "Streaks per 10^4 px 'lo,hi'");
  synth->add_option("--size", size, "Output image side length");
  synth->add_option("--mode", mode, "rain|snow");

  // train
  auto* train = app.add_subcommand("train", "Train a de-raining model");
  std::string data_dir, train_out, ablation = "id-cgan", config_path, resume, perceptual_ckpt;
  long iters = 0, checkpoint_every = 0, log_every = 10;
  int batch = 7, train_size = 64;
  double lr = 2e-3, lambda_a = 6.6e-3, lambda_p = 1.0;
  std::uint64_t train_seed = 0;
  train->add_option("--data", data_dir, "Dataset root (clean/ + rainy/)")->required();
  train->add_option("--out", train_out, "Run directory for checkpoints and logs")->required();
  train->add_option("--ablation", ablation, "gen|cgan|cgan-p|id-cgan");
  train->add_option("--config", config_path, "key = value config file");
  train->add_option("--iters", iters, "Training iterations");
  train->add_option("--batch", batch, "Batch size");
  train->add_option("--lr", lr, "Learning rate");
  train->add_option("--lambda-a", lambda_a, "Adversarial loss weight");
  train->add_option("--lambda-p", lambda_p, "Perceptual loss weight");
  train->add_option("--size", train_size, "Training image side length");
  train->add_option("--seed", train_seed, "Run seed");
  train->add_option("--resume", resume, "Checkpoint to continue from");
  train->add_option("--checkpoint-every", checkpoint_every, "Checkpoint period (0: final only)");
  train->add_option("--log-every", log_every, "Log period in iterations");
  train->add_option("--perceptual-checkpoint", perceptual_ckpt,
                    "Load the frozen feature network from this checkpoint");

  // derain
  auto* derain = app.add_subcommand("derain", "Apply a trained model");
  std::string ckpt, input, output;
  derain->add_option("--checkpoint", ckpt, "Trained checkpoint")->required();
  derain->add_option("--input", input, "Image file or directory")->required();
  derain->add_option("--output", output, "Output file or directory")->required();

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Full-reference quality report");
  std::string pairs_dir, report_path, metrics_flag;
  evaluate->add_option("--pairs", pairs_dir, "Dataset root (clean/ = reference, rainy/ = test)")
      ->required();
  evaluate->add_option("--out", report_path, "Report CSV path")->required();
  evaluate->add_option("--metrics", metrics_flag, "Comma list of psnr,ssim,uqi,vif");

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  std::uint64_t gc_seed = 20260809;
  gradcheck->add_option("--seed", gc_seed, "Suite seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints the message/help
    return e.get_exit_code() == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (synth->parsed()) {
      return run_synth(clean_dir, out_dir, count, seed, intensity_range, angle_range,
                       density_range, size, mode);
    }
    if (train->parsed()) {
      return run_train(train, data_dir, train_out, ablation, config_path, iters, batch, lr,
                       lambda_a, lambda_p, train_size, train_seed, resume, checkpoint_every,
                       log_every, perceptual_ckpt);
    }
    if (derain->parsed()) return run_derain(ckpt, input, output);
    if (evaluate->parsed()) return run_evaluate(pairs_dir, report_path, metrics_flag);
    if (gradcheck->parsed()) {
      return run_gradcheck(gc_seed, std::cout) ? kExitOk : kExitNumeric;
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
