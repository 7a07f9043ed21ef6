#include "idcgan/config.hpp"

#include <fstream>

namespace idcgan {

namespace {

std::string trim(const std::string& s) {
  const auto from = s.find_first_not_of(" \t\r");
  if (from == std::string::npos) return "";
  const auto to = s.find_last_not_of(" \t\r");
  return s.substr(from, to - from + 1);
}

long to_long(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long out = std::stol(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw UsageError("config: key '" + key + "' needs an integer, got '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw UsageError("config: key '" + key + "' needs a number, got '" + v + "'");
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const std::uint64_t out = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw UsageError("config: key '" + key + "' needs an unsigned integer, got '" + v + "'");
  }
}

}  // namespace

std::map<std::string, std::string> parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file '" + path + "'");
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config: line " + std::to_string(lineno) + " of '" + path +
                       "' is not 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw UsageError("config: empty key on line " + std::to_string(lineno) + " of '" + path + "'");
    }
    if (!kv.emplace(key, value).second) {
      throw UsageError("config: duplicate key '" + key + "' in '" + path + "'");
    }
  }
  return kv;
}

void apply_config(TrainConfig& cfg, const std::map<std::string, std::string>& kv) {
  for (const auto& [key, value] : kv) {
    if (key == "ablation") {
      if (!ablation_from_string(value, cfg.ablation)) {
        throw UsageError("config: unknown ablation '" + value +
                         "' (want gen|cgan|cgan-p|id-cgan)");
      }
    } else if (key == "batch_size") {
      cfg.batch_size = static_cast<int>(to_long(key, value));
    } else if (key == "iterations") {
      cfg.iterations = to_long(key, value);
    } else if (key == "learning_rate") {
      cfg.learning_rate = to_double(key, value);
    } else if (key == "adam_beta1") {
      cfg.adam_beta1 = to_double(key, value);
    } else if (key == "adam_beta2") {
      cfg.adam_beta2 = to_double(key, value);
    } else if (key == "adam_eps") {
      cfg.adam_eps = to_double(key, value);
    } else if (key == "lambda_a") {
      cfg.lambda_a = to_double(key, value);
    } else if (key == "lambda_p") {
      cfg.lambda_p = to_double(key, value);
    } else if (key == "image_size") {
      cfg.image_size = static_cast<int>(to_long(key, value));
    } else if (key == "seed") {
      cfg.seed = to_u64(key, value);
    } else if (key == "checkpoint_every") {
      cfg.checkpoint_every = to_long(key, value);
    } else if (key == "log_every") {
      cfg.log_every = to_long(key, value);
    } else if (key == "d_steps") {
      cfg.d_steps = static_cast<int>(to_long(key, value));
    } else if (key == "gen_width") {
      cfg.gen_width = static_cast<int>(to_long(key, value));
    } else if (key == "disc_width") {
      cfg.disc_width = static_cast<int>(to_long(key, value));
    } else if (key == "perceptual_checkpoint") {
      cfg.perceptual.source = PerceptualConfig::Source::checkpoint;
      cfg.perceptual.checkpoint_path = value;
    } else {
      throw UsageError("config: unknown key '" + key + "'");
    }
  }
  try {
    validate_train_config(cfg);
  } catch (const ShapeError& e) {
    throw UsageError(e.what());
  }
}

}  // namespace idcgan
