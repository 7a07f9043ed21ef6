#pragma once

#include <string>
#include <vector>

#include "idcgan/rain.hpp"
#include "idcgan/tensor.hpp"

namespace idcgan {

// A (rainy x, clean y) sample in normalized [-1,1] space, layout [3,H,W].
struct ImagePair {
  std::string name;
  Tensor<float> rainy, clean;
};

// Loads a paired dataset rooted at `root` with `clean/` and `rainy/`
// subdirectories matched by identical filenames. Every rainy file must have
// a clean counterpart and per-pair dimensions must agree. Images are
// normalized to [-1,1] at ingestion.
std::vector<ImagePair> load_pairs(const std::string& root);

// Per-pair sampling ranges for the dataset builder.
struct RainRanges {
  double intensity_lo = 0.3, intensity_hi = 1.0;
  double angle_lo = -45.0, angle_hi = 45.0;
  double density_lo = 10.0, density_hi = 40.0;
  double length_lo = 10.0, length_hi = 24.0;
  double width_lo = 1.0, width_hi = 2.5;
  RainParams::Mode mode = RainParams::Mode::rain;
};

struct ManifestRow {
  long id = 0;
  std::string clean, rainy;
  RainParams params;
};

// Builds `count` paired samples under out_dir/{clean,rainy}, round-robin
// over the clean sources (sorted by filename), each resized/cropped to
// size x size, with per-pair parameters drawn uniformly from the declared
// ranges and per-pair seeds derived by a splittable counter scheme. Writes
// out_dir/manifest.csv and returns its rows. Deterministic in (inputs,
// ranges, seed).
std::vector<ManifestRow> build_dataset(const std::string& clean_dir, const std::string& out_dir,
                                       const RainRanges& ranges, int count, int size,
                                       std::uint64_t seed);

// Manifest serialization: header row then one comma-separated record per
// pair: id,clean,rainy,intensity,angle_deg,density,length_px,width_px,seed.
void write_manifest(const std::string& path, const std::vector<ManifestRow>& rows);
std::vector<ManifestRow> read_manifest(const std::string& path);

// Sorted list of decodable image files (.png/.ppm) directly under dir.
std::vector<std::string> list_images(const std::string& dir);

}  // namespace idcgan
