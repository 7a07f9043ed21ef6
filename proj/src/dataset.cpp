#include "idcgan/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "idcgan/image_io.hpp"
#include "idcgan/parallel.hpp"

namespace fs = std::filesystem;

namespace idcgan {

std::vector<std::string> list_images(const std::string& dir) {
  if (!fs::is_directory(dir)) throw DataError("not a directory: '" + dir + "'");
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string ext = entry.path().extension().string();
    if (ext == ".png" || ext == ".ppm") names.push_back(entry.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  return names;
}

std::vector<ImagePair> load_pairs(const std::string& root) {
  const fs::path clean_dir = fs::path(root) / "clean";
  const fs::path rainy_dir = fs::path(root) / "rainy";
  const auto names = list_images(rainy_dir.string());
  if (names.empty()) throw DataError("no images under '" + rainy_dir.string() + "'");
  std::vector<ImagePair> pairs(names.size());
  parallel_for(static_cast<std::int64_t>(names.size()), [&](std::int64_t i) {
    const std::string& name = names[static_cast<std::size_t>(i)];
    const fs::path clean_path = clean_dir / name;
    if (!fs::exists(clean_path)) {
      throw DataError("rainy image '" + name + "' has no clean counterpart");
    }
    ImagePair pair;
    pair.name = name;
    pair.rainy = decode_image((rainy_dir / name).string());
    pair.clean = decode_image(clean_path.string());
    expect(pair.rainy.shape == pair.clean.shape,
           "pair '" + name + "': clean and rainy dimensions differ");
    pair.rainy.data = pair.rainy.data * 2.0f - 1.0f;
    pair.clean.data = pair.clean.data * 2.0f - 1.0f;
    pairs[static_cast<std::size_t>(i)] = std::move(pair);
  });
  return pairs;
}

namespace {

std::string pair_filename(long id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "pair_%05ld.png", id);
  return buf;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

std::vector<ManifestRow> build_dataset(const std::string& clean_dir, const std::string& out_dir,
                                       const RainRanges& ranges, int count, int size,
                                       std::uint64_t seed) {
  expect(count >= 0, "build_dataset: negative count");
  expect(size >= 16, "build_dataset: size must be at least 16");
  fs::create_directories(out_dir);
  std::vector<ManifestRow> rows(static_cast<std::size_t>(count));
  if (count > 0) {
    const auto sources = list_images(clean_dir);
    if (sources.empty()) throw DataError("no decodable images under '" + clean_dir + "'");
    fs::create_directories(fs::path(out_dir) / "clean");
    fs::create_directories(fs::path(out_dir) / "rainy");
    parallel_for(count, [&](std::int64_t i) {
      const std::string& source = sources[static_cast<std::size_t>(i) % sources.size()];
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
      RainParams params;
      params.intensity = rng.uniform(ranges.intensity_lo, ranges.intensity_hi);
      params.angle_deg = rng.uniform(ranges.angle_lo, ranges.angle_hi);
      params.density = rng.uniform(ranges.density_lo, ranges.density_hi);
      params.length_px = rng.uniform(ranges.length_lo, ranges.length_hi);
      params.width_px = rng.uniform(ranges.width_lo, ranges.width_hi);
      params.mode = ranges.mode;
      params.seed = derive_seed(seed, static_cast<std::uint64_t>(i) + 0x100000000ull);

      Tensor<float> clean = decode_image((fs::path(clean_dir) / source).string());
      if (clean.dim(1) != size || clean.dim(2) != size) {
        clean = resize_bilinear(center_crop_square(clean), size, size);
      }
      const Tensor<float> field = render_streaks(params, size, size);
      const Tensor<float> rainy = composite(clean, field);

      ManifestRow row;
      row.id = static_cast<long>(i);
      row.clean = "clean/" + pair_filename(row.id);
      row.rainy = "rainy/" + pair_filename(row.id);
      row.params = params;
      encode_image(clean, (fs::path(out_dir) / row.clean).string());
      encode_image(rainy, (fs::path(out_dir) / row.rainy).string());
      rows[static_cast<std::size_t>(i)] = std::move(row);
    });
  }
  write_manifest((fs::path(out_dir) / "manifest.csv").string(), rows);
  return rows;
}

void write_manifest(const std::string& path, const std::vector<ManifestRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write manifest '" + path + "'");
  out << "id,clean,rainy,intensity,angle_deg,density,length_px,width_px,seed\n";
  for (const auto& r : rows) {
    out << r.id << ',' << r.clean << ',' << r.rainy << ',' << format_double(r.params.intensity)
        << ',' << format_double(r.params.angle_deg) << ',' << format_double(r.params.density)
        << ',' << format_double(r.params.length_px) << ',' << format_double(r.params.width_px)
        << ',' << r.params.seed << '\n';
  }
  if (!out) throw DataError("write failed for manifest '" + path + "'");
}

std::vector<ManifestRow> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty manifest '" + path + "'");
  if (line != "id,clean,rainy,intensity,angle_deg,density,length_px,width_px,seed") {
    throw DataError("unexpected manifest header in '" + path + "'");
  }
  std::vector<ManifestRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 9) throw DataError("malformed manifest row in '" + path + "'");
    ManifestRow r;
    r.id = std::stol(fields[0]);
    r.clean = fields[1];
    r.rainy = fields[2];
    r.params.intensity = std::stod(fields[3]);
    r.params.angle_deg = std::stod(fields[4]);
    r.params.density = std::stod(fields[5]);
    r.params.length_px = std::stod(fields[6]);
    r.params.width_px = std::stod(fields[7]);
    r.params.seed = std::stoull(fields[8]);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace idcgan
