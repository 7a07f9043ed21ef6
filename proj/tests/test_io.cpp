#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include <zlib.h>
#include <unistd.h>

#include "idcgan/checkpoint.hpp"
#include "idcgan/config.hpp"
#include "idcgan/dataset.hpp"
#include "idcgan/image_io.hpp"
#include "idcgan/rng.hpp"

using namespace idcgan;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("idcgan_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

Tensor<float> random_bytes_image(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<float> t = Tensor<float>::zeros({3, h, w});
  for (std::int64_t i = 0; i < t.size(); ++i) {
    t.data[i] = float(rng.below(256)) / 255.0f;  // exactly representable byte values
  }
  return t;
}

std::vector<unsigned char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(bool(in));
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void make_clean_sources(const std::string& dir, int count, int side = 48) {
  fs::create_directories(dir);
  for (int i = 0; i < count; ++i) {
    Tensor<float> img = Tensor<float>::zeros({3, side, side});
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x)
          img.data[(std::int64_t(c) * side + y) * side + x] =
              0.5f + 0.4f * std::sin(0.2f * (x + 3 * i)) * std::cos(0.15f * (y + c));
    char name[32];
    std::snprintf(name, sizeof name, "clean_%02d.png", i);
    encode_image(img, (fs::path(dir) / name).string());
  }
}

}  // namespace

TEST_CASE("PPM bytes are bit-exactly specified") {
  TempDir tmp("ppm");
  Tensor<float> img = Tensor<float>::zeros({3, 1, 2});
  img.data << 1.0f, 0.0f, 1.0f, 0.0f, 1.0f, 0.0f;  // white pixel, black pixel
  const std::string path = tmp / "tiny.ppm";
  encode_image(img, path);
  const auto bytes = slurp(path);
  const std::string want_header = "P6\n2 1\n255\n";
  REQUIRE(bytes.size() == want_header.size() + 6);
  CHECK(std::equal(want_header.begin(), want_header.end(), bytes.begin()));
  CHECK(bytes[want_header.size() + 0] == 0xFF);
  CHECK(bytes[want_header.size() + 1] == 0xFF);
  CHECK(bytes[want_header.size() + 2] == 0xFF);
  CHECK(bytes[want_header.size() + 3] == 0x00);
  CHECK(bytes[want_header.size() + 4] == 0x00);
  CHECK(bytes[want_header.size() + 5] == 0x00);
}

TEST_CASE("encode rounds half away from zero") {
  TempDir tmp("round");
  Tensor<float> img = Tensor<float>::constant({3, 1, 1}, 0.5f);  // 127.5 -> 128
  const std::string path = tmp / "half.ppm";
  encode_image(img, path);
  const auto bytes = slurp(path);
  CHECK(bytes[bytes.size() - 1] == 128);
}

TEST_CASE("PNG and PPM round trips are exact on byte images") {
  TempDir tmp("roundtrip");
  const auto img = random_bytes_image(21, 17, 5);
  for (const char* name : {"a.png", "a.ppm"}) {
    const std::string path = tmp / name;
    encode_image(img, path);
    const auto back = decode_image(path);
    REQUIRE(back.shape == img.shape);
    CHECK((back.data == img.data).all());
  }
}

TEST_CASE("PNG encoding is deterministic") {
  TempDir tmp("pngdet");
  const auto img = random_bytes_image(33, 29, 6);
  encode_image(img, tmp / "x.png");
  encode_image(img, tmp / "y.png");
  CHECK(slurp(tmp / "x.png") == slurp(tmp / "y.png"));
}

TEST_CASE("decoder rejects garbage, truncation, and unknown formats") {
  TempDir tmp("bad");
  {
    std::ofstream out(tmp / "junk.png", std::ios::binary);
    out << "definitely not an image";
  }
  CHECK_THROWS_AS(decode_image(tmp / "junk.png"), DataError);
  {
    std::ofstream out(tmp / "trunc.ppm", std::ios::binary);
    out << "P6\n4 4\n255\n12";  // far fewer than 48 payload bytes
  }
  CHECK_THROWS_AS(decode_image(tmp / "trunc.ppm"), DataError);
  const auto img = random_bytes_image(8, 8, 7);
  encode_image(img, tmp / "ok.png");
  auto bytes = slurp(tmp / "ok.png");
  bytes[bytes.size() / 2] ^= 0x5a;  // corrupt inside IDAT
  {
    std::ofstream out(tmp / "corrupt.png", std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  }
  CHECK_THROWS_AS(decode_image(tmp / "corrupt.png"), DataError);
  CHECK_THROWS_AS(decode_image(tmp / "missing.png"), DataError);
}

TEST_CASE("checkpoints round trip bit-exactly") {
  TempDir tmp("ckpt");
  Rng rng(8);
  WeightStore<float> store;
  store.emplace("g.a", Tensor<float>::constant({3, 2}, 1.5f));
  Tensor<float> noisy = Tensor<float>::zeros({2, 3, 4, 4});
  for (std::int64_t i = 0; i < noisy.size(); ++i) noisy.data[i] = float(rng.normal());
  store.emplace("d.b", noisy);
  store.emplace("meta.iteration", Tensor<float>::constant({1}, 123.0f));
  const std::string path = tmp / "w.idcg";
  save_checkpoint(store, path);
  const auto back = load_checkpoint(path);
  REQUIRE(back.size() == store.size());
  for (const auto& [name, t] : store) {
    REQUIRE(back.count(name) == 1);
    CHECK(back.at(name).shape == t.shape);
    CHECK((back.at(name).data == t.data).all());
  }
}

TEST_CASE("empty checkpoint stores are valid files") {
  TempDir tmp("ckpt0");
  const std::string path = tmp / "empty.idcg";
  save_checkpoint({}, path);
  CHECK(load_checkpoint(path).empty());
}

TEST_CASE("any flipped byte breaks the checkpoint CRC") {
  TempDir tmp("ckptcrc");
  WeightStore<float> store;
  store.emplace("g.k", Tensor<float>::constant({4}, 0.25f));
  const std::string path = tmp / "w.idcg";
  save_checkpoint(store, path);
  auto bytes = slurp(path);
  Rng rng(9);
  for (int trial = 0; trial < 8; ++trial) {
    auto corrupted = bytes;
    corrupted[rng.below(corrupted.size() - 4)] ^= 0x01;  // anywhere in the covered prefix
    const std::string bad = tmp / "bad.idcg";
    std::ofstream out(bad, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(corrupted.data()), std::streamsize(corrupted.size()));
    out.close();
    CHECK_THROWS_AS(load_checkpoint(bad), DataError);
  }
}

TEST_CASE("checkpoint version mismatches name both versions") {
  TempDir tmp("ckptver");
  const std::string path = tmp / "w.idcg";
  save_checkpoint({}, path);
  auto bytes = slurp(path);
  bytes[4] = 9;  // bump the little-endian version field
  // recompute the trailing CRC so only the version check trips
  const std::uint32_t crc =
      std::uint32_t(crc32(0, bytes.data(), uInt(bytes.size() - 4)));
  bytes[bytes.size() - 4] = static_cast<unsigned char>(crc);
  bytes[bytes.size() - 3] = static_cast<unsigned char>(crc >> 8);
  bytes[bytes.size() - 2] = static_cast<unsigned char>(crc >> 16);
  bytes[bytes.size() - 1] = static_cast<unsigned char>(crc >> 24);
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  }
  try {
    load_checkpoint(path);
    FAIL("expected a version error");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("version") != std::string::npos);
    CHECK(msg.find('9') != std::string::npos);   // file version
    CHECK(msg.find('1') != std::string::npos);   // reader version
  }
}

TEST_CASE("config files parse with precedence-ready semantics") {
  TempDir tmp("cfg");
  {
    std::ofstream out(tmp / "run.conf");
    out << "# training setup\n"
        << "ablation = cgan\n"
        << "iterations = 12   # short run\n"
        << "learning_rate = 1e-3\n"
        << "image_size = 32\n";
  }
  auto kv = parse_config_file(tmp / "run.conf");
  TrainConfig cfg;
  apply_config(cfg, kv);
  CHECK(cfg.ablation == Ablation::cgan);
  CHECK(cfg.iterations == 12);
  CHECK(cfg.learning_rate == 1e-3);
  CHECK(cfg.image_size == 32);
  CHECK(cfg.batch_size == 7);  // untouched default

  {
    std::ofstream out(tmp / "typo.conf");
    out << "iteratoins = 12\n";
  }
  auto bad = parse_config_file(tmp / "typo.conf");
  CHECK_THROWS_AS(apply_config(cfg, bad), UsageError);

  {
    std::ofstream out(tmp / "dup.conf");
    out << "seed = 1\nseed = 2\n";
  }
  CHECK_THROWS_AS(parse_config_file(tmp / "dup.conf"), UsageError);

  {
    std::ofstream out(tmp / "range.conf");
    out << "image_size = 20\n";
  }
  auto range = parse_config_file(tmp / "range.conf");
  TrainConfig cfg2;
  CHECK_THROWS_AS(apply_config(cfg2, range), UsageError);
}

TEST_CASE("build_dataset: count=0 emits an empty manifest and no files") {
  TempDir tmp("ds0");
  make_clean_sources(tmp / "clean_src", 1);
  auto rows = build_dataset(tmp / "clean_src", tmp / "out", RainRanges{}, 0, 32, 1);
  CHECK(rows.empty());
  CHECK(fs::exists(fs::path(tmp / "out") / "manifest.csv"));
  CHECK(!fs::exists(fs::path(tmp / "out") / "clean"));
  CHECK(read_manifest((fs::path(tmp / "out") / "manifest.csv").string()).empty());
}

TEST_CASE("build_dataset is deterministic down to the bytes") {
  TempDir tmp("dsdet");
  make_clean_sources(tmp / "clean_src", 2);
  auto r1 = build_dataset(tmp / "clean_src", tmp / "a", RainRanges{}, 4, 32, 77);
  auto r2 = build_dataset(tmp / "clean_src", tmp / "b", RainRanges{}, 4, 32, 77);
  CHECK(slurp(tmp / "a/manifest.csv") == slurp(tmp / "b/manifest.csv"));
  for (const auto& row : r1) {
    CHECK(slurp((fs::path(tmp / "a") / row.rainy).string()) ==
          slurp((fs::path(tmp / "b") / row.rainy).string()));
    CHECK(slurp((fs::path(tmp / "a") / row.clean).string()) ==
          slurp((fs::path(tmp / "b") / row.clean).string()));
  }
  (void)r2;
}

TEST_CASE("build_dataset assigns clean sources round robin") {
  TempDir tmp("dsrr");
  make_clean_sources(tmp / "clean_src", 10);
  auto rows = build_dataset(tmp / "clean_src", tmp / "out", RainRanges{}, 25, 32, 3);
  REQUIRE(rows.size() == 25);
  // 25 pairs over 10 sources: each source used 2 or 3 times; verify by id
  std::vector<int> uses(10, 0);
  for (const auto& row : rows) uses[std::size_t(row.id % 10)]++;
  for (int u : uses) CHECK((u == 2 || u == 3));
}

TEST_CASE("built pairs satisfy the additive rain model after quantization") {
  TempDir tmp("dsadd");
  make_clean_sources(tmp / "clean_src", 2);
  auto rows = build_dataset(tmp / "clean_src", tmp / "out", RainRanges{}, 6, 32, 9);
  for (const auto& row : rows) {
    const auto clean = decode_image((fs::path(tmp / "out") / row.clean).string());
    const auto rainy = decode_image((fs::path(tmp / "out") / row.rainy).string());
    CHECK(((rainy.data - clean.data) >= -1.0f / 255.0f).all());
  }
}

TEST_CASE("full parameter ranges produce a diverse 100-pair dataset") {
  TempDir tmp("dsdiv");
  make_clean_sources(tmp / "clean_src", 3);
  auto rows = build_dataset(tmp / "clean_src", tmp / "out", RainRanges{}, 100, 32, 123);
  double alo = 1e9, ahi = -1e9, ilo = 1e9, ihi = -1e9;
  for (const auto& row : rows) {
    alo = std::min(alo, row.params.angle_deg);
    ahi = std::max(ahi, row.params.angle_deg);
    ilo = std::min(ilo, row.params.intensity);
    ihi = std::max(ihi, row.params.intensity);
  }
  CHECK(ahi - alo >= 60.0);
  CHECK(ihi - ilo >= 0.5);
}

TEST_CASE("manifests round trip at the printed precision") {
  TempDir tmp("mf");
  make_clean_sources(tmp / "clean_src", 1);
  auto rows = build_dataset(tmp / "clean_src", tmp / "out", RainRanges{}, 3, 32, 5);
  auto back = read_manifest((fs::path(tmp / "out") / "manifest.csv").string());
  REQUIRE(back.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(back[i].id == rows[i].id);
    CHECK(back[i].clean == rows[i].clean);
    CHECK(back[i].params.seed == rows[i].params.seed);
    CHECK(back[i].params.intensity == doctest::Approx(rows[i].params.intensity).epsilon(1e-5));
    CHECK(back[i].params.angle_deg == doctest::Approx(rows[i].params.angle_deg).epsilon(1e-5));
  }
}

TEST_CASE("load_pairs pairs by filename and normalizes to [-1,1]") {
  TempDir tmp("pairs");
  make_clean_sources(tmp / "clean_src", 2);
  build_dataset(tmp / "clean_src", tmp / "out", RainRanges{}, 4, 32, 11);
  auto pairs = load_pairs(tmp / "out");
  REQUIRE(pairs.size() == 4);
  for (const auto& p : pairs) {
    CHECK(p.clean.shape == Shape{3, 32, 32});
    CHECK((p.clean.data >= -1.0f).all());
    CHECK((p.clean.data <= 1.0f).all());
    CHECK((p.rainy.data >= p.clean.data - 1e-2f).all());  // additive model survives normalization
  }
  // a rainy file without a clean counterpart is an error
  fs::remove(fs::path(tmp / "out") / "clean" / "pair_00002.png");
  CHECK_THROWS_AS(load_pairs(tmp / "out"), DataError);
}

TEST_CASE("resize and crop utilities are deterministic and shape-correct") {
  const auto img = random_bytes_image(37, 53, 13);
  const auto sq = center_crop_square(img);
  CHECK(sq.shape == Shape{3, 37, 37});
  const auto small = resize_bilinear(sq, 24, 24);
  CHECK(small.shape == Shape{3, 24, 24});
  const auto small2 = resize_bilinear(sq, 24, 24);
  CHECK((small.data == small2.data).all());
  CHECK((small.data >= 0.0f).all());
  CHECK((small.data <= 1.0f).all());
}
