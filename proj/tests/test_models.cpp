#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "idcgan/nets.hpp"
#include "idcgan/rng.hpp"

using namespace idcgan;

namespace {

using FT = Tensor<float>;

FT random_image(Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  FT t = FT::zeros(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t.data[i] = float(rng.uniform(-1.0, 1.0));
  return t;
}

void zero_all(WeightStore<float>& w) {
  for (auto& [name, t] : w) {
    if (name.find(".running_var") != std::string::npos) continue;  // keep variance positive
    t.data.setZero();
  }
}

}  // namespace

TEST_CASE("generator preserves shape and stays inside the tanh range") {
  GeneratorConfig gc{16};  // narrow width keeps the unit test fast
  auto w = init_weights<float>(gc, 1);
  for (int size : {64, 128}) {
    auto x = random_image({1, 3, size, size}, 7 + size);
    auto y = generator_forward<float>(nullptr, x, w, gc, Mode::eval);
    CHECK(y.shape == Shape{1, 3, size, size});
    CHECK((y.data >= -1.0f).all());
    CHECK((y.data <= 1.0f).all());
  }
  auto x = random_image({1, 3, 60, 76}, 3);  // stride-1 stack handles any size >= 8
  CHECK(generator_forward<float>(nullptr, x, w, gc, Mode::eval).shape == Shape{1, 3, 60, 76});
}

TEST_CASE("zeroed generator weights produce tanh(0) = 0 everywhere") {
  GeneratorConfig gc{8};
  auto w = init_weights<float>(gc, 2);
  zero_all(w);
  auto x = random_image({2, 3, 16, 16}, 5);
  for (Mode mode : {Mode::train, Mode::eval}) {
    auto y = generator_forward<float>(nullptr, x, w, gc, mode);
    CHECK((y.data == 0.0f).all());
  }
}

TEST_CASE("generator weight inventory matches the layer string") {
  GeneratorConfig gc{64};
  auto w = init_weights<float>(gc, 3);
  // 6 CBP blocks x (kernel,bias + 4 bn + slope) + 6 DBR blocks x (kernel,bias + 4 bn)
  CHECK(w.size() == 6 * 7 + 6 * 6);
  CHECK(w.at("g.enc1.conv.kernel").shape == Shape{64, 3, 3, 3});
  CHECK(w.at("g.enc5.conv.kernel").shape == Shape{32, 64, 3, 3});
  CHECK(w.at("g.enc6.conv.kernel").shape == Shape{1, 32, 3, 3});
  CHECK(w.at("g.dec1.conv.kernel").shape == Shape{1, 32, 3, 3});   // deconv: [Cin,Cout,kh,kw]
  CHECK(w.at("g.dec2.conv.kernel").shape == Shape{32, 64, 3, 3});
  CHECK(w.at("g.dec6.conv.kernel").shape == Shape{64, 3, 3, 3});
  CHECK(w.at("g.dec6.bn.gamma").shape == Shape{3});
  CHECK_THROWS_AS((init_weights<float>(GeneratorConfig{7}, 0)), ShapeError);  // odd width
}

TEST_CASE("initialization is seed-determined with the declared statistics") {
  GeneratorConfig gc{64};
  auto a = init_weights<float>(gc, 42);
  auto b = init_weights<float>(gc, 42);
  REQUIRE(a.size() == b.size());
  for (const auto& [name, t] : a) CHECK((t.data == b.at(name).data).all());
  auto c = init_weights<float>(gc, 43);
  CHECK(!(a.at("g.enc1.conv.kernel").data == c.at("g.enc1.conv.kernel").data).all());

  // sample mean of a 64x64x3x3 kernel ~ 0 within 3 sigma / sqrt(n)
  const auto& k = a.at("g.enc2.conv.kernel");
  REQUIRE(k.size() == 64 * 64 * 9);
  const double mean = k.data.cast<double>().mean();
  CHECK(std::abs(mean) < 3.0 * 0.02 / std::sqrt(double(k.size())));
  CHECK(a.at("g.enc1.conv.bias").data.abs().maxCoeff() == 0.0f);
  CHECK((a.at("g.enc1.bn.gamma").data == 1.0f).all());
  CHECK((a.at("g.enc1.prelu.slope").data == 0.25f).all());
}

TEST_CASE("discriminator patch map and score aggregation") {
  DiscriminatorConfig dc{48};
  auto w = init_weights<float>(dc, 4);
  SUBCASE("256x256 input yields a 30x30 patch map") {
    auto x = random_image({1, 3, 256, 256}, 9);
    auto y = random_image({1, 3, 256, 256}, 10);
    auto map = discriminator_patch_map<float>(nullptr, x, y, w, dc, Mode::eval);
    CHECK(map.shape == Shape{1, 1, 30, 30});
  }
  SUBCASE("zero weights score exactly 0.5") {
    zero_all(w);
    auto x = random_image({2, 3, 64, 64}, 11);
    auto y = random_image({2, 3, 64, 64}, 12);
    auto s = discriminator_forward<float>(nullptr, x, y, w, dc, Mode::train);
    REQUIRE(s.shape == Shape{2});
    CHECK(s.data[0] == 0.5f);
    CHECK(s.data[1] == 0.5f);
  }
  SUBCASE("scores stay in [0,1]") {
    auto x = random_image({2, 3, 32, 32}, 13);
    auto y = random_image({2, 3, 32, 32}, 14);
    auto s = discriminator_forward<float>(nullptr, x, y, w, dc, Mode::train);
    CHECK((s.data >= 0.0f).all());
    CHECK((s.data <= 1.0f).all());
  }
  SUBCASE("input contracts") {
    auto x = random_image({1, 3, 32, 32}, 15);
    auto y = random_image({1, 3, 64, 64}, 16);
    CHECK_THROWS_AS(discriminator_forward<float>(nullptr, x, y, w, dc, Mode::eval), ShapeError);
    auto odd = random_image({1, 3, 36, 36}, 17);  // not divisible by 8
    CHECK_THROWS_AS(discriminator_forward<float>(nullptr, odd, odd, w, dc, Mode::eval),
                    ShapeError);
  }
}

TEST_CASE("perceptual network is a frozen deterministic transform") {
  auto v = init_weights<float>(PerceptualConfig{}, 5);
  auto img = random_image({1, 3, 64, 64}, 18);
  auto f1 = perceptual_forward<float>(nullptr, img, v);
  CHECK(f1.shape == Shape{1, 128, 32, 32});
  auto f2 = perceptual_forward<float>(nullptr, img, v);
  CHECK((f1.data == f2.data).all());
  auto odd = random_image({1, 3, 63, 64}, 19);
  CHECK_THROWS_AS(perceptual_forward<float>(nullptr, odd, v), ShapeError);
}

TEST_CASE("skip wiring: zeroed early decoder isolates the encoder-4 skip") {
  GeneratorConfig gc{8};
  auto w = init_weights<float>(gc, 6);
  // kill the bottleneck path before the first skip join
  for (const char* p : {"g.dec1", "g.dec2"}) {
    w.at(std::string(p) + ".conv.kernel").data.setZero();
    w.at(std::string(p) + ".conv.bias").data.setZero();
    w.at(std::string(p) + ".bn.gamma").data.setZero();
    w.at(std::string(p) + ".bn.beta").data.setZero();
  }
  auto x = random_image({1, 3, 16, 16}, 20);
  auto base = generator_forward<float>(nullptr, x, w, gc, Mode::eval);

  // the bottleneck branch (enc5/enc6) must no longer influence the output
  auto w2 = w;
  Rng rng(77);
  for (const char* p : {"g.enc5", "g.enc6"}) {
    auto& k = w2.at(std::string(p) + ".conv.kernel");
    for (std::int64_t i = 0; i < k.size(); ++i) k.data[i] = float(rng.normal(0, 0.5));
  }
  auto same = generator_forward<float>(nullptr, x, w2, gc, Mode::eval);
  CHECK((same.data == base.data).all());

  // while the skipped activation (enc4 path) still does
  auto w3 = w;
  auto& k4 = w3.at("g.enc4.conv.kernel");
  for (std::int64_t i = 0; i < k4.size(); ++i) k4.data[i] = float(rng.normal(0, 0.5));
  auto changed = generator_forward<float>(nullptr, x, w3, gc, Mode::eval);
  CHECK(!(changed.data == base.data).all());
}

TEST_CASE("eval-mode forwards are per-sample: permuting the batch permutes outputs") {
  GeneratorConfig gc{8};
  auto w = init_weights<float>(gc, 8);
  auto a = random_image({1, 3, 16, 16}, 21);
  auto b = random_image({1, 3, 16, 16}, 22);
  auto c = random_image({1, 3, 16, 16}, 23);
  const std::int64_t chw = 3 * 16 * 16;
  FT abc = FT::zeros({3, 3, 16, 16});
  abc.data.segment(0 * chw, chw) = a.data;
  abc.data.segment(1 * chw, chw) = b.data;
  abc.data.segment(2 * chw, chw) = c.data;
  FT cab = FT::zeros({3, 3, 16, 16});
  cab.data.segment(0 * chw, chw) = c.data;
  cab.data.segment(1 * chw, chw) = a.data;
  cab.data.segment(2 * chw, chw) = b.data;
  auto y1 = generator_forward<float>(nullptr, abc, w, gc, Mode::eval);
  auto y2 = generator_forward<float>(nullptr, cab, w, gc, Mode::eval);
  CHECK((y1.data.segment(0 * chw, chw) == y2.data.segment(1 * chw, chw)).all());
  CHECK((y1.data.segment(1 * chw, chw) == y2.data.segment(2 * chw, chw)).all());
  CHECK((y1.data.segment(2 * chw, chw) == y2.data.segment(0 * chw, chw)).all());
}
