#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "pdx/errors.hpp"
#include "pdx/gradcam.hpp"
#include "pdx/nn.hpp"
#include "pdx/tfr.hpp"

using namespace pdx;

namespace {

Tensor<float> random_input(const NetworkSpec& spec, uint64_t seed) {
  std::vector<size_t> shape = {1};
  shape.insert(shape.end(), spec.input_shape.begin(), spec.input_shape.end());
  Tensor<float> x(shape);
  Rng rng(seed);
  for (auto& v : x.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return x;
}

NetworkSpec small_cam_spec(size_t feature_channels) {
  NetworkSpec spec;
  spec.name = "camnet";
  spec.input_shape = {2, 24};
  spec.n_classes = 4;
  LayerSpec c1{LayerKind::conv1d, 6, 1, 3, 1, 1, 0, 1};
  LayerSpec relu{LayerKind::relu, 0, 1, 1, 1, 1, 0, 0};
  LayerSpec pool{LayerKind::maxpool1d, 0, 1, 2, 1, 2, 0, 0};
  LayerSpec c2{LayerKind::conv1d, feature_channels, 1, 3, 1, 1, 0, 1};
  LayerSpec gap{LayerKind::gap, 0, 1, 1, 1, 1, 0, 0};
  LayerSpec lin{LayerKind::linear, 4, 1, 1, 1, 1, 0, 0};
  spec.layers = {c1, relu, pool, c2, relu, gap, lin};
  return spec;
}

}  // namespace

TEST_CASE("CAM equivalence holds on every catalog architecture") {
  // with a GAP+linear head Grad-CAM reduces to the classic CAM up to 1/Z:
  // alpha_k = w[c][k]/Z, so raw = ReLU(sum_k w[c][k] A_k)/Z exactly
  for (const auto& name : catalog_names()) {
    CAPTURE(name);
    auto spec = make_network(name, 2);
    Net<float> net(spec);
    net.init_params(RngSeed{derive_seed(17, name)});
    auto x = random_input(spec, derive_seed(18, name));
    const int cls = 2;
    auto map = gradcam(net, x, cls);

    auto cam_pair = net.cam_maps(x, cls);
    auto params = net.params();
    const auto& w = *params[params.size() - 2];  // head weight (4, C)
    size_t C = cam_pair.activation.shape[0];
    size_t sp = 1;
    for (size_t d : cam_pair.map_shape) sp *= d;
    REQUIRE(map.raw.size() == sp);

    double worst = 0.0;
    for (size_t p = 0; p < sp; ++p) {
      double cam = 0.0;
      for (size_t k = 0; k < C; ++k)
        cam += static_cast<double>(w.data[static_cast<size_t>(cls) * C + k]) *
               static_cast<double>(cam_pair.activation.data[k * sp + p]);
      double expected = std::max(0.0, cam) / static_cast<double>(sp);
      worst = std::max(worst, std::abs(map.raw[p] - expected) / std::max(1.0, expected));
    }
    CHECK(worst <= 1e-5);
    for (double v : map.raw) CHECK(v >= 0.0);
    for (double v : map.values) CHECK(v >= 0.0);
    if (spec.is_2d())
      CHECK(map.shape == std::vector<size_t>{spec.input_shape[1], spec.input_shape[2]});
    else
      CHECK(map.shape == std::vector<size_t>{spec.input_shape[1]});
  }
}

TEST_CASE("zero head row gives an all-zero map") {
  auto spec = small_cam_spec(6);
  Net<float> net(spec);
  net.init_params(RngSeed{44});
  auto params = net.params();
  auto& w = *params[params.size() - 2];
  size_t C = w.shape[1];
  for (size_t k = 0; k < C; ++k) w.data[1 * C + k] = 0.0f;  // class 1 ignores the features
  auto x = random_input(spec, 9);
  auto map = gradcam(net, x, 1);
  for (double v : map.raw) CHECK(v == 0.0);
  for (double v : map.values) CHECK(v == 0.0);
  CHECK(attention_alignment_score(map, {{0, 8}}) == 0.0);
}

TEST_CASE("single feature map: heatmap proportional to the rectified activation") {
  auto spec = small_cam_spec(1);
  Net<float> net(spec);
  net.init_params(RngSeed{45});
  auto params = net.params();
  auto& w = *params[params.size() - 2];  // (4, 1)
  w.data[3] = 2.5f;                      // class 3, positive weight
  auto x = random_input(spec, 10);
  auto map = gradcam(net, x, 3);

  auto cam_pair = net.cam_maps(x, 3);
  size_t sp = cam_pair.map_shape[0];
  double alpha = 2.5 / static_cast<double>(sp);
  for (size_t p = 0; p < sp; ++p) {
    double expected = alpha * std::max(0.0, static_cast<double>(cam_pair.activation.data[p]));
    CHECK(map.raw[p] == doctest::Approx(expected).epsilon(1e-6));
  }
}

TEST_CASE("positive input scaling keeps the support (zero-bias ReLU net)") {
  auto spec = small_cam_spec(6);
  Net<float> net(spec);
  net.init_params(RngSeed{46});  // biases start at zero, so the net is positively homogeneous
  auto x = random_input(spec, 11);
  auto scaled = x;
  for (auto& v : scaled.data) v *= 2.75f;
  auto a = gradcam(net, x, 0);
  auto b = gradcam(net, scaled, 0);
  REQUIRE(a.raw.size() == b.raw.size());
  double amax = 0.0, bmax = 0.0;
  for (size_t i = 0; i < a.raw.size(); ++i) {
    amax = std::max(amax, a.raw[i]);
    bmax = std::max(bmax, b.raw[i]);
  }
  REQUIRE(amax > 0.0);
  REQUIRE(bmax > 0.0);
  for (size_t i = 0; i < a.raw.size(); ++i) {
    bool za = a.raw[i] <= 1e-9 * amax;
    bool zb = b.raw[i] <= 1e-9 * bmax;
    CHECK(za == zb);
  }
}

TEST_CASE("upsampling: align-corners linear and bilinear") {
  auto up = upsample_linear({0.0, 1.0}, 5);
  REQUIRE(up.size() == 5);
  for (size_t i = 0; i < 5; ++i) CHECK(up[i] == doctest::Approx(0.25 * i).epsilon(1e-12));

  auto flat = upsample_linear({3.0}, 4);
  for (double v : flat) CHECK(v == 3.0);

  // 2x2 corners stretch to a 3x3 with exact midpoints
  auto bi = upsample_bilinear({0.0, 1.0, 2.0, 3.0}, 2, 2, 3, 3);
  REQUIRE(bi.size() == 9);
  CHECK(bi[0] == doctest::Approx(0.0));
  CHECK(bi[2] == doctest::Approx(1.0));
  CHECK(bi[6] == doctest::Approx(2.0));
  CHECK(bi[8] == doctest::Approx(3.0));
  CHECK(bi[4] == doctest::Approx(1.5));  // center = mean of corners
  CHECK(bi[1] == doctest::Approx(0.5));
  CHECK(bi[3] == doctest::Approx(1.0));

  CHECK_THROWS_AS(upsample_linear({}, 4), ArgumentError);
  CHECK_THROWS_AS(upsample_bilinear({1.0, 2.0}, 2, 2, 4, 4), ArgumentError);

  // gradcam endpoints agree with the raw map under align-corners interpolation
  auto spec = small_cam_spec(6);
  Net<float> net(spec);
  net.init_params(RngSeed{47});
  auto x = random_input(spec, 12);
  auto map = gradcam(net, x, 2);
  REQUIRE(map.values.size() == 24);
  REQUIRE(map.raw.size() == 12);
  CHECK(map.values.front() == doctest::Approx(map.raw.front()).epsilon(1e-12));
  CHECK(map.values.back() == doctest::Approx(map.raw.back()).epsilon(1e-12));
}

TEST_CASE("attention alignment score") {
  AttributionMap map;
  map.shape = {8};
  map.values.assign(8, 0.5);
  CHECK(attention_alignment_score(map, {{0, 4}}) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(attention_alignment_score(map, {{0, 8}}) == 1.0);
  CHECK(attention_alignment_score(map, {}) == 0.0);
  // overlapping intervals count mass once
  CHECK(attention_alignment_score(map, {{0, 4}, {2, 4}}) == doctest::Approx(0.5).epsilon(1e-12));

  AttributionMap spiky;
  spiky.shape = {8};
  spiky.values.assign(8, 0.0);
  spiky.values[5] = 3.0;
  CHECK(attention_alignment_score(spiky, {{4, 7}}) == 1.0);
  CHECK(attention_alignment_score(spiky, {{0, 4}}) == 0.0);

  CHECK_THROWS_AS(attention_alignment_score(map, {{4, 4}}), ArgumentError);
  CHECK_THROWS_AS(attention_alignment_score(map, {{5, 3}}), ArgumentError);
  CHECK_THROWS_AS(attention_alignment_score(map, {{0, 9}}), ArgumentError);
}

TEST_CASE("state-based entry point matches the in-memory net") {
  auto spec = small_cam_spec(6);
  Net<float> net(spec);
  net.init_params(RngSeed{48});
  auto state = snapshot(net);
  auto x = random_input(spec, 13);
  auto a = gradcam(net, x, 1);
  auto b = gradcam(state, x, 1);
  CHECK(a.raw == b.raw);
  CHECK(a.values == b.values);
  CHECK(b.class_index == 1);
}

TEST_CASE("unsupported and invalid requests") {
  // GAP head but no convolutional features in front of it
  NetworkSpec headonly;
  headonly.name = "headonly";
  headonly.input_shape = {4, 6};
  headonly.n_classes = 4;
  LayerSpec gap{LayerKind::gap, 0, 1, 1, 1, 1, 0, 0};
  LayerSpec lin{LayerKind::linear, 4, 1, 1, 1, 1, 0, 0};
  headonly.layers = {gap, lin};
  Net<float> hnet(headonly);
  hnet.init_params(RngSeed{1});
  Tensor<float> hx({1, 4, 6});
  CHECK_THROWS_AS(gradcam(hnet, hx, 0), UnsupportedArchitectureError);

  // convolutional but flattened straight into the head, no GAP
  NetworkSpec nogap;
  nogap.name = "nogap";
  nogap.input_shape = {2, 8};
  nogap.n_classes = 4;
  LayerSpec c1{LayerKind::conv1d, 4, 1, 3, 1, 1, 0, 1};
  nogap.layers = {c1, lin};
  Net<float> gnet(nogap);
  gnet.init_params(RngSeed{2});
  Tensor<float> gx({1, 2, 8});
  CHECK_THROWS_AS(gradcam(gnet, gx, 0), UnsupportedArchitectureError);

  auto spec = small_cam_spec(6);
  Net<float> net(spec);
  net.init_params(RngSeed{3});
  auto x = random_input(spec, 14);
  CHECK_THROWS_AS(gradcam(net, x, 4), ArgumentError);
  CHECK_THROWS_AS(gradcam(net, x, -1), ArgumentError);
}

TEST_CASE("csv export: normalized heatmap aligned to sample indices") {
  auto dir = std::filesystem::temp_directory_path() / "pdx_gradcam_test";
  std::filesystem::create_directories(dir);
  auto path = (dir / "map.csv").string();

  auto spec = small_cam_spec(6);
  Net<float> net(spec);
  net.init_params(RngSeed{50});
  auto x = random_input(spec, 15);
  auto map = gradcam(net, x, 0);
  write_attribution_csv(path, map);

  std::ifstream f(path);
  std::string line;
  REQUIRE(std::getline(f, line));
  CHECK(line == "index,value");
  size_t rows = 0;
  double mx = 0.0;
  while (std::getline(f, line)) {
    auto comma = line.find(',');
    REQUIRE(comma != std::string::npos);
    CHECK(std::stoul(line.substr(0, comma)) == rows);
    mx = std::max(mx, std::stod(line.substr(comma + 1)));
    ++rows;
  }
  CHECK(rows == 24);
  CHECK(mx == doctest::Approx(1.0).epsilon(1e-6));  // max-normalized

  AttributionMap twod;
  twod.shape = {4, 4};
  twod.values.assign(16, 1.0);
  CHECK_THROWS_AS(write_attribution_csv(path, twod), ArgumentError);
}

TEST_CASE("image export round trips through the grid format") {
  auto dir = std::filesystem::temp_directory_path() / "pdx_gradcam_test";
  std::filesystem::create_directories(dir);
  auto path = (dir / "map.spec").string();

  auto spec = make_network("CNN2D(3x3@1)", 1);
  Net<float> net(spec);
  net.init_params(RngSeed{51});
  auto x = random_input(spec, 16);
  auto map = gradcam(net, x, 3);
  REQUIRE(map.shape == std::vector<size_t>{256, 256});
  write_attribution_image(path, map);

  auto img = read_spectro_image(path);
  CHECK(img.channels == 1);
  double mx = 0.0;
  for (size_t i = 0; i < map.values.size(); ++i) mx = std::max(mx, map.values[i]);
  REQUIRE(mx > 0.0);
  double worst = 0.0;
  for (size_t i = 0; i < map.values.size(); ++i)
    worst = std::max(worst, std::abs(static_cast<double>(img.pixels[i]) - map.values[i] / mx));
  CHECK(worst <= 1e-6);

  AttributionMap small;
  small.shape = {8, 8};
  small.values.assign(64, 1.0);
  CHECK_THROWS_AS(write_attribution_image(path, small), ArgumentError);
}
