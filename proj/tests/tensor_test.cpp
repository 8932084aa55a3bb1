#include <cmath>

#include "doctest.h"
#include "mcar/rng.hpp"
#include "mcar/tensor.hpp"
#include "oracles.hpp"

using namespace mcar;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, float lo = -1.0f, float hi = 1.0f) {
  Tensor t(std::move(shape));
  for (auto& v : t.flat()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("tensor shape validation") {
  CHECK_THROWS_AS(Tensor({0, 3}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0f, 2.0f, 3.0f}), std::invalid_argument);
  Tensor t({2, 3}, 1.5f);
  CHECK(t.size() == 6);
  CHECK(t.at(1, 2) == 1.5f);
}

TEST_CASE("conv2d scalar affine case") {
  Tensor in({1, 1, 1}, {5.0f});
  Tensor k({1, 1, 1, 1}, {2.0f});
  Tensor out = conv2d(in, k, {1.0f}, 1, 0);
  CHECK(out.shape() == std::vector<int>{1, 1, 1});
  CHECK(out[0] == doctest::Approx(11.0f));
}

TEST_CASE("conv2d zero kernel gives zero output") {
  Rng rng(11);
  Tensor in = random_tensor({5, 4, 3}, rng);
  Tensor k({2, 3, 3, 3}, 0.0f);
  Tensor out = conv2d(in, k, {0.0f, 0.0f}, 1, 1);
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == 0.0f);
}

TEST_CASE("conv2d rejects channel mismatch with a dimension report") {
  Tensor in({4, 4, 3});
  Tensor k({2, 2, 3, 3});
  try {
    conv2d(in, k, {0.0f, 0.0f}, 1, 1);
    FAIL("expected throw");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("3 channels") != std::string::npos);
    CHECK(msg.find("expects 2") != std::string::npos);
  }
}

TEST_CASE("conv2d matches the naive nested-loop oracle") {
  Rng rng(42);
  // Random instances up to 8x8x3 inputs and 3x3 kernels, strides 1-2.
  for (int iter = 0; iter < 120; ++iter) {
    const int h = 2 + static_cast<int>(rng.uniform_int(7));
    const int w = 2 + static_cast<int>(rng.uniform_int(7));
    const int ci = 1 + static_cast<int>(rng.uniform_int(3));
    const int co = 1 + static_cast<int>(rng.uniform_int(4));
    const int kh = 1 + static_cast<int>(rng.uniform_int(3));
    const int kw = 1 + static_cast<int>(rng.uniform_int(3));
    const int pad = static_cast<int>(rng.uniform_int(2));
    const int stride = 1 + static_cast<int>(rng.uniform_int(2));
    if (kh > h + 2 * pad || kw > w + 2 * pad) continue;

    Tensor in = random_tensor({h, w, ci}, rng);
    Tensor k = random_tensor({co, ci, kh, kw}, rng);
    std::vector<float> bias(co);
    for (auto& b : bias) b = rng.uniform(-0.5f, 0.5f);

    Tensor got = conv2d(in, k, bias, stride, pad);
    Tensor want = oracle::conv2d_naive(in, k, bias, stride, pad);
    REQUIRE(got.shape() == want.shape());
    for (std::size_t i = 0; i < got.size(); ++i)
      CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-5));
  }
}

TEST_CASE("bilinear_resize identity and constant extension") {
  Rng rng(3);
  Tensor in = random_tensor({5, 7, 2}, rng);
  Tensor same = bilinear_resize(in, 5, 7);
  for (std::size_t i = 0; i < in.size(); ++i) CHECK(same[i] == in[i]);

  Tensor point({1, 1, 1}, {7.0f});
  Tensor grown = bilinear_resize(point, 3, 3);
  for (std::size_t i = 0; i < grown.size(); ++i) CHECK(grown[i] == doctest::Approx(7.0f));
}

TEST_CASE("bilinear_resize 2x2 to 4x4 matches the hand-evaluated oracle") {
  Tensor in({2, 2}, {0.0f, 1.0f, 2.0f, 3.0f});
  Tensor out = bilinear_resize(in, 4, 4);
  const float expected[16] = {0.0f, 0.25f, 0.75f, 1.0f,  0.5f, 0.75f, 1.25f, 1.5f,
                              1.5f, 1.75f, 2.25f, 2.5f,  2.0f, 2.25f, 2.75f, 3.0f};
  for (int i = 0; i < 16; ++i) CHECK(out[i] == doctest::Approx(expected[i]));
}

TEST_CASE("bilinear_resize stays within input bounds and matches reference") {
  Rng rng(9);
  for (int iter = 0; iter < 40; ++iter) {
    const int h = 1 + static_cast<int>(rng.uniform_int(6));
    const int w = 1 + static_cast<int>(rng.uniform_int(6));
    const int oh = 1 + static_cast<int>(rng.uniform_int(12));
    const int ow = 1 + static_cast<int>(rng.uniform_int(12));
    Tensor in = random_tensor({h, w, 2}, rng);
    Tensor out = bilinear_resize(in, oh, ow);

    const auto [mn, mx] = std::minmax_element(in.flat().begin(), in.flat().end());
    for (std::size_t i = 0; i < out.size(); ++i) {
      CHECK(out[i] >= *mn - 1e-6f);
      CHECK(out[i] <= *mx + 1e-6f);
    }
    std::vector<double> dimg(in.flat().begin(), in.flat().end());
    const auto ref = oracle::bilinear_ref(dimg, h, w, 2, oh, ow);
    for (std::size_t i = 0; i < out.size(); ++i)
      CHECK(out[i] == doctest::Approx(ref[i]).epsilon(1e-5));
  }
}

TEST_CASE("sigmoid fixed points and symmetry") {
  CHECK(sigmoid(0.0f) == doctest::Approx(0.5));
  CHECK(sigmoid(std::log(3.0f)) == doctest::Approx(0.75));
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const float x = rng.uniform(-30.0f, 30.0f);
    CHECK(sigmoid(x) + sigmoid(-x) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(sigmoid(x) > 0.0f);
    CHECK(sigmoid(x) < 1.0f);
  }
}

TEST_CASE("spatial_pool on a constant map is strategy independent") {
  Tensor a({3, 4, 2}, 2.5f);
  for (auto kind : {PoolKind::GAP, PoolKind::GMP, PoolKind::GWP}) {
    const auto f = spatial_pool(a, {kind, 0.3f});
    CHECK(f[0] == doctest::Approx(2.5f));
    CHECK(f[1] == doctest::Approx(2.5f));
  }
}

TEST_CASE("GWP endpoints equal GAP and GMP bitwise") {
  Rng rng(17);
  for (int iter = 0; iter < 50; ++iter) {
    Tensor a = random_tensor({4, 5, 3}, rng, -2.0f, 2.0f);
    const auto gap = spatial_pool(a, {PoolKind::GAP, 0.0f});
    const auto gmp = spatial_pool(a, {PoolKind::GMP, 0.0f});
    const auto gwp1 = spatial_pool(a, {PoolKind::GWP, 1.0f});
    const auto gwp0 = spatial_pool(a, {PoolKind::GWP, 0.0f});
    CHECK(gwp1 == gap);
    CHECK(gwp0 == gmp);
  }
}

TEST_CASE("GWP hand example and convex combination property") {
  Tensor a({2, 2, 1}, {1.0f, 2.0f, 3.0f, 4.0f});
  const auto f = spatial_pool(a, {PoolKind::GWP, 0.5f});
  CHECK(f[0] == doctest::Approx(3.25f));

  Rng rng(23);
  for (int iter = 0; iter < 50; ++iter) {
    Tensor t = random_tensor({3, 3, 4}, rng, -3.0f, 3.0f);
    const float lam = static_cast<float>(rng.uniform());
    const auto gap = spatial_pool(t, {PoolKind::GAP, 0.0f});
    const auto gmp = spatial_pool(t, {PoolKind::GMP, 0.0f});
    const auto gwp = spatial_pool(t, {PoolKind::GWP, lam});
    for (int c = 0; c < 4; ++c) {
      CHECK(gwp[c] >= std::min(gap[c], gmp[c]) - 1e-6f);
      CHECK(gwp[c] <= std::max(gap[c], gmp[c]) + 1e-6f);
    }
  }
}

TEST_CASE("crop and hflip basics") {
  Rng rng(7);
  Tensor img = random_tensor({6, 8, 3}, rng);
  Tensor c = crop(img, 1, 4, 2, 6);
  CHECK(c.shape() == std::vector<int>{4, 5, 3});
  CHECK(c.at(0, 0, 1) == img.at(1, 2, 1));
  CHECK(c.at(3, 4, 2) == img.at(4, 6, 2));
  CHECK_THROWS_AS(crop(img, 0, 6, 0, 7), std::invalid_argument);

  Tensor f = hflip(img);
  CHECK(f.at(2, 0, 0) == img.at(2, 7, 0));
  Tensor ff = hflip(f);
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(ff[i] == img[i]);
}
