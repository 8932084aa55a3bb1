#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "mcar/backbone.hpp"
#include "oracles.hpp"

using namespace mcar;

namespace {

Tensor random_image(int size, Rng& rng) {
  Tensor t({size, size, 3});
  for (auto& v : t.flat()) v = rng.uniform(0.0f, 1.0f);
  return t;
}

ModelParams small_params(std::vector<int> blocks, int input, int classes, PoolingStrategy pool,
                         std::uint64_t seed) {
  Rng rng(seed);
  BackboneConfig cfg;
  cfg.input_size = input;
  cfg.block_channels = std::move(blocks);
  ModelParams p = init_params(cfg, classes, pool, rng);
  // Break the zero bias symmetry so no pre-activation sits exactly on the
  // ReLU kink.
  for (auto& layer : p.conv)
    for (auto& b : layer.bias) b = static_cast<float>(rng.normal()) * 0.05f;
  for (auto& b : p.classifier_b) b = static_cast<float>(rng.normal()) * 0.05f;
  return p;
}

}  // namespace

TEST_CASE("backbone config validation") {
  BackboneConfig cfg;
  cfg.input_size = 30;
  cfg.block_channels = {4, 8};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);  // not divisible
  cfg.input_size = 8;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);  // feature map < 4
  cfg.input_size = 16;
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("zero image with zero biases gives zero activation") {
  Rng rng(1);
  BackboneConfig cfg;
  cfg.input_size = 16;
  cfg.block_channels = {4, 6};
  ModelParams p = init_params(cfg, 3, {PoolKind::GAP, 0.5f}, rng);
  Tensor img({16, 16, 3}, 0.0f);
  Tensor a = backbone_forward(img, p);
  CHECK(a.shape() == std::vector<int>{4, 4, 6});
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == 0.0f);
}

TEST_CASE("forward is deterministic and shapes follow the block count") {
  Rng rng(2);
  ModelParams p = small_params({4, 8}, 32, 5, {PoolKind::GAP, 0.5f}, 99);
  Tensor img = random_image(32, rng);
  Tensor a1 = backbone_forward(img, p);
  Tensor a2 = backbone_forward(img, p);
  CHECK(a1.shape() == std::vector<int>{8, 8, 8});
  CHECK(a1.flat() == a2.flat());

  Tensor wrong({16, 16, 3});
  CHECK_THROWS_AS(backbone_forward(wrong, p), std::invalid_argument);
}

TEST_CASE("classify zero weights and constant-map pooling equality") {
  ModelParams p = small_params({4}, 8, 4, {PoolKind::GAP, 0.5f}, 3);
  std::fill(p.classifier_w.flat().begin(), p.classifier_w.flat().end(), 0.0f);
  std::fill(p.classifier_b.begin(), p.classifier_b.end(), 0.0f);
  Tensor a({4, 4, 4}, 1.7f);
  const auto r = classify(a, p);
  for (float s : r.scores) CHECK(s == doctest::Approx(0.5f));

  // Constant activation: GAP and GMP see the same pooled vector.
  ModelParams pg = small_params({4}, 8, 4, {PoolKind::GAP, 0.5f}, 4);
  ModelParams pm = pg;
  pm.pooling.kind = PoolKind::GMP;
  const auto rg = classify(a, pg);
  const auto rm = classify(a, pm);
  for (std::size_t i = 0; i < rg.logits.size(); ++i)
    CHECK(rg.logits[i] == doctest::Approx(rm.logits[i]));
}

TEST_CASE("classify hand-evaluated linear head") {
  // d'=2, C=1, f=[1,2], W=[[1],[-1]], b=[0] -> logit -1.
  ModelParams p;
  p.config.input_size = 4;
  p.config.block_channels = {2};
  p.pooling = {PoolKind::GAP, 0.5f};
  p.classifier_w = Tensor({2, 1}, {1.0f, -1.0f});
  p.classifier_b = {0.0f};
  Tensor a({2, 2, 2});
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) {
      a.at(y, x, 0) = 1.0f;
      a.at(y, x, 1) = 2.0f;
    }
  const auto r = classify(a, p);
  CHECK(r.logits[0] == doctest::Approx(-1.0f));
  CHECK(r.scores[0] == doctest::Approx(0.26894142f));
}

TEST_CASE("sigmoid-BCE head gradient equals score minus label") {
  // The routing identity behind every dlogits vector we feed to backward.
  Rng rng(8);
  for (int iter = 0; iter < 100; ++iter) {
    const double x = rng.uniform(-4.0f, 4.0f);
    const std::uint8_t y = rng.coin() ? 1 : 0;
    const double eps = 1e-6;
    auto loss = [&](double logit) {
      const double p = 1.0 / (1.0 + std::exp(-logit));
      return y ? -std::log(p) : -std::log(1.0 - p);
    };
    const double fd = (loss(x + eps) - loss(x - eps)) / (2 * eps);
    const double analytic = 1.0 / (1.0 + std::exp(-x)) - y;
    CHECK(analytic == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("doubling dlogits doubles every gradient entry") {
  Rng rng(12);
  ModelParams p = small_params({4, 6}, 16, 3, {PoolKind::GWP, 0.5f}, 21);
  Tensor img = random_image(16, rng);
  ForwardTrace trace;
  forward_and_classify(img, p, trace);

  std::vector<float> d{0.3f, -0.2f, 0.5f};
  std::vector<float> d2{0.6f, -0.4f, 1.0f};
  GradientSet g1 = GradientSet::zeros_like(p);
  GradientSet g2 = GradientSet::zeros_like(p);
  backward(p, trace, d, g1);
  backward(p, trace, d2, g2);
  for (std::size_t b = 0; b < g1.conv.size(); ++b)
    for (std::size_t i = 0; i < g1.conv[b].kernel.size(); ++i)
      CHECK(g2.conv[b].kernel[i] == doctest::Approx(2.0f * g1.conv[b].kernel[i]).epsilon(1e-5));
  for (std::size_t i = 0; i < g1.classifier_w.size(); ++i)
    CHECK(g2.classifier_w[i] == doctest::Approx(2.0f * g1.classifier_w[i]).epsilon(1e-5));
}

TEST_CASE("backward rejects a stale or missing trace") {
  ModelParams p = small_params({4}, 8, 2, {PoolKind::GAP, 0.5f}, 5);
  GradientSet g = GradientSet::zeros_like(p);
  ForwardTrace empty;
  CHECK_THROWS_AS(backward(p, empty, {0.1f, 0.2f}, g), std::logic_error);
}

TEST_CASE("global-stream gradients match central finite differences") {
  Rng rng(31);
  ModelParams p = small_params({4, 6}, 16, 3, {PoolKind::GWP, 0.5f}, 77);
  Tensor img = random_image(16, rng);
  LabelVector y{1, 0, 1};
  const auto report = oracle::fd_check(img, y, p, {}, LossMode::Pair, 1.0, 1.0);
  CHECK(report.checked > 200);
  CHECK(report.max_rel <= 1e-3);
}

TEST_CASE("gradient check covers GAP and GMP pooling") {
  Rng rng(33);
  for (auto kind : {PoolKind::GAP, PoolKind::GMP}) {
    ModelParams p = small_params({4}, 8, 2, {kind, 0.5f}, 51);
    Tensor img = random_image(8, rng);
    LabelVector y{0, 1};
    const auto report = oracle::fd_check(img, y, p, {}, LossMode::Pair, 1.0, 1.0);
    CHECK(report.max_rel <= 1e-3);
  }
}

TEST_CASE("sgd_step fixed point and hand-computed updates") {
  ModelParams p;
  p.config.input_size = 4;
  p.config.block_channels = {1};
  p.pooling = {PoolKind::GAP, 0.5f};
  p.conv.push_back({Tensor({1, 3, 3, 3}, 0.25f), {0.0f}});
  p.classifier_w = Tensor({1, 1}, {1.0f});
  p.classifier_b = {0.0f};

  GradientSet zero = GradientSet::zeros_like(p);
  GradientSet vel = GradientSet::zeros_like(p);
  ModelParams before = p;
  sgd_step(p, zero, {0.1f, 0.9f, 0.0f}, vel);
  CHECK(p.classifier_w[0] == before.classifier_w[0]);
  CHECK(p.conv[0].kernel.flat() == before.conv[0].kernel.flat());

  // Single scalar: param 1.0, grad 0.5, lr 0.1 -> 0.95.
  GradientSet g = GradientSet::zeros_like(p);
  g.classifier_w[0] = 0.5f;
  GradientSet vel2 = GradientSet::zeros_like(p);
  sgd_step(p, g, {0.1f, 0.0f, 0.0f}, vel2);
  CHECK(p.classifier_w[0] == doctest::Approx(0.95f));

  // Momentum 0.9, two identical steps: second update is 1.9x the first.
  ModelParams q = before;
  GradientSet vel3 = GradientSet::zeros_like(q);
  const float w0 = q.classifier_w[0];
  sgd_step(q, g, {0.1f, 0.9f, 0.0f}, vel3);
  const float delta1 = w0 - q.classifier_w[0];
  const float w1 = q.classifier_w[0];
  sgd_step(q, g, {0.1f, 0.9f, 0.0f}, vel3);
  const float delta2 = w1 - q.classifier_w[0];
  CHECK(delta2 == doctest::Approx(1.9f * delta1));
}

TEST_CASE("checkpoint round trip is bit exact") {
  ModelParams p = small_params({4, 6}, 16, 5, {PoolKind::GWP, 0.37f}, 123);
  const std::string path = (std::filesystem::temp_directory_path() / "mcar_ckpt_test.bin").string();
  save_checkpoint(p, path);
  ModelParams q = load_checkpoint(path);

  CHECK(q.config.input_size == p.config.input_size);
  CHECK(q.config.block_channels == p.config.block_channels);
  CHECK(q.pooling.kind == p.pooling.kind);
  CHECK(q.pooling.lambda == p.pooling.lambda);
  for (std::size_t b = 0; b < p.conv.size(); ++b) {
    CHECK(q.conv[b].kernel.flat() == p.conv[b].kernel.flat());
    CHECK(q.conv[b].bias == p.conv[b].bias);
  }
  CHECK(q.classifier_w.flat() == p.classifier_w.flat());
  CHECK(q.classifier_b == p.classifier_b);
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint loader rejects corrupted files") {
  ModelParams p = small_params({4}, 8, 2, {PoolKind::GAP, 0.5f}, 9);
  const auto dir = std::filesystem::temp_directory_path();
  const std::string path = (dir / "mcar_ckpt_bad.bin").string();
  save_checkpoint(p, path);

  // Bad magic.
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("XXXX", 4);
  }
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("bad magic"), std::runtime_error);

  // Truncated blob.
  save_checkpoint(p, path);
  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 8);
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("truncated"), std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("manifest lines describe every tensor") {
  ModelParams p = small_params({4, 6}, 16, 5, {PoolKind::GAP, 0.5f}, 2);
  const auto lines = manifest_lines(p);
  REQUIRE(lines.size() == 6);  // 2 blocks x (kernel, bias) + classifier w/b
  CHECK(lines[0] == "conv0.kernel 4,3,3,3");
  CHECK(lines[5] == "classifier.b 5");
}
