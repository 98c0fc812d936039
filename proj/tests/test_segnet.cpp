#include <doctest.h>

#include <filesystem>
#include <random>

#include "drpc/consistency.hpp"
#include "drpc/segnet.hpp"
#include "drpc/tensor_ops.hpp"
#include "support/oracles.hpp"

using namespace drpc;

TEST_CASE("output keeps the input's spatial size with numClasses channels") {
  SegNetwork net = SegNetwork::build(5, 8, 3, 5, 1);
  std::mt19937_64 rng(2);
  Tensor img = oracle::rand_tensor({1, 3, 64, 64}, rng, 0.0, 1.0);
  ForwardResult fwd = net.forward(img);
  CHECK(fwd.logits.shape() == Shape{1, 5, 64, 64});
  CHECK(fwd.acts.size() == 5);
}

TEST_CASE("same seed builds bit-identical parameters") {
  SegNetwork a = SegNetwork::build(6, 8, 3, 5, 42);
  SegNetwork b = SegNetwork::build(6, 8, 3, 5, 42);
  REQUIRE(a.parameters().size() == b.parameters().size());
  for (size_t i = 0; i < a.parameters().size(); ++i) {
    CHECK((a.parameters()[i].array() == b.parameters()[i].array()).all());
  }
  SegNetwork c = SegNetwork::build(6, 8, 3, 5, 43);
  CHECK_FALSE((a.parameters()[0].array() == c.parameters()[0].array()).all());
}

TEST_CASE("parameter count depends only on (classes, base, depth)") {
  const int64_t n1 = SegNetwork::build(6, 8, 3, 5, 1).parameter_count();
  const int64_t n2 = SegNetwork::build(6, 8, 3, 2, 99).parameter_count();
  CHECK(n1 == n2);
  CHECK(n1 == SegNetwork::build(6, 8, 3, 5, 7).parameter_count());
}

TEST_CASE("tap list is a suffix of the blocks and geometry follows the stride") {
  SegNetwork net = SegNetwork::build(6, 8, 3, 5, 1);
  const auto& layers = net.layer_names();
  const auto& taps = net.tap_names();
  REQUIRE(taps.size() == 5);
  CHECK(std::equal(taps.begin(), taps.end(), layers.end() - 5));
  CHECK(taps.back() == "logits");

  const auto shapes = net.tap_shapes(64, 64);
  CHECK(shapes[0] == std::array<int, 3>{64, 8, 8});    // enc3
  CHECK(shapes[1] == std::array<int, 3>{6, 8, 8});     // head
  CHECK(shapes[2] == std::array<int, 3>{6, 16, 16});   // fuse1
  CHECK(shapes[3] == std::array<int, 3>{6, 32, 32});   // fuse2
  CHECK(shapes[4] == std::array<int, 3>{6, 64, 64});   // logits
}

TEST_CASE("configuration errors are rejected at build time") {
  CHECK_THROWS_AS(SegNetwork::build(6, 8, 3, 99, 1), ConfigError);
  CHECK_THROWS_AS(SegNetwork::build(6, 8, 2, 3, 1), ConfigError);
  CHECK_THROWS_AS(SegNetwork::build(1, 8, 3, 3, 1), ConfigError);
}

TEST_CASE("indivisible spatial sizes are dimension errors") {
  SegNetwork net = SegNetwork::build(6, 8, 3, 5, 1);
  CHECK_THROWS_AS(net.forward(Tensor::zeros({1, 3, 60, 64})), DimensionError);
  CHECK_THROWS_AS(net.forward(Tensor::zeros({1, 4, 64, 64})), DimensionError);
}

TEST_CASE("zeroing the decoder score layers gives uniform logits") {
  SegNetwork net = SegNetwork::build(4, 8, 3, 5, 3);
  const auto& names = net.parameter_names();
  for (size_t i = 0; i < names.size(); ++i) {
    if (names[i].rfind("head", 0) == 0 || names[i].rfind("fuse", 0) == 0) {
      net.parameters()[i].array().setZero();
    }
  }
  std::mt19937_64 rng(4);
  ForwardResult fwd = net.forward(oracle::rand_tensor({1, 3, 32, 32}, rng, 0.0, 1.0));
  CHECK(fwd.logits.array().abs().maxCoeff() == 0.0);  // equal scores => uniform softmax
}

TEST_CASE("two forward passes produce identical logits") {
  SegNetwork net = SegNetwork::build(6, 8, 3, 5, 5);
  std::mt19937_64 rng(6);
  Tensor img = oracle::rand_tensor({2, 3, 32, 32}, rng, 0.0, 1.0);
  Tensor a = net.forward(img).logits;
  Tensor b = net.forward(img).logits;
  CHECK((a.array() == b.array()).all());
}

TEST_CASE("single-coordinate finite difference agrees with backward") {
  SegNetwork net = SegNetwork::build(3, 4, 3, 5, 7);
  std::mt19937_64 rng(8);
  Tensor img = oracle::rand_tensor({1, 3, 16, 16}, rng, 0.0, 1.0);
  Tensor labels = Tensor::zeros({1, 16, 16});
  for (int64_t i = 0; i < labels.size(); ++i) labels.array()[i] = uniform_int(rng, 0, 2);

  auto loss_value = [&]() { return seg_loss(net.forward(img).logits, labels).value(); };

  for (Tensor& p : net.parameters()) p.zero_grad();
  backward(seg_loss(net.forward(img).logits, labels));

  Tensor& kernel = net.parameters()[2];  // enc1.w
  const int64_t idx = 11;
  const double analytic = kernel.grad()[idx];
  const double eps = 1e-5;
  const double saved = kernel.array()[idx];
  kernel.array()[idx] = saved + eps;
  const double up = loss_value();
  kernel.array()[idx] = saved - eps;
  const double down = loss_value();
  kernel.array()[idx] = saved;
  const double numeric = (up - down) / (2 * eps);
  CHECK(std::fabs(analytic - numeric) <= 1e-4 * (1 + std::fabs(numeric)));
}

TEST_CASE("checkpoints restore parameters bit-exactly") {
  const auto dir = std::filesystem::temp_directory_path() / "drpc_ckpt_test";
  std::filesystem::remove_all(dir);

  SegNetwork net = SegNetwork::build(6, 8, 3, 5, 9);
  net.save_checkpoint(dir, "cafef00d");
  SegNetwork back = SegNetwork::load_checkpoint(dir);
  CHECK(back.config().num_classes == 6);
  CHECK(back.config().tap_count == 5);
  REQUIRE(back.parameters().size() == net.parameters().size());
  for (size_t i = 0; i < net.parameters().size(); ++i) {
    CHECK((back.parameters()[i].array() == net.parameters()[i].array()).all());
  }
  CHECK_THROWS_AS(SegNetwork::load_checkpoint(dir / "nope"), IoError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("snapshots are detached") {
  SegNetwork net = SegNetwork::build(6, 8, 3, 5, 10);
  SegNetwork snap = net.snapshot();
  CHECK_FALSE(snap.parameters()[0].trainable());
  CHECK((snap.parameters()[0].array() == net.parameters()[0].array()).all());
  net.parameters()[0].array()[0] += 1.0;
  CHECK(snap.parameters()[0].array()[0] != net.parameters()[0].array()[0]);
}
