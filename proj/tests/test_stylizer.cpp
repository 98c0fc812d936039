#include <doctest.h>

#include <random>

#include "drpc/stylizer.hpp"
#include "support/oracles.hpp"

using namespace drpc;

namespace {

Tensor random_image(std::mt19937_64& rng, int h = 16, int w = 16) {
  return oracle::rand_tensor({3, h, w}, rng, 0.0, 1.0);
}

}  // namespace

TEST_CASE("identity parameters are a bit-exact no-op") {
  std::mt19937_64 rng(1);
  Tensor img = random_image(rng);
  Tensor out = apply(identity_stylizer(), img);
  CHECK((out.array() == img.array()).all());
}

TEST_CASE("full grayscale blend equalizes the channels") {
  std::mt19937_64 rng(2);
  Tensor img = random_image(rng);
  Stylizer s = identity_stylizer("gray");
  s.grayscale = 1.0;
  Tensor out = apply(s, img);
  const int64_t plane = 16 * 16;
  for (int64_t i = 0; i < plane; ++i) {
    CHECK(out.array()[i] == out.array()[plane + i]);
    CHECK(out.array()[i] == out.array()[2 * plane + i]);
  }
}

TEST_CASE("three 120-degree hue rotations come back to the start") {
  std::mt19937_64 rng(3);
  Tensor img = random_image(rng);
  Stylizer s = identity_stylizer("hue120");
  s.hue_deg = 120.0;
  Tensor out = apply(s, apply(s, apply(s, img)));
  CHECK((out.array() - img.array()).abs().maxCoeff() <= 1e-6);
}

TEST_CASE("applying a stylizer twice gives bit-identical outputs") {
  std::mt19937_64 rng(4);
  Tensor img = random_image(rng);
  for (const Stylizer& s : default_registry().train) {
    Tensor a = apply(s, img);
    Tensor b = apply(s, img);
    CHECK((a.array() == b.array()).all());
  }
}

TEST_CASE("outputs stay inside [0,1] for the whole default registry") {
  std::mt19937_64 rng(5);
  const DomainRegistry reg = default_registry();
  for (int trial = 0; trial < 20; ++trial) {
    Tensor img = random_image(rng);
    auto check_one = [&](const Stylizer& s) {
      Tensor out = apply(s, img);
      CHECK(out.array().minCoeff() >= 0.0);
      CHECK(out.array().maxCoeff() <= 1.0);
    };
    for (const Stylizer& s : reg.train) check_one(s);
    for (const Stylizer& s : reg.heldout) check_one(s);
    check_one(reg.validation);
  }
}

TEST_CASE("out-of-range input is a data error") {
  Tensor img = Tensor::constant({3, 8, 8}, 1.5);
  CHECK_THROWS_AS(apply(identity_stylizer(), img), DataError);
}

TEST_CASE("make_group keeps one shared label and K+1 images") {
  std::mt19937_64 rng(6);
  Tensor img = random_image(rng);
  Tensor label = Tensor::zeros({16, 16});
  const DomainRegistry reg = default_registry();
  REQUIRE(reg.k() == 15);

  DomainGroup group = make_group(img, label, reg);
  CHECK(group.images.size() == 16);
  CHECK(group.domain_ids.front() == "source");
  // the label map is referenced, not copied, and never rewritten
  CHECK(group.label.impl().get() == label.impl().get());

  // stylized copies differ from the source unless the transform is the identity
  for (size_t k = 1; k < group.images.size(); ++k) {
    const bool identical = (group.images[k].array() == group.images[0].array()).all();
    CHECK_FALSE(identical);
  }
}

TEST_CASE("make_group with a single stylizer yields a pair") {
  std::mt19937_64 rng(7);
  DomainRegistry reg;
  Stylizer s = identity_stylizer("only");
  s.hue_deg = 90.0;
  reg.train = {s};
  reg.heldout = {identity_stylizer("h")};
  reg.validation = identity_stylizer("v");
  DomainGroup group = make_group(random_image(rng), Tensor::zeros({16, 16}), reg);
  CHECK(group.images.size() == 2);

  DomainRegistry empty = reg;
  empty.train.clear();
  CHECK_THROWS_AS(make_group(random_image(rng), Tensor::zeros({16, 16}), empty), ConfigError);
}

TEST_CASE("registry ids must be disjoint") {
  DomainRegistry reg = default_registry();
  reg.heldout.push_back(reg.train.front());
  CHECK_THROWS_AS(reg.validate(), ConfigError);
}
