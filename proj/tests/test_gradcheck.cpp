#include <doctest.h>

#include "support/gradcheck_suite.hpp"

TEST_CASE("analytic gradients match central finite differences") {
  oracle::SuiteResult result = oracle::run_gradcheck_suite(3);
  INFO(result.failure);
  CHECK(result.ok);
}

TEST_CASE("gradcheck catches a wrong gradient") {
  // Sanity check of the oracle itself: feed it an op whose backward is
  // off by a factor and expect a failure.
  using drpc::Tensor;
  oracle::GradCheck gc;
  auto broken_scale = [](const std::vector<Tensor>& v) {
    return drpc::detail::make_op(
        "broken_scale", v[0].shape(), {v[0]},
        [](drpc::detail::TensorImpl& self) { self.data = self.parents[0]->data * 2.0; },
        [](drpc::detail::TensorImpl& self) {
          self.parents[0]->ensure_grad() += 3.0 * *self.grad;  // wrong on purpose
        });
  };
  std::mt19937_64 rng(1);
  CHECK_FALSE(gc.run(broken_scale, {oracle::rand_tensor({4}, rng)}, 7));
}
