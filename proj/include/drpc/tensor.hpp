#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "drpc/errors.hpp"

namespace drpc {

using Shape = std::vector<int>;

int64_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);
bool same_shape(const Shape& a, const Shape& b);

class GraphTape;
class Tensor;

namespace detail {

// One node of the reverse-mode graph. Leaves have no parents and no
// forward closure; op outputs record both so a tape can replay the
// forward pass and backward() can push gradients to the parents.
struct TensorImpl {
  Shape shape;
  Eigen::ArrayXd data;
  std::optional<Eigen::ArrayXd> grad;
  bool trainable = false;
  bool needs_grad = false;

  std::string op_name;
  std::vector<std::shared_ptr<TensorImpl>> parents;
  std::function<void(TensorImpl&)> forward_fn;   // recompute data from parents
  std::function<void(TensorImpl&)> backward_fn;  // scatter grad into parents

  GraphTape* tape = nullptr;
  uint64_t node_id = 0;

  Eigen::ArrayXd& ensure_grad();
};

}  // namespace detail

// Cheap shared handle over an n-d float64 array that may sit on a
// reverse-mode graph. Data is row-major; op outputs are never mutated
// in place.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& shape);
  static Tensor constant(const Shape& shape, double value);
  static Tensor from_array(const Shape& shape, Eigen::ArrayXd values);
  static Tensor from_data(const Shape& shape, const std::vector<double>& values);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int ndim() const { return static_cast<int>(impl_->shape.size()); }
  int dim(int axis) const { return impl_->shape[static_cast<size_t>(axis)]; }
  int64_t size() const { return impl_->data.size(); }

  Eigen::ArrayXd& array() { return impl_->data; }
  const Eigen::ArrayXd& array() const { return impl_->data; }
  double* data() { return impl_->data.data(); }
  const double* data() const { return impl_->data.data(); }

  // Scalar accessors; value() requires size()==1.
  double value() const;
  double at(const std::vector<int>& index) const;

  bool trainable() const { return impl_->trainable; }
  void set_trainable(bool on);

  bool has_grad() const { return impl_->grad.has_value(); }
  Eigen::ArrayXd& grad();
  const Eigen::ArrayXd& grad() const;
  void zero_grad();

  bool is_leaf() const { return impl_->parents.empty(); }
  const std::string& op_name() const { return impl_->op_name; }
  GraphTape* tape() const { return impl_->tape; }

  // Same data buffer, no graph node: gradients never flow through.
  Tensor detach() const;
  // Deep copy of the data, detached.
  Tensor clone() const;

  std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

// Ordered record of graph nodes plus the RNG any stochastic op must
// draw from. Replaying a tape re-runs every recorded forward closure in
// creation order, which reproduces the original outputs bit for bit.
class GraphTape {
 public:
  explicit GraphTape(uint64_t seed = 0) : rng_(seed), seed_(seed) {}

  Tensor leaf(const Shape& shape, bool trainable = false);
  // Adopts the tensor's data as a new leaf owned by this tape.
  Tensor adopt(const Tensor& source, bool trainable = false);

  std::mt19937_64& rng() { return rng_; }
  uint64_t seed() const { return seed_; }
  void reseed() { rng_.seed(seed_); }

  void record(const std::shared_ptr<detail::TensorImpl>& node);
  size_t node_count() const { return nodes_.size(); }
  void replay();

 private:
  std::mt19937_64 rng_;
  uint64_t seed_;
  uint64_t next_id_ = 0;
  std::vector<std::shared_ptr<detail::TensorImpl>> nodes_;
};

// Accumulates d(loss)/d(leaf) into the grad buffer of every trainable
// tensor reachable from `loss`. The loss must be a connected scalar.
void backward(const Tensor& loss);

namespace detail {

// Op construction helper shared by tensor_ops.cpp and pyramid.cpp.
Tensor make_op(const std::string& name, Shape out_shape,
               std::vector<Tensor> parents,
               std::function<void(TensorImpl&)> forward_fn,
               std::function<void(TensorImpl&)> backward_fn);

}  // namespace detail

}  // namespace drpc
