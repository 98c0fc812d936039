#include "drpc/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace drpc {

int64_t shape_size(const Shape& shape) {
  int64_t n = 1;
  for (int e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

namespace detail {

Eigen::ArrayXd& TensorImpl::ensure_grad() {
  if (!grad) grad = Eigen::ArrayXd::Zero(data.size());
  return *grad;
}

}  // namespace detail

static std::shared_ptr<detail::TensorImpl> new_impl(const Shape& shape) {
  for (int e : shape) {
    if (e <= 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = shape;
  impl->data = Eigen::ArrayXd::Zero(shape_size(shape));
  return impl;
}

Tensor Tensor::zeros(const Shape& shape) { return Tensor(new_impl(shape)); }

Tensor Tensor::constant(const Shape& shape, double value) {
  auto impl = new_impl(shape);
  impl->data.setConstant(value);
  return Tensor(impl);
}

Tensor Tensor::from_array(const Shape& shape, Eigen::ArrayXd values) {
  if (values.size() != shape_size(shape)) {
    throw DimensionError("data length " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(shape));
  }
  auto impl = new_impl(shape);
  impl->data = std::move(values);
  return Tensor(impl);
}

Tensor Tensor::from_data(const Shape& shape, const std::vector<double>& values) {
  Eigen::ArrayXd a = Eigen::Map<const Eigen::ArrayXd>(values.data(),
                                                      static_cast<Eigen::Index>(values.size()));
  return from_array(shape, std::move(a));
}

double Tensor::value() const {
  if (size() != 1) {
    throw ContractViolation("value() requires a scalar tensor, got shape " + shape_str(shape()));
  }
  return impl_->data[0];
}

double Tensor::at(const std::vector<int>& index) const {
  const Shape& s = impl_->shape;
  if (index.size() != s.size()) {
    throw DimensionError("index rank " + std::to_string(index.size()) +
                         " does not match tensor rank " + std::to_string(s.size()));
  }
  int64_t flat = 0;
  for (size_t i = 0; i < s.size(); ++i) {
    if (index[i] < 0 || index[i] >= s[i]) {
      throw DimensionError("index out of range on axis " + std::to_string(i));
    }
    flat = flat * s[i] + index[i];
  }
  return impl_->data[flat];
}

void Tensor::set_trainable(bool on) {
  if (on && !impl_->parents.empty()) {
    throw ContractViolation("only leaf tensors can be marked trainable");
  }
  impl_->trainable = on;
  impl_->needs_grad = on;
}

Eigen::ArrayXd& Tensor::grad() { return impl_->ensure_grad(); }

const Eigen::ArrayXd& Tensor::grad() const {
  if (!impl_->grad) throw ContractViolation("tensor has no gradient buffer");
  return *impl_->grad;
}

void Tensor::zero_grad() {
  if (impl_->grad) impl_->grad->setZero();
}

Tensor Tensor::detach() const {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;  // Eigen copies; both sides are read-only from here on
  return Tensor(impl);
}

Tensor Tensor::clone() const { return detach(); }

Tensor GraphTape::leaf(const Shape& shape, bool trainable) {
  Tensor t = Tensor::zeros(shape);
  t.impl()->tape = this;
  t.impl()->trainable = trainable;
  t.impl()->needs_grad = trainable;
  record(t.impl());
  return t;
}

Tensor GraphTape::adopt(const Tensor& source, bool trainable) {
  Tensor t = source.detach();
  t.impl()->tape = this;
  t.impl()->trainable = trainable;
  t.impl()->needs_grad = trainable;
  record(t.impl());
  return t;
}

void GraphTape::record(const std::shared_ptr<detail::TensorImpl>& node) {
  node->node_id = next_id_++;
  nodes_.push_back(node);
}

void GraphTape::replay() {
  reseed();
  for (auto& node : nodes_) {
    if (node->forward_fn) node->forward_fn(*node);
  }
}

namespace detail {

Tensor make_op(const std::string& name, Shape out_shape,
               std::vector<Tensor> parents,
               std::function<void(TensorImpl&)> forward_fn,
               std::function<void(TensorImpl&)> backward_fn) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(out_shape);
  impl->data = Eigen::ArrayXd::Zero(shape_size(impl->shape));
  impl->op_name = name;
  impl->parents.reserve(parents.size());
  GraphTape* tape = nullptr;
  for (const Tensor& p : parents) {
    if (!p.defined()) throw ContractViolation(name + ": undefined input tensor");
    impl->parents.push_back(p.impl());
    impl->needs_grad = impl->needs_grad || p.impl()->needs_grad;
    if (!tape && p.impl()->tape) tape = p.impl()->tape;
  }
  impl->forward_fn = std::move(forward_fn);
  impl->backward_fn = std::move(backward_fn);
  impl->forward_fn(*impl);
  if (tape) {
    impl->tape = tape;
    tape->record(impl);
  }
  return Tensor(impl);
}

}  // namespace detail

void backward(const Tensor& loss) {
  if (!loss.defined()) throw ContractViolation("backward: undefined loss");
  if (loss.size() != 1) {
    throw ContractViolation("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
  }
  using detail::TensorImpl;

  // Iterative post-order DFS over parents; each node enters `order`
  // exactly once.
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> seen;
  struct Frame {
    TensorImpl* node;
    size_t next_parent;
  };
  std::vector<Frame> stack;
  TensorImpl* root = loss.impl().get();
  if (seen.insert(root).second) stack.push_back({root, 0});
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      TensorImpl* p = f.node->parents[f.next_parent++].get();
      if (p->needs_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  root->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* node = *it;
    if (!node->needs_grad || !node->grad || !node->backward_fn) continue;
    node->backward_fn(*node);
  }
}

}  // namespace drpc
