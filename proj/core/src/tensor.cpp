#include "supcl/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

#include "supcl/error.hpp"

namespace supcl {

namespace {

std::atomic<std::uint64_t> next_node_id{1};
thread_local bool grad_recording = true;

std::shared_ptr<detail::Node> new_node(Shape shape, std::vector<double> data,
                                       bool requires_grad) {
  if (numel(shape) != data.size()) {
    fail(ErrorKind::shape, "tensor data length " + std::to_string(data.size()) +
                               " does not match shape " + shape_str(shape));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  node->id = next_node_id.fetch_add(1, std::memory_order_relaxed);
  return node;
}

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::span<double> detail::Node::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : node_(new_node(std::move(shape), std::move(data), requires_grad)) {}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<double>{value}, requires_grad);
}

detail::Node& Tensor::node() const {
  if (!node_) fail(ErrorKind::shape, "use of an undefined tensor");
  return *node_;
}

const Shape& Tensor::shape() const { return node().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) {
    fail(ErrorKind::shape, "axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
  }
  return s[axis];
}

std::size_t Tensor::size() const { return node().value.size(); }

std::span<const double> Tensor::data() const { return node().value; }

double Tensor::item() const {
  if (size() != 1) fail(ErrorKind::shape, "item() on tensor of shape " + shape_str(shape()));
  return node().value[0];
}

bool Tensor::requires_grad() const { return node().requires_grad; }

bool Tensor::has_grad() const { return !node().grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!has_grad()) fail(ErrorKind::shape, "tensor has no gradient");
  return node().grad;
}

void Tensor::zero_grad() { node().grad.clear(); }

bool Tensor::is_leaf() const { return node().parents.empty(); }

std::uint64_t Tensor::node_id() const { return node().id; }

std::span<double> Tensor::mutable_data() {
  if (!is_leaf()) fail(ErrorKind::shape, "mutable_data() on a non-leaf tensor");
  return node().value;
}

Tensor Tensor::detach() const {
  return Tensor(shape(), node().value, false);
}

Tensor Tensor::make_result(Shape shape, std::vector<double> data,
                           const std::vector<Tensor>& parents,
                           std::function<void(detail::Node&)> backward_fn) {
  bool needs_grad = false;
  if (grad_recording) {
    for (const Tensor& p : parents) needs_grad = needs_grad || p.requires_grad();
  }
  auto node = new_node(std::move(shape), std::move(data), needs_grad);
  if (needs_grad) {
    node->parents.reserve(parents.size());
    for (const Tensor& p : parents) node->parents.push_back(p.node_);
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

void Tensor::backward() const {
  detail::Node& root = node();
  if (root.value.size() != 1) {
    fail(ErrorKind::shape, "backward() requires a scalar, got shape " + shape_str(root.shape));
  }
  if (!root.requires_grad) return;

  // Iterative post-order DFS; reversed it is a topological order from root.
  std::vector<detail::Node*> order;
  std::unordered_set<const detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(&root, 0);
  visited.insert(&root);
  while (!stack.empty()) {
    auto& [current, next_parent] = stack.back();
    if (next_parent < current->parents.size()) {
      detail::Node* parent = current->parents[next_parent++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(current);
      stack.pop_back();
    }
  }

  // Interior grads are recomputed per call; leaves accumulate.
  for (detail::Node* n : order) {
    if (!n->parents.empty()) n->grad.assign(n->value.size(), 0.0);
  }
  root.grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

bool grad_enabled() { return grad_recording; }

NoGradGuard::NoGradGuard() : previous_(grad_recording) { grad_recording = false; }

NoGradGuard::~NoGradGuard() { grad_recording = previous_; }

}  // namespace supcl
