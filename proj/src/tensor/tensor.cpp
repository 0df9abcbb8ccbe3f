#include "tap/tensor/tensor.hpp"

#include <malloc.h>

#include <cblas.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <unordered_set>

#include "tap/core/errors.hpp"
#include "tap/core/rng.hpp"

namespace tap {

namespace {

thread_local bool g_grad_enabled = true;
std::atomic<bool> g_check_finite{false};
std::atomic<int> g_threads{1};

const detail::TensorImpl& require(const detail::ImplPtr& p) {
  if (!p) throw UsageError("operation on an undefined tensor");
  return *p;
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Buffer& detail::TensorImpl::ensure_grad() {
  if (grad.empty()) grad.assign(storage->size(), 0.0);
  return grad;
}

detail::GradSink detail::TensorImpl::grad_sink() {
  const bool fresh = grad.empty();
  if (fresh) grad.resize(storage->size());
  return {grad.data(), fresh};
}

Tensor Tensor::from(Shape shape, std::initializer_list<double> values, bool requires_grad) {
  return from(std::move(shape), Buffer(values), requires_grad);
}

Tensor Tensor::from(Shape shape, const std::vector<double>& values, bool requires_grad) {
  return from(std::move(shape), Buffer(values.begin(), values.end()), requires_grad);
}

Tensor Tensor::from(Shape shape, Buffer values, bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                     shape_str(shape));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->storage = std::make_shared<Buffer>(std::move(values));
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::ones(Shape shape, bool requires_grad) { return full(std::move(shape), 1.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return from(std::move(shape), Buffer(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev, bool requires_grad) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.normal(0.0, stddev);
  return from(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::uniform(Shape shape, Rng& rng, double lo, double hi, bool requires_grad) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return from(std::move(shape), std::move(v), requires_grad);
}

const Shape& Tensor::shape() const { return require(impl_).shape; }

std::size_t Tensor::size(int axis) const {
  const auto& s = shape();
  const int n = static_cast<int>(s.size());
  const int a = axis < 0 ? axis + n : axis;
  if (a < 0 || a >= n) throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  return s[static_cast<std::size_t>(a)];
}

std::size_t Tensor::numel() const { return require(impl_).data().size(); }

std::span<const double> Tensor::data() const { return require(impl_).data(); }

std::span<double> Tensor::mutable_data() {
  require(impl_);
  if (impl_->node) throw UsageError("in-place edit of a tracked intermediate tensor");
  // Copy on write so views taken earlier keep their values.
  if (impl_->storage.use_count() > 1) impl_->storage = std::make_shared<Buffer>(*impl_->storage);
  return *impl_->storage;
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data()[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  const auto& s = shape();
  if (index.size() != s.size()) throw ShapeError("index rank mismatch for " + shape_str(s));
  std::size_t off = 0;
  std::size_t i = 0;
  for (auto v : index) {
    if (v >= s[i]) throw ShapeError("index out of range for " + shape_str(s));
    off = off * s[i] + v;
    ++i;
  }
  return impl_->data()[off];
}

std::vector<double> Tensor::to_vector() const {
  const auto& d = require(impl_).data();
  return {d.begin(), d.end()};
}

bool Tensor::requires_grad() const { return require(impl_).requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  require(impl_);
  if (impl_->node) throw UsageError("requires_grad can only be set on leaf tensors");
  impl_->requires_grad = on;
  if (!on) impl_->grad.clear();
  return *this;
}

bool Tensor::is_leaf() const { return require(impl_).node == nullptr; }

bool Tensor::has_grad() const { return !require(impl_).grad.empty(); }

std::span<const double> Tensor::grad() const {
  const auto& impl = require(impl_);
  if (impl.grad.empty()) throw UsageError("tensor has no gradient");
  return impl.grad;
}

Tensor Tensor::grad_tensor() const {
  const auto& impl = require(impl_);
  if (impl.grad.empty()) return Tensor::zeros(impl.shape);
  return Tensor::from(impl.shape, impl.grad);
}

void Tensor::zero_grad() { require(impl_), impl_->grad.clear(); }

Tensor Tensor::detach() const {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = require(impl_).shape;
  impl->storage = impl_->storage;
  return Tensor(std::move(impl));
}

Tensor Tensor::clone() const { return Tensor::from(shape(), impl_->data(), impl_->requires_grad && !impl_->node); }

void Tensor::backward() const {
  const auto& root = require(impl_);
  if (root.released) {
    throw UsageError("backward called again on a graph whose tape was already freed");
  }
  if (!root.requires_grad) throw UsageError("backward through an untracked graph");
  if (root.data().size() != 1) {
    throw UsageError("backward requires a scalar loss, got shape " + shape_str(root.shape));
  }

  // Reverse topological order over recorded nodes (iterative DFS post-order).
  std::vector<detail::TensorImpl*> order;
  std::unordered_set<const detail::TensorImpl*> visited;
  std::vector<std::pair<detail::TensorImpl*, std::size_t>> stack;
  stack.emplace_back(impl_.get(), 0);
  visited.insert(impl_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (node->node && next < node->node->inputs.size()) {
      auto* child = node->node->inputs[next++].get();
      if (child->requires_grad && !visited.count(child)) {
        visited.insert(child);
        stack.emplace_back(child, 0);
      }
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }

  impl_->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto* t = *it;
    if (t->node && !t->grad.empty()) t->node->backward(*t);
  }
  for (auto* t : order) {
    if (t->node) {
      t->node.reset();
      t->grad.clear();
      t->grad.shrink_to_fit();
      t->released = true;
    }
  }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }

NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

void set_check_finite(bool on) { g_check_finite = on; }

bool check_finite() { return g_check_finite; }

void set_num_threads(int threads) {
  if (threads <= 0) {
    threads = 1;
    if (const char* env = std::getenv("TAP_THREADS")) {
      const int v = std::atoi(env);
      if (v > 0) threads = v;
    }
  }
  g_threads = threads;
  openblas_set_num_threads(threads);
}

int num_threads() { return g_threads; }

namespace {

// Keep large buffers on the heap free lists; mmap-backed allocations would
// page-fault on every fresh activation and gradient.
const bool kMallocTuned = [] {
  mallopt(M_MMAP_THRESHOLD, 512 * 1024 * 1024);
  mallopt(M_TRIM_THRESHOLD, 1024 * 1024 * 1024);
  return true;
}();

}  // namespace

namespace detail {

namespace {

void verify_finite(const char* op, const Buffer& data) {
  for (double v : data) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by ") + op);
  }
}

}  // namespace

Tensor make_result(const char* op, Shape shape, Buffer data,
                   const std::vector<Tensor>& inputs,
                   const std::function<BackwardFn()>& make_backward) {
  if (check_finite()) verify_finite(op, data);
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->storage = std::make_shared<Buffer>(std::move(data));
  bool track = false;
  if (grad_enabled()) {
    for (const auto& t : inputs) {
      if (t.defined() && t.requires_grad()) track = true;
    }
  }
  if (track) {
    impl->requires_grad = true;
    auto node = std::make_shared<TapeNode>();
    node->op = op;
    for (const auto& t : inputs) {
      if (t.defined()) node->inputs.push_back(t.impl());
    }
    node->backward = make_backward();
    impl->node = std::move(node);
  }
  return Tensor(std::move(impl));
}

Tensor make_result(const char* op, Shape shape, Buffer data,
                   std::initializer_list<Tensor> inputs,
                   const std::function<BackwardFn()>& make_backward) {
  return make_result(op, std::move(shape), std::move(data), std::vector<Tensor>(inputs), make_backward);
}

}  // namespace detail

}  // namespace tap
