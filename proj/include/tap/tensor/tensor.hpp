#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tap {

class Rng;

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// Allocator that leaves doubles uninitialized on resize; op outputs are
// always fully written, so zero-filling them first only costs bandwidth.
template <class T>
struct UninitAllocator : std::allocator<T> {
  template <class U>
  struct rebind {
    using other = UninitAllocator<U>;
  };
  UninitAllocator() = default;
  template <class U>
  UninitAllocator(const UninitAllocator<U>&) {}
  template <class U>
  void construct(U* p) {
    ::new (static_cast<void*>(p)) U;
  }
  template <class U, class... Args>
  void construct(U* p, Args&&... args) {
    ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }
};

}  // namespace detail

using Buffer = std::vector<double, detail::UninitAllocator<double>>;

namespace detail {

struct TapeNode;

// Write target for a gradient. A gradient that did not exist yet is
// allocated uninitialized and must be overwritten rather than accumulated.
struct GradSink {
  double* p;
  bool fresh;
  void put(std::size_t i, double v) const {
    if (fresh) {
      p[i] = v;
    } else {
      p[i] += v;
    }
  }
};

struct TensorImpl {
  Shape shape;
  std::shared_ptr<Buffer> storage;  // shared between reshape views
  Buffer grad;  // empty until something accumulates into it
  bool requires_grad = false;
  bool released = false;  // set once backward has consumed this node's tape
  std::shared_ptr<TapeNode> node;  // null for leaves and untracked values

  const Buffer& data() const { return *storage; }
  Buffer& ensure_grad();
  GradSink grad_sink();
};

using ImplPtr = std::shared_ptr<TensorImpl>;

// One recorded operation. `backward` receives the output (value and
// gradient) and accumulates into the gradients of inputs that require grad.
// The output's gradient is dead afterwards, so it may be moved from.
struct TapeNode {
  const char* op = "";
  std::vector<ImplPtr> inputs;
  std::function<void(TensorImpl& out)> backward;
};

}  // namespace detail

// Dense row-major tensor of doubles with optional reverse-mode tracking.
//
// Tensors are handles: copying a Tensor aliases the same storage. Values are
// treated as immutable once created; only leaves may be edited in place
// (optimizer updates, test fixtures), and only while no tape references them.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor ones(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, const std::vector<double>& values, bool requires_grad = false);
  static Tensor from(Shape shape, Buffer values, bool requires_grad = false);
  static Tensor from(Shape shape, std::initializer_list<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0, bool requires_grad = false);
  static Tensor uniform(Shape shape, Rng& rng, double lo, double hi, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim() const { return shape().size(); }
  // Negative axes count from the back.
  std::size_t size(int axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;
  std::vector<double> to_vector() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);
  bool is_leaf() const;

  bool has_grad() const;
  std::span<const double> grad() const;
  Tensor grad_tensor() const;
  void zero_grad();

  // Populates d(this)/d(leaf) for every tracked leaf and frees the tape.
  // `this` must be a tracked scalar.
  void backward() const;

  Tensor detach() const;
  Tensor clone() const;

  const detail::TensorImpl* id() const { return impl_.get(); }
  const detail::ImplPtr& impl() const { return impl_; }
  explicit Tensor(detail::ImplPtr impl) : impl_(std::move(impl)) {}

 private:
  detail::ImplPtr impl_;
};

// Gradient recording switch (per thread).
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// NaN/Inf detection at op boundaries. Off by default; tests turn it on.
void set_check_finite(bool on);
bool check_finite();

// Thread count for the BLAS kernels; results are deterministic for a fixed
// count. Reads TAP_THREADS when called with 0.
void set_num_threads(int threads);
int num_threads();

namespace detail {

using BackwardFn = std::function<void(TensorImpl& out)>;

// Wraps a freshly computed value; records a tape node when any input is
// tracked and recording is enabled. `make_backward` is only invoked when a
// node is recorded.
Tensor make_result(const char* op, Shape shape, Buffer data,
                   std::initializer_list<Tensor> inputs,
                   const std::function<BackwardFn()>& make_backward);
Tensor make_result(const char* op, Shape shape, Buffer data,
                   const std::vector<Tensor>& inputs,
                   const std::function<BackwardFn()>& make_backward);

}  // namespace detail

}  // namespace tap
