#pragma once

#include <functional>
#include <initializer_list>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace dagankit {

using Shape = std::vector<int>;

int shape_count(const Shape& s);
std::string shape_str(const Shape& s);

// Rejected preconditions (shape/axis/extent mismatches).
struct ShapeError : std::invalid_argument {
  explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

// Non-finite values or other numerical failures.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

class Tape;
namespace detail {
struct Access;
}

// Dense n-d array of finite doubles, rank <= 4. Values are immutable after
// creation; primitives return new Tensors. A Tensor recorded on a Tape
// carries the id of its graph node, constants carry none.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v);
  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double v);

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int count() const { return static_cast<int>(data_ ? data_->size() : 0); }
  int extent(int axis) const { return shape_[axis]; }

  const std::vector<double>& values() const { return *data_; }
  double at(int i) const { return (*data_)[i]; }
  // Value of a one-element tensor.
  double item() const;

  bool tracked() const { return node_ >= 0; }
  int node() const { return node_; }
  Tape* tape() const { return tape_; }

 private:
  friend class Tape;
  friend struct detail::Access;
  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
  Tape* tape_ = nullptr;
  int node_ = -1;
};

// Gradient accumulators indexed by node id, filled during the reverse pass.
class GradSink {
 public:
  explicit GradSink(int n) : grads_(n) {}
  // Accumulate `n` values from `src` into the gradient slot of `node`.
  void add(int node, const double* src, int n);
  void add_scaled(int node, const double* src, int n, double k);
  bool has(int node) const { return !grads_[node].empty(); }
  const std::vector<double>& at(int node) const { return grads_[node]; }
  // Zero-initialized accumulator of `n` values for `node`.
  std::vector<double>& slot(int node, int n);
  std::vector<double> release(int node) { return std::move(grads_[node]); }

 private:
  std::vector<std::vector<double>> grads_;
};

using BackwardFn = std::function<void(const std::vector<double>& gout, GradSink& sink)>;

// Ordered record of applied primitives: one node per primitive, inputs by
// node id, backward closure owning whatever forward state it saved. Node ids
// are append-ordered, so the record is topologically sorted and the reverse
// pass visits each node exactly once.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf node (parameter or checked input): tracked copy of `value`.
  Tensor leaf(const Tensor& value);
  Tensor leaf(Shape shape, std::vector<double> values);

  // Reverse pass from a scalar loss. Returns gradients indexed by node id;
  // nodes unreachable from the loss get zero gradients.
  std::vector<Tensor> backward(const Tensor& loss);

  int num_nodes() const { return static_cast<int>(nodes_.size()); }

  // Used by op implementations.
  int record(Shape out_shape, std::vector<int> input_nodes, BackwardFn fn);
  static Tape* common_tape(std::initializer_list<const Tensor*> ins, const char* op);

 private:
  struct Node {
    Shape shape;
    std::vector<int> inputs;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

// --- Elementwise primitives ------------------------------------------------
// Binary ops broadcast a one-element tensor against any shape; otherwise the
// shapes must match exactly.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope);
Tensor sigmoid(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor sin(const Tensor& x);
Tensor cos(const Tensor& x);
Tensor scale(const Tensor& x, double c);
Tensor add_scalar(const Tensor& x, double c);

// --- Linear algebra ---------------------------------------------------------
Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k] x [k,n]
Tensor transpose(const Tensor& x);                // [m,n] -> [n,m]
Tensor reshape(const Tensor& x, Shape shape);

// --- Convolution and friends -------------------------------------------------
// input [C,H,W] or [N,C,H,W]; kernel [Co,Ci,kh,kw]; zero padding;
// cross-correlation (no kernel flip).
Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int pad);
Tensor bias_add(const Tensor& x, const Tensor& bias);  // bias [C]
// Per-channel window mean, stride 1, valid extent (H-w+1, W-w+1).
Tensor box_filter(const Tensor& x, int window);

// --- Shape surgery -----------------------------------------------------------
Tensor concat(const std::vector<Tensor>& parts);  // flat; channel concat for [C,H,W]
Tensor take(const Tensor& x, int start, int len); // contiguous flat slice -> [len]
Tensor crop(const Tensor& x, int y0, int x0, int h, int w);  // [C,H,W] spatial
Tensor tile_channels(const Tensor& x, int channels);         // [1,H,W] -> [C,H,W]
Tensor interleave2(const Tensor& a, const Tensor& b);        // [n],[n] -> [n,2]
Tensor stack_scalars(const std::vector<Tensor>& xs, Shape shape);

// --- Normalization / sampling / resampling -----------------------------------
Tensor softmax(const Tensor& x, int axis);
// image [C,H,W]; coords [H',W',2] normalized to [-1,1], align-corners, with
// border clamping. Gradients flow to the image and to the coordinates; the
// coordinate gradient is the piecewise-bilinear subgradient, 0 exactly at
// cell boundaries.
Tensor grid_sample_bilinear(const Tensor& image, const Tensor& coords);
Tensor avg_pool(const Tensor& x, int factor);
Tensor upsample_bilinear(const Tensor& x, int factor);
enum class ResampleMode { AveragePoolDown, BilinearUp };
Tensor resample(const Tensor& x, int factor, ResampleMode mode);

// --- Reductions ----------------------------------------------------------------
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor spatial_mean(const Tensor& x);  // [C,H,W] -> [C]

// Identity sampling grid [H,W,2], align-corners normalized coordinates.
Tensor identity_grid(int h, int w);

}  // namespace dagankit
