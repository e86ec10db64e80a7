#include "dagankit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>

namespace dagankit {

namespace detail {
struct Access {
  static Tensor make(Shape shape, std::vector<double> values) {
    return Tensor(std::move(shape), std::move(values));
  }
  static Tensor alias(const Tensor& t, Shape shape) {
    Tensor r;
    r.shape_ = std::move(shape);
    r.data_ = t.data_;
    return r;
  }
  static void bind(Tensor& t, Tape* tape, int node) {
    t.tape_ = tape;
    t.node_ = node;
  }
  static std::shared_ptr<const std::vector<double>> data(const Tensor& t) {
    return t.data_;
  }
};
}  // namespace detail

using detail::Access;
using Data = std::shared_ptr<const std::vector<double>>;

int shape_count(const Shape& s) {
  int n = 1;
  for (int e : s) n *= e;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

namespace {

void check_finite(const char* op, const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NumericError(std::string(op) + ": non-finite value in result");
    }
  }
}

void validate_shape(const char* op, const Shape& s, int count) {
  if (s.size() > 4) throw ShapeError(std::string(op) + ": rank > 4 " + shape_str(s));
  for (int e : s) {
    if (e <= 0) throw ShapeError(std::string(op) + ": non-positive extent " + shape_str(s));
  }
  if (shape_count(s) != count) {
    throw ShapeError(std::string(op) + ": shape " + shape_str(s) + " does not match " +
                     std::to_string(count) + " values");
  }
}

// Creates the result tensor and records it on the inputs' tape (if any).
Tensor finish(const char* op, Shape shape, std::vector<double> values,
              std::initializer_list<const Tensor*> ins, BackwardFn fn) {
  check_finite(op, values);
  Tensor r = Access::make(std::move(shape), std::move(values));
  Tape* tape = Tape::common_tape(ins, op);
  if (tape != nullptr) {
    std::vector<int> nodes;
    for (const Tensor* t : ins) {
      if (t->tracked()) nodes.push_back(t->node());
    }
    Access::bind(r, tape, tape->record(r.shape(), std::move(nodes), std::move(fn)));
  }
  return r;
}

enum class BMode { Equal, AScalar, BScalar };

struct BinaryPlan {
  BMode mode;
  Shape shape;
  int n;
};

BinaryPlan plan_binary(const char* op, const Tensor& a, const Tensor& b) {
  if (a.count() == 0 || b.count() == 0) {
    throw ShapeError(std::string(op) + ": empty operand");
  }
  if (a.shape() == b.shape()) return {BMode::Equal, a.shape(), a.count()};
  if (a.count() == 1) return {BMode::AScalar, b.shape(), b.count()};
  if (b.count() == 1) return {BMode::BScalar, a.shape(), a.count()};
  throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                   shape_str(b.shape()) + " are not broadcast-compatible");
}

double vsum(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

}  // namespace

// --- Tensor ------------------------------------------------------------------

Tensor::Tensor(Shape shape, std::vector<double> values) {
  validate_shape("tensor", shape, static_cast<int>(values.size()));
  check_finite("tensor", values);
  shape_ = std::move(shape);
  data_ = std::make_shared<const std::vector<double>>(std::move(values));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::zeros(Shape shape) {
  int n = shape_count(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(Shape shape, double v) {
  int n = shape_count(shape);
  return Tensor(std::move(shape), std::vector<double>(n, v));
}

double Tensor::item() const {
  if (count() != 1) throw ShapeError("item: tensor " + shape_str(shape_) + " is not scalar");
  return (*data_)[0];
}

// --- GradSink ------------------------------------------------------------------

std::vector<double>& GradSink::slot(int node, int n) {
  auto& d = grads_[node];
  if (d.empty()) d.assign(n, 0.0);
  return d;
}

void GradSink::add(int node, const double* src, int n) {
  auto& d = slot(node, n);
  for (int i = 0; i < n; ++i) d[i] += src[i];
}

void GradSink::add_scaled(int node, const double* src, int n, double k) {
  auto& d = slot(node, n);
  for (int i = 0; i < n; ++i) d[i] += k * src[i];
}

// --- Tape ------------------------------------------------------------------------

Tape* Tape::common_tape(std::initializer_list<const Tensor*> ins, const char* op) {
  Tape* tape = nullptr;
  for (const Tensor* t : ins) {
    if (t->tape() == nullptr) continue;
    if (tape != nullptr && tape != t->tape()) {
      throw ShapeError(std::string(op) + ": operands belong to different graphs");
    }
    tape = t->tape();
  }
  return tape;
}

int Tape::record(Shape out_shape, std::vector<int> input_nodes, BackwardFn fn) {
  nodes_.push_back(Node{std::move(out_shape), std::move(input_nodes), std::move(fn)});
  return static_cast<int>(nodes_.size()) - 1;
}

Tensor Tape::leaf(const Tensor& value) {
  Tensor r = Access::alias(value, value.shape());
  Access::bind(r, this, record(value.shape(), {}, nullptr));
  return r;
}

Tensor Tape::leaf(Shape shape, std::vector<double> values) {
  return leaf(Tensor(std::move(shape), std::move(values)));
}

std::vector<Tensor> Tape::backward(const Tensor& loss) {
  if (loss.count() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape()));
  }
  const int n = num_nodes();
  GradSink sink(n);
  if (loss.tracked()) {
    if (loss.tape() != this) throw ShapeError("backward: loss from a different graph");
    sink.slot(loss.node(), 1)[0] = 1.0;
    for (int i = loss.node(); i >= 0; --i) {
      if (sink.has(i) && nodes_[i].backward) nodes_[i].backward(sink.at(i), sink);
    }
  }
  std::vector<Tensor> grads(n);
  for (int i = 0; i < n; ++i) {
    if (sink.has(i)) {
      grads[i] = Access::make(nodes_[i].shape, sink.release(i));
    } else {
      grads[i] = Tensor::zeros(nodes_[i].shape);
    }
  }
  return grads;
}

// --- Elementwise -------------------------------------------------------------------

namespace {

// Elementwise binary op with broadcast-aware backward hooks.
template <typename Fwd, typename BwdA, typename BwdB>
Tensor binary_op(const char* op, const Tensor& a, const Tensor& b, Fwd fwd, BwdA ga,
                 BwdB gb) {
  BinaryPlan p = plan_binary(op, a, b);
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> out(p.n);
  switch (p.mode) {
    case BMode::Equal:
      for (int i = 0; i < p.n; ++i) out[i] = fwd(av[i], bv[i]);
      break;
    case BMode::AScalar:
      for (int i = 0; i < p.n; ++i) out[i] = fwd(av[0], bv[i]);
      break;
    case BMode::BScalar:
      for (int i = 0; i < p.n; ++i) out[i] = fwd(av[i], bv[0]);
      break;
  }
  Data ad = Access::data(a), bd = Access::data(b);
  const int na = a.node(), nb = b.node();
  const BMode mode = p.mode;
  const int n = p.n;
  return finish(op, p.shape, std::move(out), {&a, &b},
                [=](const std::vector<double>& g, GradSink& sink) {
                  if (na >= 0) {
                    if (mode == BMode::AScalar) {
                      double s = 0.0;
                      for (int i = 0; i < n; ++i) s += g[i] * ga((*ad)[0], (*bd)[i]);
                      sink.slot(na, 1)[0] += s;
                    } else {
                      auto& d = sink.slot(na, n);
                      if (mode == BMode::Equal) {
                        for (int i = 0; i < n; ++i) d[i] += g[i] * ga((*ad)[i], (*bd)[i]);
                      } else {
                        for (int i = 0; i < n; ++i) d[i] += g[i] * ga((*ad)[i], (*bd)[0]);
                      }
                    }
                  }
                  if (nb >= 0) {
                    if (mode == BMode::BScalar) {
                      double s = 0.0;
                      for (int i = 0; i < n; ++i) s += g[i] * gb((*ad)[i], (*bd)[0]);
                      sink.slot(nb, 1)[0] += s;
                    } else {
                      auto& d = sink.slot(nb, n);
                      if (mode == BMode::Equal) {
                        for (int i = 0; i < n; ++i) d[i] += g[i] * gb((*ad)[i], (*bd)[i]);
                      } else {
                        for (int i = 0; i < n; ++i) d[i] += g[i] * gb((*ad)[0], (*bd)[i]);
                      }
                    }
                  }
                });
}

// Elementwise unary op; the backward hook sees (x, y) for y = f(x).
template <typename Fwd, typename Bwd>
Tensor unary_op(const char* op, const Tensor& x, Fwd fwd, Bwd bwd) {
  const auto& xv = x.values();
  const int n = x.count();
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = fwd(xv[i]);
  Tensor r = Access::make(x.shape(), std::move(out));
  check_finite(op, r.values());
  Tape* tape = Tape::common_tape({&x}, op);
  if (tape == nullptr) return r;
  Data xd = Access::data(x), yd = Access::data(r);
  const int nx = x.node();
  int node = tape->record(x.shape(), {nx},
                          [=](const std::vector<double>& g, GradSink& sink) {
                            auto& d = sink.slot(nx, n);
                            for (int i = 0; i < n; ++i) {
                              d[i] += g[i] * bwd((*xd)[i], (*yd)[i]);
                            }
                          });
  Access::bind(r, tape, node);
  return r;
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  if (x > 35.0) return x;
  if (x < -35.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Tensor neg(const Tensor& x) {
  return unary_op(
      "neg", x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Tensor abs(const Tensor& x) {
  return unary_op(
      "abs", x, [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor relu(const Tensor& x) {
  return unary_op(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& x, double slope) {
  return unary_op(
      "leaky_relu", x, [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      "sigmoid", x, [](double v) { return stable_sigmoid(v); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor softplus(const Tensor& x) {
  return unary_op(
      "softplus", x, [](double v) { return stable_softplus(v); },
      [](double v, double) { return stable_sigmoid(v); });
}

Tensor exp(const Tensor& x) {
  return unary_op(
      "exp", x, [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary_op(
      "log", x, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Tensor sqrt(const Tensor& x) {
  return unary_op(
      "sqrt", x, [](double v) { return std::sqrt(v); },
      [](double, double y) { return 0.5 / y; });
}

Tensor sin(const Tensor& x) {
  return unary_op(
      "sin", x, [](double v) { return std::sin(v); },
      [](double v, double) { return std::cos(v); });
}

Tensor cos(const Tensor& x) {
  return unary_op(
      "cos", x, [](double v) { return std::cos(v); },
      [](double v, double) { return -std::sin(v); });
}

Tensor scale(const Tensor& x, double c) {
  return unary_op(
      "scale", x, [c](double v) { return c * v; },
      [c](double, double) { return c; });
}

Tensor add_scalar(const Tensor& x, double c) {
  return unary_op(
      "add_scalar", x, [c](double v) { return v + c; },
      [](double, double) { return 1.0; });
}

// --- Linear algebra -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul: expects rank-2 operands, got " + shape_str(a.shape()) +
                     " and " + shape_str(b.shape()));
  }
  const int m = a.extent(0), k = a.extent(1);
  const int k2 = b.extent(0), n = b.extent(1);
  if (k != k2) {
    throw ShapeError("matmul: inner extents differ, " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> out(static_cast<size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i) {
    const double* arow = av.data() + static_cast<size_t>(i) * k;
    double* orow = out.data() + static_cast<size_t>(i) * n;
    for (int l = 0; l < k; ++l) {
      const double alv = arow[l];
      const double* brow = bv.data() + static_cast<size_t>(l) * n;
      for (int j = 0; j < n; ++j) orow[j] += alv * brow[j];
    }
  }
  Data ad = Access::data(a), bd = Access::data(b);
  const int na = a.node(), nb = b.node();
  return finish("matmul", {m, n}, std::move(out), {&a, &b},
                [=](const std::vector<double>& g, GradSink& sink) {
                  if (na >= 0) {
                    // dA = g . B^T
                    auto& da = sink.slot(na, m * k);
                    for (int i = 0; i < m; ++i) {
                      const double* grow = g.data() + static_cast<size_t>(i) * n;
                      double* drow = da.data() + static_cast<size_t>(i) * k;
                      for (int l = 0; l < k; ++l) {
                        const double* brow = (*bd).data() + static_cast<size_t>(l) * n;
                        double s = 0.0;
                        for (int j = 0; j < n; ++j) s += grow[j] * brow[j];
                        drow[l] += s;
                      }
                    }
                  }
                  if (nb >= 0) {
                    // dB = A^T . g
                    auto& db = sink.slot(nb, k * n);
                    for (int i = 0; i < m; ++i) {
                      const double* arow = (*ad).data() + static_cast<size_t>(i) * k;
                      const double* grow = g.data() + static_cast<size_t>(i) * n;
                      for (int l = 0; l < k; ++l) {
                        const double alv = arow[l];
                        double* drow = db.data() + static_cast<size_t>(l) * n;
                        for (int j = 0; j < n; ++j) drow[j] += alv * grow[j];
                      }
                    }
                  }
                });
}

Tensor transpose(const Tensor& x) {
  if (x.rank() != 2) throw ShapeError("transpose: expects rank 2, got " + shape_str(x.shape()));
  const int m = x.extent(0), n = x.extent(1);
  const auto& xv = x.values();
  std::vector<double> out(static_cast<size_t>(m) * n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[static_cast<size_t>(j) * m + i] = xv[static_cast<size_t>(i) * n + j];
  const int nx = x.node();
  return finish("transpose", {n, m}, std::move(out), {&x},
                [=](const std::vector<double>& g, GradSink& sink) {
                  if (nx < 0) return;
                  auto& d = sink.slot(nx, m * n);
                  for (int j = 0; j < n; ++j)
                    for (int i = 0; i < m; ++i)
                      d[static_cast<size_t>(i) * n + j] += g[static_cast<size_t>(j) * m + i];
                });
}

Tensor reshape(const Tensor& x, Shape shape) {
  validate_shape("reshape", shape, x.count());
  Tensor r = Access::alias(x, shape);
  Tape* tape = Tape::common_tape({&x}, "reshape");
  if (tape == nullptr) return r;
  const int nx = x.node();
  const int n = x.count();
  int node = tape->record(shape, {nx}, [=](const std::vector<double>& g, GradSink& sink) {
    sink.add(nx, g.data(), n);
  });
  Access::bind(r, tape, node);
  return r;
}

// --- Convolution ------------------------------------------------------------------

namespace {

struct ConvDims {
  int n, c, h, w;        // input
  int co, kh, kw;        // kernel
  int oh, ow;            // output
  int stride, pad;
  bool batched;
};

ConvDims conv_dims(const char* op, const Tensor& input, const Tensor& kernel, int stride,
                   int pad) {
  if (input.rank() != 3 && input.rank() != 4) {
    throw ShapeError(std::string(op) + ": input must be [C,H,W] or [N,C,H,W], got " +
                     shape_str(input.shape()));
  }
  if (kernel.rank() != 4) {
    throw ShapeError(std::string(op) + ": kernel must be [Co,Ci,kh,kw], got " +
                     shape_str(kernel.shape()));
  }
  if (stride < 1) throw ShapeError(std::string(op) + ": stride must be >= 1");
  if (pad < 0) throw ShapeError(std::string(op) + ": padding must be >= 0");
  ConvDims d;
  d.batched = input.rank() == 4;
  d.n = d.batched ? input.extent(0) : 1;
  d.c = input.extent(d.batched ? 1 : 0);
  d.h = input.extent(d.batched ? 2 : 1);
  d.w = input.extent(d.batched ? 3 : 2);
  d.co = kernel.extent(0);
  d.kh = kernel.extent(2);
  d.kw = kernel.extent(3);
  d.stride = stride;
  d.pad = pad;
  if (kernel.extent(1) != d.c) {
    throw ShapeError(std::string(op) + ": kernel channels " + shape_str(kernel.shape()) +
                     " do not match input " + shape_str(input.shape()));
  }
  if (d.kh > d.h + 2 * pad || d.kw > d.w + 2 * pad) {
    throw ShapeError(std::string(op) + ": kernel larger than padded input");
  }
  d.oh = (d.h + 2 * pad - d.kh) / stride + 1;
  d.ow = (d.w + 2 * pad - d.kw) / stride + 1;
  if (d.oh < 1 || d.ow < 1) {
    throw ShapeError(std::string(op) + ": zero-extent output");
  }
  return d;
}

// Valid output range [o0, o1) such that o*stride - pad + k lies in [0, extent).
inline void out_range(int extent, int stride, int pad, int k, int omax, int* o0, int* o1) {
  int lo = pad - k;  // o*stride >= lo
  *o0 = lo <= 0 ? 0 : (lo + stride - 1) / stride;
  int hi = extent - 1 + pad - k;  // o*stride <= hi
  *o1 = hi < 0 ? 0 : std::min(omax, hi / stride + 1);
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int pad) {
  const ConvDims d = conv_dims("conv2d", input, kernel, stride, pad);
  const auto& in = input.values();
  const auto& ker = kernel.values();
  std::vector<double> out(static_cast<size_t>(d.n) * d.co * d.oh * d.ow, 0.0);

  for (int n = 0; n < d.n; ++n) {
    for (int co = 0; co < d.co; ++co) {
      double* oplane = out.data() + (static_cast<size_t>(n) * d.co + co) * d.oh * d.ow;
      for (int ci = 0; ci < d.c; ++ci) {
        const double* iplane = in.data() + (static_cast<size_t>(n) * d.c + ci) * d.h * d.w;
        const double* kplane = ker.data() + (static_cast<size_t>(co) * d.c + ci) * d.kh * d.kw;
        for (int ky = 0; ky < d.kh; ++ky) {
          for (int oh = 0; oh < d.oh; ++oh) {
            const int ih = oh * d.stride - d.pad + ky;
            if (ih < 0 || ih >= d.h) continue;
            const double* irow = iplane + static_cast<size_t>(ih) * d.w;
            double* orow = oplane + static_cast<size_t>(oh) * d.ow;
            for (int kx = 0; kx < d.kw; ++kx) {
              const double w = kplane[ky * d.kw + kx];
              int o0, o1;
              out_range(d.w, d.stride, d.pad, kx, d.ow, &o0, &o1);
              const double* ibase = irow - d.pad + kx;
              if (d.stride == 1) {
                for (int ow = o0; ow < o1; ++ow) orow[ow] += w * ibase[ow];
              } else {
                for (int ow = o0; ow < o1; ++ow) orow[ow] += w * ibase[ow * d.stride];
              }
            }
          }
        }
      }
    }
  }

  Shape oshape = d.batched ? Shape{d.n, d.co, d.oh, d.ow} : Shape{d.co, d.oh, d.ow};
  Data idata = Access::data(input), kdata = Access::data(kernel);
  const int ni = input.node(), nk = kernel.node();
  return finish(
      "conv2d", oshape, std::move(out), {&input, &kernel},
      [=](const std::vector<double>& g, GradSink& sink) {
        if (ni >= 0) {
          auto& gi = sink.slot(ni, d.n * d.c * d.h * d.w);
          for (int n = 0; n < d.n; ++n) {
            for (int co = 0; co < d.co; ++co) {
              const double* gplane = g.data() + (static_cast<size_t>(n) * d.co + co) * d.oh * d.ow;
              for (int ci = 0; ci < d.c; ++ci) {
                double* iplane = gi.data() + (static_cast<size_t>(n) * d.c + ci) * d.h * d.w;
                const double* kplane =
                    (*kdata).data() + (static_cast<size_t>(co) * d.c + ci) * d.kh * d.kw;
                for (int ky = 0; ky < d.kh; ++ky) {
                  for (int oh = 0; oh < d.oh; ++oh) {
                    const int ih = oh * d.stride - d.pad + ky;
                    if (ih < 0 || ih >= d.h) continue;
                    double* irow = iplane + static_cast<size_t>(ih) * d.w;
                    const double* grow = gplane + static_cast<size_t>(oh) * d.ow;
                    for (int kx = 0; kx < d.kw; ++kx) {
                      const double w = kplane[ky * d.kw + kx];
                      int o0, o1;
                      out_range(d.w, d.stride, d.pad, kx, d.ow, &o0, &o1);
                      double* ibase = irow - d.pad + kx;
                      if (d.stride == 1) {
                        for (int ow = o0; ow < o1; ++ow) ibase[ow] += w * grow[ow];
                      } else {
                        for (int ow = o0; ow < o1; ++ow) ibase[ow * d.stride] += w * grow[ow];
                      }
                    }
                  }
                }
              }
            }
          }
        }
        if (nk >= 0) {
          auto& gk = sink.slot(nk, d.co * d.c * d.kh * d.kw);
          for (int n = 0; n < d.n; ++n) {
            for (int co = 0; co < d.co; ++co) {
              const double* gplane = g.data() + (static_cast<size_t>(n) * d.co + co) * d.oh * d.ow;
              for (int ci = 0; ci < d.c; ++ci) {
                const double* iplane =
                    (*idata).data() + (static_cast<size_t>(n) * d.c + ci) * d.h * d.w;
                double* kplane = gk.data() + (static_cast<size_t>(co) * d.c + ci) * d.kh * d.kw;
                for (int ky = 0; ky < d.kh; ++ky) {
                  for (int oh = 0; oh < d.oh; ++oh) {
                    const int ih = oh * d.stride - d.pad + ky;
                    if (ih < 0 || ih >= d.h) continue;
                    const double* irow = iplane + static_cast<size_t>(ih) * d.w;
                    const double* grow = gplane + static_cast<size_t>(oh) * d.ow;
                    for (int kx = 0; kx < d.kw; ++kx) {
                      int o0, o1;
                      out_range(d.w, d.stride, d.pad, kx, d.ow, &o0, &o1);
                      const double* ibase = irow - d.pad + kx;
                      double s = 0.0;
                      if (d.stride == 1) {
                        for (int ow = o0; ow < o1; ++ow) s += grow[ow] * ibase[ow];
                      } else {
                        for (int ow = o0; ow < o1; ++ow) s += grow[ow] * ibase[ow * d.stride];
                      }
                      kplane[ky * d.kw + kx] += s;
                    }
                  }
                }
              }
            }
          }
        }
      });
}

Tensor bias_add(const Tensor& x, const Tensor& bias) {
  if (x.rank() != 3 && x.rank() != 4) {
    throw ShapeError("bias_add: input must be [C,H,W] or [N,C,H,W], got " +
                     shape_str(x.shape()));
  }
  if (bias.rank() != 1) {
    throw ShapeError("bias_add: bias must be rank 1, got " + shape_str(bias.shape()));
  }
  const bool batched = x.rank() == 4;
  const int n = batched ? x.extent(0) : 1;
  const int c = x.extent(batched ? 1 : 0);
  const int hw = x.extent(batched ? 2 : 1) * x.extent(batched ? 3 : 2);
  if (bias.extent(0) != c) {
    throw ShapeError("bias_add: bias " + shape_str(bias.shape()) + " does not match channels of " +
                     shape_str(x.shape()));
  }
  const auto& xv = x.values();
  const auto& bv = bias.values();
  std::vector<double> out(xv.size());
  for (int i = 0; i < n; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      const double b = bv[ch];
      const size_t base = (static_cast<size_t>(i) * c + ch) * hw;
      for (int k = 0; k < hw; ++k) out[base + k] = xv[base + k] + b;
    }
  }
  const int nx = x.node(), nb = bias.node();
  const int total = x.count();
  return finish("bias_add", x.shape(), std::move(out), {&x, &bias},
                [=](const std::vector<double>& g, GradSink& sink) {
                  if (nx >= 0) sink.add(nx, g.data(), total);
                  if (nb >= 0) {
                    auto& d = sink.slot(nb, c);
                    for (int i = 0; i < n; ++i) {
                      for (int ch = 0; ch < c; ++ch) {
                        const size_t base = (static_cast<size_t>(i) * c + ch) * hw;
                        double s = 0.0;
                        for (int k = 0; k < hw; ++k) s += g[base + k];
                        d[ch] += s;
                      }
                    }
                  }
                });
}

Tensor box_filter(const Tensor& x, int window) {
  if (x.rank() != 3) throw ShapeError("box_filter: expects [C,H,W], got " + shape_str(x.shape()));
  if (window < 1 || window % 2 == 0) {
    throw ShapeError("box_filter: window must be odd and >= 1");
  }
  const int c = x.extent(0), h = x.extent(1), w = x.extent(2);
  const int oh = h - window + 1, ow = w - window + 1;
  if (oh < 1 || ow < 1) throw ShapeError("box_filter: window larger than input");
  const double inv = 1.0 / (window * window);
  const auto& xv = x.values();
  std::vector<double> out(static_cast<size_t>(c) * oh * ow, 0.0);
  for (int ch = 0; ch < c; ++ch) {
    const double* iplane = xv.data() + static_cast<size_t>(ch) * h * w;
    double* oplane = out.data() + static_cast<size_t>(ch) * oh * ow;
    for (int y = 0; y < oh; ++y) {
      for (int ky = 0; ky < window; ++ky) {
        const double* irow = iplane + static_cast<size_t>(y + ky) * w;
        double* orow = oplane + static_cast<size_t>(y) * ow;
        for (int kx = 0; kx < window; ++kx) {
          for (int xx = 0; xx < ow; ++xx) orow[xx] += irow[xx + kx];
        }
      }
    }
    for (int i = 0; i < oh * ow; ++i) oplane[i] *= inv;
  }
  const int nx = x.node();
  return finish("box_filter", {c, oh, ow}, std::move(out), {&x},
                [=](const std::vector<double>& g, GradSink& sink) {
                  if (nx < 0) return;
                  auto& d = sink.slot(nx, c * h * w);
                  for (int ch = 0; ch < c; ++ch) {
                    double* iplane = d.data() + static_cast<size_t>(ch) * h * w;
                    const double* gplane = g.data() + static_cast<size_t>(ch) * oh * ow;
                    for (int y = 0; y < oh; ++y) {
                      for (int ky = 0; ky < window; ++ky) {
                        double* irow = iplane + static_cast<size_t>(y + ky) * w;
                        const double* grow = gplane + static_cast<size_t>(y) * ow;
                        for (int kx = 0; kx < window; ++kx) {
                          for (int xx = 0; xx < ow; ++xx) irow[xx + kx] += inv * grow[xx];
                        }
                      }
                    }
                  }
                });
}

// --- Shape surgery ---------------------------------------------------------------

Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  const Shape& first = parts[0].shape();
  int axis0 = 0;
  int total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != static_cast<int>(first.size())) {
      throw ShapeError("concat: rank mismatch " + shape_str(first) + " vs " +
                       shape_str(p.shape()));
    }
    for (size_t i = 1; i < first.size(); ++i) {
      if (p.shape()[i] != first[i]) {
        throw ShapeError("concat: trailing extents differ, " + shape_str(first) + " vs " +
                         shape_str(p.shape()));
      }
    }
    axis0 += p.shape()[0];
    total += p.count();
  }
  std::vector<double> out;
  out.reserve(total);
  for (const Tensor& p : parts) {
    const auto& v = p.values();
    out.insert(out.end(), v.begin(), v.end());
  }
  Shape oshape = first;
  oshape[0] = axis0;

  Tape* tape = nullptr;
  for (const Tensor& p : parts) {
    Tape* t = Tape::common_tape({&p}, "concat");
    if (t != nullptr) {
      if (tape != nullptr && tape != t) {
        throw ShapeError("concat: operands belong to different graphs");
      }
      tape = t;
    }
  }
  check_finite("concat", out);
  Tensor r = Access::make(oshape, std::move(out));
  if (tape == nullptr) return r;

  std::vector<int> nodes;
  std::vector<int> offsets;
  std::vector<int> sizes;
  int off = 0;
  std::vector<int> input_nodes;
  for (const Tensor& p : parts) {
    nodes.push_back(p.node());
    offsets.push_back(off);
    sizes.push_back(p.count());
    off += p.count();
    if (p.tracked()) input_nodes.push_back(p.node());
  }
  int node = tape->record(oshape, std::move(input_nodes),
                          [=](const std::vector<double>& g, GradSink& sink) {
                            for (size_t i = 0; i < nodes.size(); ++i) {
                              if (nodes[i] >= 0) {
                                sink.add(nodes[i], g.data() + offsets[i], sizes[i]);
                              }
                            }
                          });
  Access::bind(r, tape, node);
  return r;
}

Tensor take(const Tensor& x, int start, int len) {
  if (start < 0 || len < 1 || start + len > x.count()) {
    throw ShapeError("take: range [" + std::to_string(start) + "," +
                     std::to_string(start + len) + ") out of bounds for " +
                     shape_str(x.shape()));
  }
  const auto& xv = x.values();
  std::vector<double> out(xv.begin() + start, xv.begin() + start + len);
  const int nx = x.node();
  const int n = x.count();
  return finish("take", {len}, std::move(out), {&x},
                [=](const std::vector<double>& g, GradSink& sink) {
                  if (nx < 0) return;
                  auto& d = sink.slot(nx, n);
                  for (int i = 0; i < len; ++i) d[start + i] += g[i];
                });
}

Tensor crop(const Tensor& x, int y0, int x0, int h, int w) {
  if (x.rank() != 3) throw ShapeError("crop: expects [C,H,W], got " + shape_str(x.shape()));
  const int c = x.extent(0), hh = x.extent(1), ww = x.extent(2);
  if (y0 < 0 || x0 < 0 || h < 1 || w < 1 || y0 + h > hh || x0 + w > ww) {
    throw ShapeError("crop: window out of bounds for " + shape_str(x.shape()));
  }
  const auto& xv = x.values();
  std::vector<double> out(static_cast<size_t>(c) * h * w);
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx)
        out[(static_cast<size_t>(ch) * h + y) * w + xx] =
            xv[(static_cast<size_t>(ch) * hh + y0 + y) * ww + x0 + xx];
  const int nx = x.node();
  return finish("crop", {c, h, w}, std::move(out), {&x},
                [=](const std::vector<double>& g, GradSink& sink) {
                  if (nx < 0) return;
                  auto& d = sink.slot(nx, c * hh * ww);
                  for (int ch = 0; ch < c; ++ch)
                    for (int y = 0; y < h; ++y)
                      for (int xx = 0; xx < w; ++xx)
                        d[(static_cast<size_t>(ch) * hh + y0 + y) * ww + x0 + xx] +=
                            g[(static_cast<size_t>(ch) * h + y) * w + xx];
                });
}

Tensor tile_channels(const Tensor& x, int channels) {
  if (x.rank() != 3 || x.extent(0) != 1) {
    throw ShapeError("tile_channels: expects [1,H,W], got " + shape_str(x.shape()));
  }
  if (channels < 1) throw ShapeError("tile_channels: channel count must be positive");
  const int hw = x.extent(1) * x.extent(2);
  const auto& xv = x.values();
  std::vector<double> out(static_cast<size_t>(channels) * hw);
  for (int c = 0; c < channels; ++c) {
    std::copy(xv.begin(), xv.end(), out.begin() + static_cast<size_t>(c) * hw);
  }
  const int nx = x.node();
  return finish("tile_channels", {channels, x.extent(1), x.extent(2)}, std::move(out), {&x},
                [=](const std::vector<double>& g, GradSink& sink) {
                  if (nx < 0) return;
                  auto& d = sink.slot(nx, hw);
                  for (int c = 0; c < channels; ++c) {
                    const double* gp = g.data() + static_cast<size_t>(c) * hw;
                    for (int i = 0; i < hw; ++i) d[i] += gp[i];
                  }
                });
}

Tensor interleave2(const Tensor& a, const Tensor& b) {
  if (a.rank() != 1 || b.rank() != 1 || a.count() != b.count()) {
    throw ShapeError("interleave2: expects two equal rank-1 tensors, got " +
                     shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const int n = a.count();
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> out(static_cast<size_t>(n) * 2);
  for (int i = 0; i < n; ++i) {
    out[2 * i] = av[i];
    out[2 * i + 1] = bv[i];
  }
  const int na = a.node(), nb = b.node();
  return finish("interleave2", {n, 2}, std::move(out), {&a, &b},
                [=](const std::vector<double>& g, GradSink& sink) {
                  if (na >= 0) {
                    auto& d = sink.slot(na, n);
                    for (int i = 0; i < n; ++i) d[i] += g[2 * i];
                  }
                  if (nb >= 0) {
                    auto& d = sink.slot(nb, n);
                    for (int i = 0; i < n; ++i) d[i] += g[2 * i + 1];
                  }
                });
}

Tensor stack_scalars(const std::vector<Tensor>& xs, Shape shape) {
  if (xs.empty()) throw ShapeError("stack_scalars: no operands");
  validate_shape("stack_scalars", shape, static_cast<int>(xs.size()));
  std::vector<double> out(xs.size());
  Tape* tape = nullptr;
  for (size_t i = 0; i < xs.size(); ++i) {
    if (xs[i].count() != 1) {
      throw ShapeError("stack_scalars: operand " + std::to_string(i) + " is not scalar");
    }
    out[i] = xs[i].at(0);
    Tape* t = Tape::common_tape({&xs[i]}, "stack_scalars");
    if (t != nullptr) {
      if (tape != nullptr && tape != t) {
        throw ShapeError("stack_scalars: operands belong to different graphs");
      }
      tape = t;
    }
  }
  check_finite("stack_scalars", out);
  Tensor r = Access::make(shape, std::move(out));
  if (tape == nullptr) return r;
  std::vector<int> nodes;
  std::vector<int> input_nodes;
  for (const Tensor& t : xs) {
    nodes.push_back(t.node());
    if (t.tracked()) input_nodes.push_back(t.node());
  }
  int node = tape->record(shape, std::move(input_nodes),
                          [=](const std::vector<double>& g, GradSink& sink) {
                            for (size_t i = 0; i < nodes.size(); ++i) {
                              if (nodes[i] >= 0) sink.slot(nodes[i], 1)[0] += g[i];
                            }
                          });
  Access::bind(r, tape, node);
  return r;
}

// --- Softmax / sampling / resampling ----------------------------------------------

Tensor softmax(const Tensor& x, int axis) {
  if (axis < 0 || axis >= x.rank()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " invalid for " +
                     shape_str(x.shape()));
  }
  const int len = x.extent(axis);
  int outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.extent(i);
  for (int i = axis + 1; i < x.rank(); ++i) inner *= x.extent(i);
  const auto& xv = x.values();
  std::vector<double> out(xv.size());
  for (int o = 0; o < outer; ++o) {
    for (int i = 0; i < inner; ++i) {
      const size_t base = static_cast<size_t>(o) * len * inner + i;
      double mx = -1e308;
      for (int l = 0; l < len; ++l) mx = std::max(mx, xv[base + static_cast<size_t>(l) * inner]);
      double s = 0.0;
      for (int l = 0; l < len; ++l) {
        const double e = std::exp(xv[base + static_cast<size_t>(l) * inner] - mx);
        out[base + static_cast<size_t>(l) * inner] = e;
        s += e;
      }
      const double invs = 1.0 / s;
      for (int l = 0; l < len; ++l) out[base + static_cast<size_t>(l) * inner] *= invs;
    }
  }
  check_finite("softmax", out);
  Tensor r = Access::make(x.shape(), std::move(out));
  Tape* tape = Tape::common_tape({&x}, "softmax");
  if (tape == nullptr) return r;
  Data yd = Access::data(r);
  const int nx = x.node();
  const int total = x.count();
  int node = tape->record(
      x.shape(), {nx}, [=](const std::vector<double>& g, GradSink& sink) {
        auto& d = sink.slot(nx, total);
        const auto& y = *yd;
        for (int o = 0; o < outer; ++o) {
          for (int i = 0; i < inner; ++i) {
            const size_t base = static_cast<size_t>(o) * len * inner + i;
            double dot = 0.0;
            for (int l = 0; l < len; ++l) {
              const size_t k = base + static_cast<size_t>(l) * inner;
              dot += g[k] * y[k];
            }
            for (int l = 0; l < len; ++l) {
              const size_t k = base + static_cast<size_t>(l) * inner;
              d[k] += y[k] * (g[k] - dot);
            }
          }
        }
      });
  Access::bind(r, tape, node);
  return r;
}

namespace {

// Snap coordinates this close to a pixel center onto it, making identity
// grids reproduce the input exactly.
constexpr double kGridSnap = 1e-9;

struct Lerp1D {
  int i0, i1;
  double f;       // blend weight of i1
  bool interior;  // coordinate gradient defined (not clamped, not on a boundary)
};

Lerp1D resolve_axis(double coord_norm, int extent) {
  Lerp1D r;
  double u = (coord_norm + 1.0) * 0.5 * (extent - 1);
  bool clamped = false;
  if (u <= 0.0) {
    u = 0.0;
    clamped = true;
  } else if (u >= extent - 1) {
    u = extent - 1;
    clamped = true;
  }
  const double rounded = std::round(u);
  if (std::fabs(u - rounded) < kGridSnap) u = rounded;
  r.i0 = static_cast<int>(std::floor(u));
  if (r.i0 > extent - 1) r.i0 = extent - 1;
  r.f = u - r.i0;
  r.i1 = r.i0 + 1 <= extent - 1 ? r.i0 + 1 : extent - 1;
  r.interior = !clamped && r.f != 0.0;
  return r;
}

}  // namespace

Tensor grid_sample_bilinear(const Tensor& image, const Tensor& coords) {
  if (image.rank() != 3) {
    throw ShapeError("grid_sample: image must be [C,H,W], got " + shape_str(image.shape()));
  }
  if (coords.rank() != 3 || coords.extent(2) != 2) {
    throw ShapeError("grid_sample: coords must be [H',W',2], got " + shape_str(coords.shape()));
  }
  const int c = image.extent(0), h = image.extent(1), w = image.extent(2);
  const int oh = coords.extent(0), ow = coords.extent(1);
  const auto& img = image.values();
  const auto& crd = coords.values();
  std::vector<double> out(static_cast<size_t>(c) * oh * ow);
  const int npix = oh * ow;
  for (int p = 0; p < npix; ++p) {
    const Lerp1D lx = resolve_axis(crd[2 * p], w);
    const Lerp1D ly = resolve_axis(crd[2 * p + 1], h);
    const double w00 = (1.0 - lx.f) * (1.0 - ly.f);
    const double w10 = lx.f * (1.0 - ly.f);
    const double w01 = (1.0 - lx.f) * ly.f;
    const double w11 = lx.f * ly.f;
    for (int ch = 0; ch < c; ++ch) {
      const double* plane = img.data() + static_cast<size_t>(ch) * h * w;
      out[static_cast<size_t>(ch) * npix + p] =
          w00 * plane[ly.i0 * w + lx.i0] + w10 * plane[ly.i0 * w + lx.i1] +
          w01 * plane[ly.i1 * w + lx.i0] + w11 * plane[ly.i1 * w + lx.i1];
    }
  }
  Data idata = Access::data(image), cdata = Access::data(coords);
  const int ni = image.node(), nc = coords.node();
  return finish(
      "grid_sample", {c, oh, ow}, std::move(out), {&image, &coords},
      [=](const std::vector<double>& g, GradSink& sink) {
        const auto& img2 = *idata;
        const auto& crd2 = *cdata;
        double* gi = nullptr;
        double* gc = nullptr;
        if (ni >= 0) gi = sink.slot(ni, c * h * w).data();
        if (nc >= 0) gc = sink.slot(nc, npix * 2).data();
        for (int p = 0; p < npix; ++p) {
          const Lerp1D lx = resolve_axis(crd2[2 * p], w);
          const Lerp1D ly = resolve_axis(crd2[2 * p + 1], h);
          const double w00 = (1.0 - lx.f) * (1.0 - ly.f);
          const double w10 = lx.f * (1.0 - ly.f);
          const double w01 = (1.0 - lx.f) * ly.f;
          const double w11 = lx.f * ly.f;
          double du = 0.0, dv = 0.0;
          for (int ch = 0; ch < c; ++ch) {
            const double gv = g[static_cast<size_t>(ch) * npix + p];
            const size_t o00 = static_cast<size_t>(ch) * h * w + ly.i0 * w + lx.i0;
            const size_t o10 = static_cast<size_t>(ch) * h * w + ly.i0 * w + lx.i1;
            const size_t o01 = static_cast<size_t>(ch) * h * w + ly.i1 * w + lx.i0;
            const size_t o11 = static_cast<size_t>(ch) * h * w + ly.i1 * w + lx.i1;
            if (gi != nullptr) {
              gi[o00] += gv * w00;
              gi[o10] += gv * w10;
              gi[o01] += gv * w01;
              gi[o11] += gv * w11;
            }
            if (gc != nullptr) {
              if (lx.interior) {
                du += gv * ((1.0 - ly.f) * (img2[o10] - img2[o00]) +
                            ly.f * (img2[o11] - img2[o01]));
              }
              if (ly.interior) {
                dv += gv * ((1.0 - lx.f) * (img2[o01] - img2[o00]) +
                            lx.f * (img2[o11] - img2[o10]));
              }
            }
          }
          if (gc != nullptr) {
            gc[2 * p] += du * 0.5 * (w - 1);
            gc[2 * p + 1] += dv * 0.5 * (h - 1);
          }
        }
      });
}

Tensor avg_pool(const Tensor& x, int factor) {
  if (x.rank() != 3) throw ShapeError("avg_pool: expects [C,H,W], got " + shape_str(x.shape()));
  if (factor < 1) throw ShapeError("avg_pool: factor must be >= 1");
  const int c = x.extent(0), h = x.extent(1), w = x.extent(2);
  if (h % factor != 0 || w % factor != 0) {
    throw ShapeError("avg_pool: factor " + std::to_string(factor) +
                     " does not divide spatial extents of " + shape_str(x.shape()));
  }
  const int oh = h / factor, ow = w / factor;
  const double inv = 1.0 / (factor * factor);
  const auto& xv = x.values();
  std::vector<double> out(static_cast<size_t>(c) * oh * ow, 0.0);
  for (int ch = 0; ch < c; ++ch) {
    const double* plane = xv.data() + static_cast<size_t>(ch) * h * w;
    double* oplane = out.data() + static_cast<size_t>(ch) * oh * ow;
    for (int y = 0; y < h; ++y) {
      const double* row = plane + static_cast<size_t>(y) * w;
      double* orow = oplane + static_cast<size_t>(y / factor) * ow;
      for (int xx = 0; xx < w; ++xx) orow[xx / factor] += row[xx];
    }
    for (int i = 0; i < oh * ow; ++i) oplane[i] *= inv;
  }
  const int nx = x.node();
  return finish("avg_pool", {c, oh, ow}, std::move(out), {&x},
                [=](const std::vector<double>& g, GradSink& sink) {
                  if (nx < 0) return;
                  auto& d = sink.slot(nx, c * h * w);
                  for (int ch = 0; ch < c; ++ch) {
                    double* plane = d.data() + static_cast<size_t>(ch) * h * w;
                    const double* gplane = g.data() + static_cast<size_t>(ch) * oh * ow;
                    for (int y = 0; y < h; ++y) {
                      double* row = plane + static_cast<size_t>(y) * w;
                      const double* grow = gplane + static_cast<size_t>(y / factor) * ow;
                      for (int xx = 0; xx < w; ++xx) row[xx] += inv * grow[xx / factor];
                    }
                  }
                });
}

Tensor upsample_bilinear(const Tensor& x, int factor) {
  if (x.rank() != 3) {
    throw ShapeError("upsample_bilinear: expects [C,H,W], got " + shape_str(x.shape()));
  }
  if (factor < 1) throw ShapeError("upsample_bilinear: factor must be >= 1");
  const int c = x.extent(0), h = x.extent(1), w = x.extent(2);
  const int oh = h * factor, ow = w * factor;
  const auto& xv = x.values();

  // Per-axis source index/weight tables (align-corners).
  auto axis_table = [](int in, int out) {
    std::vector<int> i0(out), i1(out);
    std::vector<double> f(out);
    for (int o = 0; o < out; ++o) {
      double u = out == 1 ? 0.0 : static_cast<double>(o) * (in - 1) / (out - 1);
      int a = static_cast<int>(std::floor(u));
      if (a > in - 2) a = std::max(0, in - 2);
      i0[o] = a;
      i1[o] = std::min(a + 1, in - 1);
      f[o] = u - a;
    }
    return std::tuple(i0, i1, f);
  };
  auto [yi0, yi1, yf] = axis_table(h, oh);
  auto [xi0, xi1, xf] = axis_table(w, ow);

  std::vector<double> out(static_cast<size_t>(c) * oh * ow);
  for (int ch = 0; ch < c; ++ch) {
    const double* plane = xv.data() + static_cast<size_t>(ch) * h * w;
    double* oplane = out.data() + static_cast<size_t>(ch) * oh * ow;
    for (int y = 0; y < oh; ++y) {
      const double* r0 = plane + static_cast<size_t>(yi0[y]) * w;
      const double* r1 = plane + static_cast<size_t>(yi1[y]) * w;
      const double fy = yf[y];
      double* orow = oplane + static_cast<size_t>(y) * ow;
      for (int xx = 0; xx < ow; ++xx) {
        const double fx = xf[xx];
        const double top = r0[xi0[xx]] * (1.0 - fx) + r0[xi1[xx]] * fx;
        const double bot = r1[xi0[xx]] * (1.0 - fx) + r1[xi1[xx]] * fx;
        orow[xx] = top * (1.0 - fy) + bot * fy;
      }
    }
  }
  const int nx = x.node();
  return finish("upsample_bilinear", {c, oh, ow}, std::move(out), {&x},
                [=, yi0 = yi0, yi1 = yi1, yf = yf, xi0 = xi0, xi1 = xi1,
                 xf = xf](const std::vector<double>& g, GradSink& sink) {
                  if (nx < 0) return;
                  auto& d = sink.slot(nx, c * h * w);
                  for (int ch = 0; ch < c; ++ch) {
                    double* plane = d.data() + static_cast<size_t>(ch) * h * w;
                    const double* gplane = g.data() + static_cast<size_t>(ch) * oh * ow;
                    for (int y = 0; y < oh; ++y) {
                      const double fy = yf[y];
                      const double* grow = gplane + static_cast<size_t>(y) * ow;
                      double* r0 = plane + static_cast<size_t>(yi0[y]) * w;
                      double* r1 = plane + static_cast<size_t>(yi1[y]) * w;
                      for (int xx = 0; xx < ow; ++xx) {
                        const double fx = xf[xx];
                        const double gv = grow[xx];
                        r0[xi0[xx]] += gv * (1.0 - fx) * (1.0 - fy);
                        r0[xi1[xx]] += gv * fx * (1.0 - fy);
                        r1[xi0[xx]] += gv * (1.0 - fx) * fy;
                        r1[xi1[xx]] += gv * fx * fy;
                      }
                    }
                  }
                });
}

Tensor resample(const Tensor& x, int factor, ResampleMode mode) {
  return mode == ResampleMode::AveragePoolDown ? avg_pool(x, factor)
                                               : upsample_bilinear(x, factor);
}

// --- Reductions ----------------------------------------------------------------

Tensor sum(const Tensor& x) {
  const int n = x.count();
  const int nx = x.node();
  return finish("sum", {1}, {vsum(x.values())}, {&x},
                [=](const std::vector<double>& g, GradSink& sink) {
                  if (nx < 0) return;
                  auto& d = sink.slot(nx, n);
                  for (int i = 0; i < n; ++i) d[i] += g[0];
                });
}

Tensor mean(const Tensor& x) {
  const int n = x.count();
  const double inv = 1.0 / n;
  const int nx = x.node();
  return finish("mean", {1}, {vsum(x.values()) * inv}, {&x},
                [=](const std::vector<double>& g, GradSink& sink) {
                  if (nx < 0) return;
                  auto& d = sink.slot(nx, n);
                  const double gv = g[0] * inv;
                  for (int i = 0; i < n; ++i) d[i] += gv;
                });
}

Tensor spatial_mean(const Tensor& x) {
  if (x.rank() != 3) {
    throw ShapeError("spatial_mean: expects [C,H,W], got " + shape_str(x.shape()));
  }
  const int c = x.extent(0);
  const int hw = x.extent(1) * x.extent(2);
  const double inv = 1.0 / hw;
  const auto& xv = x.values();
  std::vector<double> out(c, 0.0);
  for (int ch = 0; ch < c; ++ch) {
    const double* plane = xv.data() + static_cast<size_t>(ch) * hw;
    double s = 0.0;
    for (int i = 0; i < hw; ++i) s += plane[i];
    out[ch] = s * inv;
  }
  const int nx = x.node();
  return finish("spatial_mean", {c}, std::move(out), {&x},
                [=](const std::vector<double>& g, GradSink& sink) {
                  if (nx < 0) return;
                  auto& d = sink.slot(nx, c * hw);
                  for (int ch = 0; ch < c; ++ch) {
                    const double gv = g[ch] * inv;
                    double* plane = d.data() + static_cast<size_t>(ch) * hw;
                    for (int i = 0; i < hw; ++i) plane[i] += gv;
                  }
                });
}

Tensor identity_grid(int h, int w) {
  std::vector<double> out(static_cast<size_t>(h) * w * 2);
  for (int y = 0; y < h; ++y) {
    const double yn = h == 1 ? 0.0 : 2.0 * y / (h - 1) - 1.0;
    for (int x = 0; x < w; ++x) {
      const double xn = w == 1 ? 0.0 : 2.0 * x / (w - 1) - 1.0;
      out[(static_cast<size_t>(y) * w + x) * 2] = xn;
      out[(static_cast<size_t>(y) * w + x) * 2 + 1] = yn;
    }
  }
  return Tensor({h, w, 2}, std::move(out));
}

}  // namespace dagankit
