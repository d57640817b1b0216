#pragma once

// Dense NCHW tensors with reverse-mode automatic differentiation.
// Define-by-run: operations executed while a Tape is alive record backward
// closures; one reverse sweep over the tape populates gradient buffers.
// All reductions use Eigen's sequential evaluation, so results are
// reproducible within one build configuration.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace rgan {

using Shape = std::vector<int>;

template <typename S>
using ArrayX = Eigen::Array<S, Eigen::Dynamic, 1>;
template <typename S>
using MatRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline long shape_numel(const Shape& s) {
  long n = 1;
  for (int d : s) {
    if (d <= 0) throw std::invalid_argument("tensor dimensions must be positive");
    n *= d;
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

template <typename S>
struct TensorNode {
  Shape shape;
  ArrayX<S> value;
  ArrayX<S> grad;  // empty until first accumulation
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.size() != value.size()) grad = ArrayX<S>::Zero(value.size());
  }
};

template <typename S>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false)
      : n_(std::make_shared<TensorNode<S>>()) {
    n_->shape = std::move(shape);
    n_->value = ArrayX<S>::Zero(shape_numel(n_->shape));
    n_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor full(Shape shape, S v) {
    Tensor t(std::move(shape));
    t.val().setConstant(v);
    return t;
  }

  static Tensor from(Shape shape, const std::vector<S>& values) {
    Tensor t(std::move(shape));
    if (static_cast<long>(values.size()) != t.size())
      throw std::invalid_argument("value count does not match shape " + shape_str(t.shape()));
    for (long i = 0; i < t.size(); ++i) t.val()[i] = values[static_cast<size_t>(i)];
    return t;
  }

  static Tensor scalar(S v) { return full({1}, v); }

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return n_->shape; }
  long size() const { return n_->value.size(); }
  ArrayX<S>& val() { return n_->value; }
  const ArrayX<S>& val() const { return n_->value; }
  S* data() { return n_->value.data(); }
  const S* data() const { return n_->value.data(); }

  bool requires_grad() const { return n_->requires_grad; }
  void set_requires_grad(bool rg) { n_->requires_grad = rg; }

  bool has_grad() const { return n_->grad.size() == n_->value.size(); }
  ArrayX<S>& grad() {
    n_->ensure_grad();
    return n_->grad;
  }
  void zero_grad() {
    if (n_->grad.size()) n_->grad.setZero();
  }

  S item() const {
    if (size() != 1) throw std::invalid_argument("item() requires a scalar tensor, got " + shape_str(shape()));
    return n_->value[0];
  }

  bool all_finite() const { return n_->value.isFinite().all(); }

  // Deep copy of values; no tape linkage, no grad.
  Tensor clone() const {
    Tensor t;
    t.n_ = std::make_shared<TensorNode<S>>();
    t.n_->shape = n_->shape;
    t.n_->value = n_->value;
    return t;
  }

  std::shared_ptr<TensorNode<S>>& node() { return n_; }
  const std::shared_ptr<TensorNode<S>>& node() const { return n_; }

 private:
  std::shared_ptr<TensorNode<S>> n_;
};

// Execution-ordered record of backward closures. Scoped: constructing a Tape
// makes it current for the thread, destruction restores the previous one.
template <typename S>
class Tape {
 public:
  Tape() : prev_(current_) { current_ = this; }
  ~Tape() { current_ = prev_; }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* current() { return current_; }

  void record(std::function<void()> fn) { ops_.push_back(std::move(fn)); }
  size_t num_ops() const { return ops_.size(); }

  // Reverse sweep; each recorded op is visited exactly once.
  void backward(Tensor<S> loss) {
    if (loss.size() != 1)
      throw std::invalid_argument("backward requires a scalar loss, got " + shape_str(loss.shape()));
    if (!loss.requires_grad())
      throw std::invalid_argument("backward: loss is not connected to the tape");
    loss.grad()[0] = S(1);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    ops_.clear();
  }

  struct Suspend {
    Suspend() : saved_(current_) { current_ = nullptr; }
    ~Suspend() { current_ = saved_; }
    Tape* saved_;
  };

 private:
  std::vector<std::function<void()>> ops_;
  Tape* prev_;
  static inline thread_local Tape* current_ = nullptr;
};

template <typename S>
using NoGrad = typename Tape<S>::Suspend;

template <typename S>
void backward(const Tensor<S>& loss) {
  if (!Tape<S>::current()) throw std::invalid_argument("backward: no active tape");
  Tape<S>::current()->backward(loss);
}

namespace detail {

template <typename S>
bool grad_needed(std::initializer_list<const Tensor<S>*> inputs) {
  if (!Tape<S>::current()) return false;
  for (const Tensor<S>* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

template <typename S>
void check_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
}

template <typename S>
void accum(const std::shared_ptr<TensorNode<S>>& n, const ArrayX<S>& g) {
  if (!n->requires_grad) return;
  n->ensure_grad();
  n->grad += g;
}

}  // namespace detail

// ---- elementwise primitives ----

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape(a, b, "add");
  Tensor<S> out(a.shape());
  out.val() = a.val() + b.val();
  if (detail::grad_needed<S>({&a, &b})) {
    out.set_requires_grad(true);
    Tape<S>::current()->record([an = a.node(), bn = b.node(), on = out.node()] {
      if (!on->grad.size()) return;
      detail::accum(an, on->grad);
      detail::accum(bn, on->grad);
    });
  }
  return out;
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape(a, b, "sub");
  Tensor<S> out(a.shape());
  out.val() = a.val() - b.val();
  if (detail::grad_needed<S>({&a, &b})) {
    out.set_requires_grad(true);
    Tape<S>::current()->record([an = a.node(), bn = b.node(), on = out.node()] {
      if (!on->grad.size()) return;
      detail::accum(an, on->grad);
      if (bn->requires_grad) {
        bn->ensure_grad();
        bn->grad -= on->grad;
      }
    });
  }
  return out;
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape(a, b, "mul");
  Tensor<S> out(a.shape());
  out.val() = a.val() * b.val();
  if (detail::grad_needed<S>({&a, &b})) {
    out.set_requires_grad(true);
    Tape<S>::current()->record([an = a.node(), bn = b.node(), on = out.node()] {
      if (!on->grad.size()) return;
      if (an->requires_grad) detail::accum(an, ArrayX<S>(on->grad * bn->value));
      if (bn->requires_grad) detail::accum(bn, ArrayX<S>(on->grad * an->value));
    });
  }
  return out;
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, S c) {
  Tensor<S> out(a.shape());
  out.val() = a.val() * c;
  if (detail::grad_needed<S>({&a})) {
    out.set_requires_grad(true);
    Tape<S>::current()->record([an = a.node(), on = out.node(), c] {
      if (!on->grad.size()) return;
      detail::accum(an, ArrayX<S>(on->grad * c));
    });
  }
  return out;
}

template <typename S>
Tensor<S> add_scalar(const Tensor<S>& a, S c) {
  Tensor<S> out(a.shape());
  out.val() = a.val() + c;
  if (detail::grad_needed<S>({&a})) {
    out.set_requires_grad(true);
    Tape<S>::current()->record([an = a.node(), on = out.node()] {
      if (!on->grad.size()) return;
      detail::accum(an, on->grad);
    });
  }
  return out;
}

template <typename S>
Tensor<S> relu(const Tensor<S>& a) {
  Tensor<S> out(a.shape());
  out.val() = a.val().max(S(0));
  if (detail::grad_needed<S>({&a})) {
    out.set_requires_grad(true);
    Tape<S>::current()->record([an = a.node(), on = out.node()] {
      if (!on->grad.size()) return;
      detail::accum(an, ArrayX<S>(on->grad * (an->value > S(0)).template cast<S>()));
    });
  }
  return out;
}

template <typename S>
Tensor<S> leaky_relu(const Tensor<S>& a, S slope = S(0.2)) {
  Tensor<S> out(a.shape());
  out.val() = (a.val() > S(0)).select(a.val(), a.val() * slope);
  if (detail::grad_needed<S>({&a})) {
    out.set_requires_grad(true);
    Tape<S>::current()->record([an = a.node(), on = out.node(), slope] {
      if (!on->grad.size()) return;
      ArrayX<S> m = (an->value > S(0)).select(ArrayX<S>::Ones(an->value.size()),
                                              ArrayX<S>::Constant(an->value.size(), slope));
      detail::accum(an, ArrayX<S>(on->grad * m));
    });
  }
  return out;
}

template <typename S>
Tensor<S> tanh(const Tensor<S>& a) {
  Tensor<S> out(a.shape());
  out.val() = a.val().tanh();
  if (detail::grad_needed<S>({&a})) {
    out.set_requires_grad(true);
    Tape<S>::current()->record([an = a.node(), on = out.node()] {
      if (!on->grad.size()) return;
      detail::accum(an, ArrayX<S>(on->grad * (S(1) - on->value.square())));
    });
  }
  return out;
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& a) {
  Tensor<S> out(a.shape());
  out.val() = S(1) / (S(1) + (-a.val()).exp());
  if (detail::grad_needed<S>({&a})) {
    out.set_requires_grad(true);
    Tape<S>::current()->record([an = a.node(), on = out.node()] {
      if (!on->grad.size()) return;
      detail::accum(an, ArrayX<S>(on->grad * on->value * (S(1) - on->value)));
    });
  }
  return out;
}

// log of the input clamped to [lo, 1]; gradient passes only inside the window.
template <typename S>
Tensor<S> log_clamped(const Tensor<S>& a, S lo = S(1e-7)) {
  Tensor<S> out(a.shape());
  out.val() = a.val().max(lo).min(S(1)).log();
  if (detail::grad_needed<S>({&a})) {
    out.set_requires_grad(true);
    Tape<S>::current()->record([an = a.node(), on = out.node(), lo] {
      if (!on->grad.size()) return;
      ArrayX<S> inside =
          ((an->value > lo) && (an->value < S(1))).template cast<S>();
      detail::accum(an, ArrayX<S>(on->grad * inside / an->value.max(lo)));
    });
  }
  return out;
}

// ---- reductions (sequential summation order) ----

template <typename S>
Tensor<S> sum(const Tensor<S>& a) {
  Tensor<S> out({1});
  out.val()[0] = a.val().sum();
  if (detail::grad_needed<S>({&a})) {
    out.set_requires_grad(true);
    Tape<S>::current()->record([an = a.node(), on = out.node()] {
      if (!on->grad.size()) return;
      detail::accum(an, ArrayX<S>(ArrayX<S>::Constant(an->value.size(), on->grad[0])));
    });
  }
  return out;
}

template <typename S>
Tensor<S> mean(const Tensor<S>& a) {
  Tensor<S> out({1});
  out.val()[0] = a.val().sum() / S(a.size());
  if (detail::grad_needed<S>({&a})) {
    out.set_requires_grad(true);
    Tape<S>::current()->record([an = a.node(), on = out.node()] {
      if (!on->grad.size()) return;
      detail::accum(an, ArrayX<S>(ArrayX<S>::Constant(an->value.size(),
                                                      on->grad[0] / S(an->value.size()))));
    });
  }
  return out;
}

// mean squared error over all elements
template <typename S>
Tensor<S> mse(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape(a, b, "mse");
  Tensor<S> out({1});
  out.val()[0] = (a.val() - b.val()).square().sum() / S(a.size());
  if (detail::grad_needed<S>({&a, &b})) {
    out.set_requires_grad(true);
    Tape<S>::current()->record([an = a.node(), bn = b.node(), on = out.node()] {
      if (!on->grad.size()) return;
      ArrayX<S> g = on->grad[0] * S(2) / S(an->value.size()) * (an->value - bn->value);
      detail::accum(an, g);
      if (bn->requires_grad) {
        bn->ensure_grad();
        bn->grad -= g;
      }
    });
  }
  return out;
}

// ---- shape primitives ----

template <typename S>
Tensor<S> concat_channels(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape().size() != 4 || b.shape().size() != 4)
    throw std::invalid_argument("concat_channels expects NCHW tensors");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa[0] != sb[0] || sa[2] != sb[2] || sa[3] != sb[3])
    throw std::invalid_argument("concat_channels: incompatible shapes " + shape_str(sa) + " vs " +
                                shape_str(sb));
  const int n = sa[0], ca = sa[1], cb = sb[1], hw = sa[2] * sa[3];
  Tensor<S> out({n, ca + cb, sa[2], sa[3]});
  for (int i = 0; i < n; ++i) {
    out.val().segment(static_cast<long>(i) * (ca + cb) * hw, static_cast<long>(ca) * hw) =
        a.val().segment(static_cast<long>(i) * ca * hw, static_cast<long>(ca) * hw);
    out.val().segment(static_cast<long>(i) * (ca + cb) * hw + static_cast<long>(ca) * hw,
                      static_cast<long>(cb) * hw) =
        b.val().segment(static_cast<long>(i) * cb * hw, static_cast<long>(cb) * hw);
  }
  if (detail::grad_needed<S>({&a, &b})) {
    out.set_requires_grad(true);
    Tape<S>::current()->record([an = a.node(), bn = b.node(), on = out.node(), n, ca, cb, hw] {
      if (!on->grad.size()) return;
      for (int i = 0; i < n; ++i) {
        if (an->requires_grad) {
          an->ensure_grad();
          an->grad.segment(static_cast<long>(i) * ca * hw, static_cast<long>(ca) * hw) +=
              on->grad.segment(static_cast<long>(i) * (ca + cb) * hw, static_cast<long>(ca) * hw);
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          bn->grad.segment(static_cast<long>(i) * cb * hw, static_cast<long>(cb) * hw) +=
              on->grad.segment(static_cast<long>(i) * (ca + cb) * hw + static_cast<long>(ca) * hw,
                               static_cast<long>(cb) * hw);
        }
      }
    });
  }
  return out;
}

enum class ResizeMode { Nearest, Bilinear };

namespace detail {

// Per-axis sample positions for half-pixel-centered resampling.
template <typename S>
void resize_axis(int in, int out, ResizeMode mode, std::vector<int>& i0, std::vector<int>& i1,
                 std::vector<S>& w1) {
  i0.resize(out);
  i1.resize(out);
  w1.resize(out);
  const S s = S(in) / S(out);
  for (int i = 0; i < out; ++i) {
    if (mode == ResizeMode::Nearest) {
      int src = static_cast<int>(std::floor((S(i) + S(0.5)) * s));
      src = std::min(std::max(src, 0), in - 1);
      i0[i] = i1[i] = src;
      w1[i] = S(0);
    } else {
      S x = (S(i) + S(0.5)) * s - S(0.5);
      x = std::min(std::max(x, S(0)), S(in - 1));
      int lo = static_cast<int>(std::floor(x));
      int hi = std::min(lo + 1, in - 1);
      i0[i] = lo;
      i1[i] = hi;
      w1[i] = x - S(lo);
    }
  }
}

}  // namespace detail

template <typename S>
Tensor<S> resize(const Tensor<S>& a, int out_h, int out_w, ResizeMode mode) {
  if (a.shape().size() != 4) throw std::invalid_argument("resize expects NCHW tensor");
  if (out_h <= 0 || out_w <= 0) throw std::invalid_argument("resize: output size must be positive");
  const int n = a.shape()[0], c = a.shape()[1], h = a.shape()[2], w = a.shape()[3];
  std::vector<int> y0, y1, x0, x1;
  std::vector<S> wy, wx;
  detail::resize_axis<S>(h, out_h, mode, y0, y1, wy);
  detail::resize_axis<S>(w, out_w, mode, x0, x1, wx);
  Tensor<S> out({n, c, out_h, out_w});
  for (int nc = 0; nc < n * c; ++nc) {
    const S* src = a.data() + static_cast<long>(nc) * h * w;
    S* dst = out.data() + static_cast<long>(nc) * out_h * out_w;
    for (int oy = 0; oy < out_h; ++oy)
      for (int ox = 0; ox < out_w; ++ox) {
        const S a00 = src[y0[oy] * w + x0[ox]], a01 = src[y0[oy] * w + x1[ox]];
        const S a10 = src[y1[oy] * w + x0[ox]], a11 = src[y1[oy] * w + x1[ox]];
        const S top = a00 + wx[ox] * (a01 - a00);
        const S bot = a10 + wx[ox] * (a11 - a10);
        dst[oy * out_w + ox] = top + wy[oy] * (bot - top);
      }
  }
  if (detail::grad_needed<S>({&a})) {
    out.set_requires_grad(true);
    Tape<S>::current()->record(
        [an = a.node(), on = out.node(), n, c, h, w, out_h, out_w, y0, y1, x0, x1, wy, wx] {
          if (!on->grad.size()) return;
          an->ensure_grad();
          for (int nc = 0; nc < n * c; ++nc) {
            S* gin = an->grad.data() + static_cast<long>(nc) * h * w;
            const S* gout = on->grad.data() + static_cast<long>(nc) * out_h * out_w;
            for (int oy = 0; oy < out_h; ++oy)
              for (int ox = 0; ox < out_w; ++ox) {
                const S g = gout[oy * out_w + ox];
                const S w11 = wy[oy] * wx[ox];
                const S w10 = wy[oy] * (S(1) - wx[ox]);
                const S w01 = (S(1) - wy[oy]) * wx[ox];
                const S w00 = (S(1) - wy[oy]) * (S(1) - wx[ox]);
                gin[y0[oy] * w + x0[ox]] += w00 * g;
                gin[y0[oy] * w + x1[ox]] += w01 * g;
                gin[y1[oy] * w + x0[ox]] += w10 * g;
                gin[y1[oy] * w + x1[ox]] += w11 * g;
              }
          }
        });
  }
  return out;
}

// Per-sample per-channel normalization with learnable affine.
// gain, bias: shape [C]. Variance epsilon 1e-5.
template <typename S>
Tensor<S> instance_norm(const Tensor<S>& x, const Tensor<S>& gain, const Tensor<S>& bias,
                        S eps = S(1e-5)) {
  if (x.shape().size() != 4) throw std::invalid_argument("instance_norm expects NCHW tensor");
  const int n = x.shape()[0], c = x.shape()[1], hw = x.shape()[2] * x.shape()[3];
  if (gain.size() != c || bias.size() != c)
    throw std::invalid_argument("instance_norm: affine parameters must have shape [C]");
  Tensor<S> out(x.shape());
  ArrayX<S> mu(n * c), inv_std(n * c);
  for (int g = 0; g < n * c; ++g) {
    auto seg = x.val().segment(static_cast<long>(g) * hw, hw);
    const S m = seg.sum() / S(hw);
    const S var = (seg - m).square().sum() / S(hw);
    mu[g] = m;
    inv_std[g] = S(1) / std::sqrt(var + eps);
    const S gm = gain.val()[g % c], bm = bias.val()[g % c];
    out.val().segment(static_cast<long>(g) * hw, hw) = (seg - m) * inv_std[g] * gm + bm;
  }
  if (detail::grad_needed<S>({&x, &gain, &bias})) {
    out.set_requires_grad(true);
    Tape<S>::current()->record([xn = x.node(), gn = gain.node(), bn = bias.node(),
                                on = out.node(), n, c, hw, mu, inv_std] {
      if (!on->grad.size()) return;
      for (int g = 0; g < n * c; ++g) {
        auto xseg = xn->value.segment(static_cast<long>(g) * hw, hw);
        auto gseg = on->grad.segment(static_cast<long>(g) * hw, hw);
        ArrayX<S> xhat = (xseg - mu[g]) * inv_std[g];
        const S sum_g = gseg.sum();
        const S sum_gx = (gseg * xhat).sum();
        if (gn->requires_grad) {
          gn->ensure_grad();
          gn->grad[g % c] += sum_gx;
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          bn->grad[g % c] += sum_g;
        }
        if (xn->requires_grad) {
          xn->ensure_grad();
          const S gm = gn->value[g % c];
          xn->grad.segment(static_cast<long>(g) * hw, hw) +=
              gm * inv_std[g] * (gseg - sum_g / S(hw) - xhat * (sum_gx / S(hw)));
        }
      }
    });
  }
  return out;
}

// Value copy severed from the tape.
template <typename S>
Tensor<S> detach(const Tensor<S>& a) {
  return a.clone();
}

}  // namespace rgan
