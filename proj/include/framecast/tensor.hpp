#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "framecast/errors.hpp"

namespace framecast {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a backward pass touches it
  bool requires_grad = false;
};

/// Dense row-major tensor. Copying a TensorT copies the handle, not the
/// buffer; clone() deep-copies. Gradient buffers live next to the data and
/// are filled by GradTape::backward.
template <typename T>
class TensorT {
 public:
  TensorT() = default;

  explicit TensorT(Shape shape, bool requires_grad = false)
      : impl(std::make_shared<TensorImpl<T>>()) {
    validate_shape(shape);
    impl->shape = std::move(shape);
    impl->data.assign(static_cast<size_t>(shape_numel(impl->shape)), T(0));
    impl->requires_grad = requires_grad;
  }

  static TensorT zeros(Shape shape) { return TensorT(std::move(shape)); }

  static TensorT full(Shape shape, T value) {
    TensorT t(std::move(shape));
    for (auto& x : t.impl->data) x = value;
    return t;
  }

  static TensorT ones(Shape shape) { return full(std::move(shape), T(1)); }

  static TensorT scalar(T value) { return full({1}, value); }

  static TensorT from_data(Shape shape, std::vector<T> data) {
    validate_shape(shape);
    if (shape_numel(shape) != static_cast<int64_t>(data.size()))
      throw ShapeError("from_data: " + shape_str(shape) + " does not hold " +
                       std::to_string(data.size()) + " elements");
    TensorT t;
    t.impl = std::make_shared<TensorImpl<T>>();
    t.impl->shape = std::move(shape);
    t.impl->data = std::move(data);
    return t;
  }

  bool defined() const { return impl != nullptr; }
  const Shape& shape() const { return impl->shape; }
  int rank() const { return static_cast<int>(impl->shape.size()); }
  int64_t numel() const { return static_cast<int64_t>(impl->data.size()); }

  int64_t dim(int i) const {
    const int r = rank();
    if (i < 0) i += r;
    if (i < 0 || i >= r) throw ShapeError("dim index out of range");
    return impl->shape[static_cast<size_t>(i)];
  }

  std::vector<T>& data() { return impl->data; }
  const std::vector<T>& data() const { return impl->data; }

  bool requires_grad() const { return impl->requires_grad; }
  void set_requires_grad(bool v) { impl->requires_grad = v; }

  bool has_grad() const { return !impl->grad.empty(); }

  /// Gradient buffer, allocated (zeroed) on first access.
  std::vector<T>& grad() {
    if (impl->grad.empty()) impl->grad.assign(impl->data.size(), T(0));
    return impl->grad;
  }
  const std::vector<T>& grad() const { return impl->grad; }

  void zero_grad() {
    if (!impl->grad.empty()) std::fill(impl->grad.begin(), impl->grad.end(), T(0));
  }

  /// Value of a single-element tensor.
  T value() const {
    if (numel() != 1) throw ShapeError("value(): tensor has " + std::to_string(numel()) + " elements");
    return impl->data[0];
  }

  template <typename... Ix>
  T& at(Ix... ix) {
    return impl->data[flat_index(ix...)];
  }

  template <typename... Ix>
  const T& at(Ix... ix) const {
    return impl->data[flat_index(ix...)];
  }

  TensorT clone() const {
    TensorT out = from_data(impl->shape, impl->data);
    out.impl->requires_grad = impl->requires_grad;
    return out;
  }

  template <typename U>
  TensorT<U> cast() const {
    std::vector<U> d(impl->data.size());
    for (size_t i = 0; i < d.size(); ++i) d[i] = static_cast<U>(impl->data[i]);
    auto out = TensorT<U>::from_data(impl->shape, std::move(d));
    out.impl->requires_grad = impl->requires_grad;
    return out;
  }

  bool all_finite() const {
    for (T x : impl->data)
      if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  }

  std::shared_ptr<TensorImpl<T>> impl;

 private:
  static void validate_shape(const Shape& s) {
    if (s.empty()) throw ShapeError("tensor rank must be >= 1");
    for (int64_t d : s)
      if (d <= 0) throw ShapeError("tensor dims must be positive, got " + shape_str(s));
  }

  template <typename... Ix>
  size_t flat_index(Ix... ix) const {
    const int64_t idx[] = {static_cast<int64_t>(ix)...};
    const size_t r = sizeof...(ix);
    if (r != impl->shape.size()) throw ShapeError("at(): index rank mismatch");
    int64_t flat = 0;
    for (size_t i = 0; i < r; ++i) flat = flat * impl->shape[i] + idx[i];
    return static_cast<size_t>(flat);
  }
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

template <typename T>
inline void ensure_grad(TensorImpl<T>& impl) {
  if (impl.grad.empty()) impl.grad.assign(impl.data.size(), T(0));
}

/// Ordered record of executed operations. Ops register themselves on the
/// thread's active tape (see Scope); backward replays the record once, in
/// reverse execution order, accumulating gradients additively.
template <typename T>
class GradTape {
 public:
  GradTape() = default;
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  /// Makes a tape the active one for the current thread while in scope.
  class Scope {
   public:
    explicit Scope(GradTape& tape) : prev_(current_) { current_ = &tape; }
    ~Scope() { current_ = prev_; }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    GradTape* prev_;
  };

  static GradTape* current() { return current_; }

  void record(const char* op, std::shared_ptr<TensorImpl<T>> out, std::function<void()> backward) {
    entries_.push_back(Entry{op, std::move(out), std::move(backward)});
  }

  /// Seeds d(loss)/d(loss) = 1 and replays the record backwards. A second
  /// call without reset() is an error, as is a loss this tape never produced.
  void backward(const TensorT<T>& loss) {
    if (used_) throw ValidationError("GradTape::backward called twice without reset");
    if (!loss.defined() || loss.numel() != 1)
      throw ShapeError("backward: loss must be a scalar tensor");
    bool reachable = false;
    for (const auto& e : entries_)
      if (e.out.get() == loss.impl.get()) reachable = true;
    if (!reachable) throw ValidationError("backward: loss is not a product of this tape");
    used_ = true;
    ensure_grad(*loss.impl);
    loss.impl->grad[0] = T(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->fn();
  }

  size_t size() const { return entries_.size(); }
  bool used() const { return used_; }

  void reset() {
    entries_.clear();
    used_ = false;
  }

 private:
  struct Entry {
    const char* op;
    std::shared_ptr<TensorImpl<T>> out;
    std::function<void()> fn;
  };
  std::vector<Entry> entries_;
  bool used_ = false;
  static thread_local GradTape* current_;
};

template <typename T>
thread_local GradTape<T>* GradTape<T>::current_ = nullptr;

namespace detail {

template <typename T, typename... Ts>
bool wants_tape(const TensorT<T>& first, const Ts&... rest) {
  if (GradTape<T>::current() == nullptr) return false;
  bool any = first.requires_grad();
  ((any = any || rest.requires_grad()), ...);
  return any;
}

// c[r,n] += sum_k a[r,k] * b[k,n]
template <typename T>
void matmul_acc(const T* a, const T* b, T* c, int64_t rows, int64_t k_dim, int64_t cols) {
  for (int64_t r = 0; r < rows; ++r) {
    const T* arow = a + r * k_dim;
    T* crow = c + r * cols;
    for (int64_t k = 0; k < k_dim; ++k) {
      const T av = arow[k];
      if (av == T(0)) continue;
      const T* brow = b + k * cols;
      for (int64_t n = 0; n < cols; ++n) crow[n] += av * brow[n];
    }
  }
}

// c[r,f] += sum_g a[r,g] * b[f,g]   (B transposed)
template <typename T>
void matmul_abt_acc(const T* a, const T* b, T* c, int64_t rows, int64_t g_dim, int64_t f_dim) {
  for (int64_t r = 0; r < rows; ++r) {
    const T* arow = a + r * g_dim;
    T* crow = c + r * f_dim;
    for (int64_t f = 0; f < f_dim; ++f) {
      const T* brow = b + f * g_dim;
      T acc = T(0);
      for (int64_t g = 0; g < g_dim; ++g) acc += arow[g] * brow[g];
      crow[f] += acc;
    }
  }
}

// c[f,g] += sum_r a[r,f] * b[r,g]   (A transposed)
template <typename T>
void matmul_atb_acc(const T* a, const T* b, T* c, int64_t rows, int64_t f_dim, int64_t g_dim) {
  for (int64_t r = 0; r < rows; ++r) {
    const T* arow = a + r * f_dim;
    const T* brow = b + r * g_dim;
    for (int64_t f = 0; f < f_dim; ++f) {
      const T av = arow[f];
      if (av == T(0)) continue;
      T* crow = c + f * g_dim;
      for (int64_t g = 0; g < g_dim; ++g) crow[g] += av * brow[g];
    }
  }
}

template <typename T>
T stable_softplus(T x) {
  const T ax = x < T(0) ? -x : x;
  T base = x > T(0) ? x : T(0);
  return base + std::log1p(std::exp(-ax));
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
void check_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
  detail::check_same_shape(a, b, "add");
  TensorT<T> out(a.shape());
  const size_t n = a.data().size();
  for (size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
  if (detail::wants_tape(a, b)) {
    out.set_requires_grad(true);
    auto ai = a.impl, bi = b.impl, oi = out.impl;
    GradTape<T>::current()->record("add", oi, [ai, bi, oi] {
      if (oi->grad.empty()) return;
      if (ai->requires_grad) {
        ensure_grad(*ai);
        for (size_t i = 0; i < oi->grad.size(); ++i) ai->grad[i] += oi->grad[i];
      }
      if (bi->requires_grad) {
        ensure_grad(*bi);
        for (size_t i = 0; i < oi->grad.size(); ++i) bi->grad[i] += oi->grad[i];
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> subtract(const TensorT<T>& a, const TensorT<T>& b) {
  detail::check_same_shape(a, b, "subtract");
  TensorT<T> out(a.shape());
  const size_t n = a.data().size();
  for (size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] - b.data()[i];
  if (detail::wants_tape(a, b)) {
    out.set_requires_grad(true);
    auto ai = a.impl, bi = b.impl, oi = out.impl;
    GradTape<T>::current()->record("subtract", oi, [ai, bi, oi] {
      if (oi->grad.empty()) return;
      if (ai->requires_grad) {
        ensure_grad(*ai);
        for (size_t i = 0; i < oi->grad.size(); ++i) ai->grad[i] += oi->grad[i];
      }
      if (bi->requires_grad) {
        ensure_grad(*bi);
        for (size_t i = 0; i < oi->grad.size(); ++i) bi->grad[i] -= oi->grad[i];
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> scale(const TensorT<T>& a, T s) {
  TensorT<T> out(a.shape());
  const size_t n = a.data().size();
  for (size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * s;
  if (detail::wants_tape(a)) {
    out.set_requires_grad(true);
    auto ai = a.impl, oi = out.impl;
    GradTape<T>::current()->record("scale", oi, [ai, oi, s] {
      if (oi->grad.empty() || !ai->requires_grad) return;
      ensure_grad(*ai);
      for (size_t i = 0; i < oi->grad.size(); ++i) ai->grad[i] += oi->grad[i] * s;
    });
  }
  return out;
}

/// Elementwise product with product-rule gradients.
template <typename T>
TensorT<T> hadamard(const TensorT<T>& a, const TensorT<T>& b) {
  detail::check_same_shape(a, b, "hadamard");
  TensorT<T> out(a.shape());
  const size_t n = a.data().size();
  for (size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
  if (detail::wants_tape(a, b)) {
    out.set_requires_grad(true);
    auto ai = a.impl, bi = b.impl, oi = out.impl;
    GradTape<T>::current()->record("hadamard", oi, [ai, bi, oi] {
      if (oi->grad.empty()) return;
      if (ai->requires_grad) {
        ensure_grad(*ai);
        for (size_t i = 0; i < oi->grad.size(); ++i) ai->grad[i] += oi->grad[i] * bi->data[i];
      }
      if (bi->requires_grad) {
        ensure_grad(*bi);
        for (size_t i = 0; i < oi->grad.size(); ++i) bi->grad[i] += oi->grad[i] * ai->data[i];
      }
    });
  }
  return out;
}

/// |x| with subgradient 0 at x == 0.
template <typename T>
TensorT<T> absolute(const TensorT<T>& a) {
  TensorT<T> out(a.shape());
  const size_t n = a.data().size();
  for (size_t i = 0; i < n; ++i) out.data()[i] = std::abs(a.data()[i]);
  if (detail::wants_tape(a)) {
    out.set_requires_grad(true);
    auto ai = a.impl, oi = out.impl;
    GradTape<T>::current()->record("absolute", oi, [ai, oi] {
      if (oi->grad.empty() || !ai->requires_grad) return;
      ensure_grad(*ai);
      for (size_t i = 0; i < oi->grad.size(); ++i) {
        const T x = ai->data[i];
        const T sign = x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0));
        ai->grad[i] += oi->grad[i] * sign;
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> square(const TensorT<T>& a) {
  TensorT<T> out(a.shape());
  const size_t n = a.data().size();
  for (size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * a.data()[i];
  if (detail::wants_tape(a)) {
    out.set_requires_grad(true);
    auto ai = a.impl, oi = out.impl;
    GradTape<T>::current()->record("square", oi, [ai, oi] {
      if (oi->grad.empty() || !ai->requires_grad) return;
      ensure_grad(*ai);
      for (size_t i = 0; i < oi->grad.size(); ++i)
        ai->grad[i] += oi->grad[i] * T(2) * ai->data[i];
    });
  }
  return out;
}

/// x * tanh(softplus(x)), with the softplus evaluated in a form that stays
/// finite for large |x|.
template <typename T>
TensorT<T> mish(const TensorT<T>& a) {
  TensorT<T> out(a.shape());
  const size_t n = a.data().size();
  for (size_t i = 0; i < n; ++i) {
    const T x = a.data()[i];
    out.data()[i] = x * std::tanh(detail::stable_softplus(x));
  }
  if (detail::wants_tape(a)) {
    out.set_requires_grad(true);
    auto ai = a.impl, oi = out.impl;
    GradTape<T>::current()->record("mish", oi, [ai, oi] {
      if (oi->grad.empty() || !ai->requires_grad) return;
      ensure_grad(*ai);
      for (size_t i = 0; i < oi->grad.size(); ++i) {
        const T x = ai->data[i];
        const T th = std::tanh(detail::stable_softplus(x));
        const T sig = detail::stable_sigmoid(x);
        ai->grad[i] += oi->grad[i] * (th + x * (T(1) - th * th) * sig);
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> sigmoid(const TensorT<T>& a) {
  TensorT<T> out(a.shape());
  const size_t n = a.data().size();
  for (size_t i = 0; i < n; ++i) out.data()[i] = detail::stable_sigmoid(a.data()[i]);
  if (detail::wants_tape(a)) {
    out.set_requires_grad(true);
    auto ai = a.impl, oi = out.impl;
    GradTape<T>::current()->record("sigmoid", oi, [ai, oi] {
      if (oi->grad.empty() || !ai->requires_grad) return;
      ensure_grad(*ai);
      for (size_t i = 0; i < oi->grad.size(); ++i) {
        const T s = oi->data[i];
        ai->grad[i] += oi->grad[i] * s * (T(1) - s);
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

/// out[..., g] = sum_f u[..., f] * w[f, g] (+ bias[g]). Leading axes of u are
/// treated as a flat batch of rows.
template <typename T>
TensorT<T> linear(const TensorT<T>& u, const TensorT<T>& w, const TensorT<T>* bias = nullptr) {
  if (w.rank() != 2) throw ShapeError("linear: weight must be rank 2");
  const int64_t f_dim = u.dim(-1);
  if (f_dim != w.dim(0))
    throw ShapeError("linear: inner dims disagree, " + shape_str(u.shape()) + " x " +
                     shape_str(w.shape()));
  const int64_t g_dim = w.dim(1);
  if (bias && (bias->rank() != 1 || bias->dim(0) != g_dim))
    throw ShapeError("linear: bias shape mismatch");

  Shape out_shape = u.shape();
  out_shape.back() = g_dim;
  TensorT<T> out(out_shape);
  const int64_t rows = u.numel() / f_dim;
  detail::matmul_acc(u.data().data(), w.data().data(), out.data().data(), rows, f_dim, g_dim);
  if (bias) {
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t g = 0; g < g_dim; ++g) out.data()[static_cast<size_t>(r * g_dim + g)] += bias->data()[static_cast<size_t>(g)];
  }

  const bool taped = bias ? detail::wants_tape(u, w, *bias) : detail::wants_tape(u, w);
  if (taped) {
    out.set_requires_grad(true);
    auto ui = u.impl, wi = w.impl, oi = out.impl;
    auto bi = bias ? bias->impl : nullptr;
    GradTape<T>::current()->record("linear", oi, [ui, wi, bi, oi, rows, f_dim, g_dim] {
      if (oi->grad.empty()) return;
      if (ui->requires_grad) {
        ensure_grad(*ui);
        detail::matmul_abt_acc(oi->grad.data(), wi->data.data(), ui->grad.data(), rows, g_dim, f_dim);
      }
      if (wi->requires_grad) {
        ensure_grad(*wi);
        detail::matmul_atb_acc(ui->data.data(), oi->grad.data(), wi->grad.data(), rows, f_dim, g_dim);
      }
      if (bi && bi->requires_grad) {
        ensure_grad(*bi);
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t g = 0; g < g_dim; ++g) bi->grad[static_cast<size_t>(g)] += oi->grad[static_cast<size_t>(r * g_dim + g)];
      }
    });
  }
  return out;
}

/// Normalizes the last axis to zero mean and unit (biased) variance, then
/// applies per-feature gain and offset.
template <typename T>
TensorT<T> layer_norm(const TensorT<T>& u, const TensorT<T>& gain, const TensorT<T>& offset,
                      T eps = T(1e-5)) {
  const int64_t f_dim = u.dim(-1);
  if (gain.rank() != 1 || gain.dim(0) != f_dim || offset.rank() != 1 || offset.dim(0) != f_dim)
    throw ShapeError("layer_norm: gain/offset must match the last axis");
  if (eps <= T(0)) throw ValidationError("layer_norm: eps must be positive");

  TensorT<T> out(u.shape());
  const int64_t rows = u.numel() / f_dim;
  // Normalized activations are stashed for the backward rule.
  auto xhat = std::make_shared<std::vector<T>>(static_cast<size_t>(u.numel()));
  auto inv_sigma = std::make_shared<std::vector<T>>(static_cast<size_t>(rows));

  for (int64_t r = 0; r < rows; ++r) {
    const T* row = u.data().data() + r * f_dim;
    T mean = T(0);
    for (int64_t f = 0; f < f_dim; ++f) mean += row[f];
    mean /= static_cast<T>(f_dim);
    T var = T(0);
    for (int64_t f = 0; f < f_dim; ++f) {
      const T d = row[f] - mean;
      var += d * d;
    }
    var /= static_cast<T>(f_dim);
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_sigma)[static_cast<size_t>(r)] = is;
    for (int64_t f = 0; f < f_dim; ++f) {
      const T xh = (row[f] - mean) * is;
      (*xhat)[static_cast<size_t>(r * f_dim + f)] = xh;
      out.data()[static_cast<size_t>(r * f_dim + f)] = xh * gain.data()[static_cast<size_t>(f)] + offset.data()[static_cast<size_t>(f)];
    }
  }

  if (detail::wants_tape(u, gain, offset)) {
    out.set_requires_grad(true);
    auto ui = u.impl, gi = gain.impl, bi = offset.impl, oi = out.impl;
    GradTape<T>::current()->record("layer_norm", oi, [ui, gi, bi, oi, xhat, inv_sigma, rows, f_dim] {
      if (oi->grad.empty()) return;
      for (int64_t r = 0; r < rows; ++r) {
        const size_t base = static_cast<size_t>(r * f_dim);
        const T* g_out = oi->grad.data() + base;
        const T* xh = xhat->data() + base;
        if (ui->requires_grad) {
          ensure_grad(*ui);
          // ghat = g * gain; dx = (ghat - mean(ghat) - xhat*mean(ghat*xhat)) / sigma
          T mean_gh = T(0), mean_ghx = T(0);
          for (int64_t f = 0; f < f_dim; ++f) {
            const T gh = g_out[f] * gi->data[static_cast<size_t>(f)];
            mean_gh += gh;
            mean_ghx += gh * xh[f];
          }
          mean_gh /= static_cast<T>(f_dim);
          mean_ghx /= static_cast<T>(f_dim);
          const T is = (*inv_sigma)[static_cast<size_t>(r)];
          for (int64_t f = 0; f < f_dim; ++f) {
            const T gh = g_out[f] * gi->data[static_cast<size_t>(f)];
            ui->grad[base + static_cast<size_t>(f)] += (gh - mean_gh - xh[f] * mean_ghx) * is;
          }
        }
        if (gi->requires_grad) {
          ensure_grad(*gi);
          for (int64_t f = 0; f < f_dim; ++f) gi->grad[static_cast<size_t>(f)] += g_out[f] * xh[f];
        }
        if (bi->requires_grad) {
          ensure_grad(*bi);
          for (int64_t f = 0; f < f_dim; ++f) bi->grad[static_cast<size_t>(f)] += g_out[f];
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sequence ops
// ---------------------------------------------------------------------------

/// Causal one-step shift along the middle axis of (B, T, F): row t receives
/// row t-1, row 0 receives zeros.
template <typename T>
TensorT<T> time_shift(const TensorT<T>& e) {
  if (e.rank() != 3) throw ShapeError("time_shift: expected (B, T, F)");
  const int64_t b_dim = e.dim(0), t_dim = e.dim(1), f_dim = e.dim(2);
  TensorT<T> out(e.shape());
  for (int64_t b = 0; b < b_dim; ++b)
    for (int64_t t = 1; t < t_dim; ++t) {
      const size_t src = static_cast<size_t>((b * t_dim + (t - 1)) * f_dim);
      const size_t dst = static_cast<size_t>((b * t_dim + t) * f_dim);
      std::copy_n(e.data().data() + src, static_cast<size_t>(f_dim), out.data().data() + dst);
    }
  if (detail::wants_tape(e)) {
    out.set_requires_grad(true);
    auto ei = e.impl, oi = out.impl;
    GradTape<T>::current()->record("time_shift", oi, [ei, oi, b_dim, t_dim, f_dim] {
      if (oi->grad.empty() || !ei->requires_grad) return;
      ensure_grad(*ei);
      for (int64_t b = 0; b < b_dim; ++b)
        for (int64_t t = 1; t < t_dim; ++t) {
          const size_t src = static_cast<size_t>((b * t_dim + t) * f_dim);
          const size_t dst = static_cast<size_t>((b * t_dim + (t - 1)) * f_dim);
          for (int64_t f = 0; f < f_dim; ++f) ei->grad[dst + static_cast<size_t>(f)] += oi->grad[src + static_cast<size_t>(f)];
        }
    });
  }
  return out;
}

/// (B, T, F) -> (B, F, T). Pure element move, bitwise involution.
template <typename T>
TensorT<T> transpose_axes(const TensorT<T>& e) {
  if (e.rank() != 3) throw ShapeError("transpose_axes: expected rank-3 input");
  const int64_t b_dim = e.dim(0), t_dim = e.dim(1), f_dim = e.dim(2);
  TensorT<T> out({b_dim, f_dim, t_dim});
  for (int64_t b = 0; b < b_dim; ++b)
    for (int64_t t = 0; t < t_dim; ++t)
      for (int64_t f = 0; f < f_dim; ++f)
        out.data()[static_cast<size_t>((b * f_dim + f) * t_dim + t)] =
            e.data()[static_cast<size_t>((b * t_dim + t) * f_dim + f)];
  if (detail::wants_tape(e)) {
    out.set_requires_grad(true);
    auto ei = e.impl, oi = out.impl;
    GradTape<T>::current()->record("transpose_axes", oi, [ei, oi, b_dim, t_dim, f_dim] {
      if (oi->grad.empty() || !ei->requires_grad) return;
      ensure_grad(*ei);
      for (int64_t b = 0; b < b_dim; ++b)
        for (int64_t t = 0; t < t_dim; ++t)
          for (int64_t f = 0; f < f_dim; ++f)
            ei->grad[static_cast<size_t>((b * t_dim + t) * f_dim + f)] +=
                oi->grad[static_cast<size_t>((b * f_dim + f) * t_dim + t)];
    });
  }
  return out;
}

/// Same data, new shape. Gradient passes through untouched.
template <typename T>
TensorT<T> reshape(const TensorT<T>& x, Shape new_shape) {
  if (shape_numel(new_shape) != x.numel())
    throw ShapeError("reshape: element count mismatch " + shape_str(x.shape()) + " -> " +
                     shape_str(new_shape));
  TensorT<T> out = TensorT<T>::from_data(std::move(new_shape), x.data());
  if (detail::wants_tape(x)) {
    out.set_requires_grad(true);
    auto xi = x.impl, oi = out.impl;
    GradTape<T>::current()->record("reshape", oi, [xi, oi] {
      if (oi->grad.empty() || !xi->requires_grad) return;
      ensure_grad(*xi);
      for (size_t i = 0; i < oi->grad.size(); ++i) xi->grad[i] += oi->grad[i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Convolution ops
// ---------------------------------------------------------------------------

/// 3x3 cross-correlation with padding 1 and stride 1 or 2.
/// x: (B, Cin, H, W), k: (Cout, Cin, 3, 3) -> (B, Cout, H', W').
template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& k, int stride) {
  if (x.rank() != 4) throw ShapeError("conv2d: input must be (B, C, H, W)");
  if (k.rank() != 4 || k.dim(2) != 3 || k.dim(3) != 3)
    throw ShapeError("conv2d: kernel must be (Cout, Cin, 3, 3)");
  if (stride != 1 && stride != 2) throw ValidationError("conv2d: stride must be 1 or 2");
  const int64_t b_dim = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h < 3 || w < 3) throw ShapeError("conv2d: spatial dims must be >= 3");
  if (k.dim(1) != cin)
    throw ShapeError("conv2d: channel mismatch, input " + std::to_string(cin) + " vs kernel " +
                     std::to_string(k.dim(1)));
  const int64_t cout = k.dim(0);
  const int64_t ho = (h + 2 - 3) / stride + 1;
  const int64_t wo = (w + 2 - 3) / stride + 1;

  TensorT<T> out({b_dim, cout, ho, wo});
  const T* xd = x.data().data();
  const T* kd = k.data().data();
  T* od = out.data().data();
  for (int64_t b = 0; b < b_dim; ++b)
    for (int64_t co = 0; co < cout; ++co)
      for (int64_t ci = 0; ci < cin; ++ci) {
        const T* xplane = xd + (b * cin + ci) * h * w;
        const T* kk = kd + (co * cin + ci) * 9;
        T* oplane = od + (b * cout + co) * ho * wo;
        for (int64_t oy = 0; oy < ho; ++oy)
          for (int64_t ox = 0; ox < wo; ++ox) {
            T acc = T(0);
            const int64_t iy0 = oy * stride - 1, ix0 = ox * stride - 1;
            for (int64_t ky = 0; ky < 3; ++ky) {
              const int64_t iy = iy0 + ky;
              if (iy < 0 || iy >= h) continue;
              for (int64_t kx = 0; kx < 3; ++kx) {
                const int64_t ix = ix0 + kx;
                if (ix < 0 || ix >= w) continue;
                acc += xplane[iy * w + ix] * kk[ky * 3 + kx];
              }
            }
            oplane[oy * wo + ox] += acc;
          }
      }

  if (detail::wants_tape(x, k)) {
    out.set_requires_grad(true);
    auto xi = x.impl, ki = k.impl, oi = out.impl;
    GradTape<T>::current()->record("conv2d", oi, [xi, ki, oi, b_dim, cin, cout, h, w, ho, wo, stride] {
      if (oi->grad.empty()) return;
      const bool gx = xi->requires_grad, gk = ki->requires_grad;
      if (gx) ensure_grad(*xi);
      if (gk) ensure_grad(*ki);
      for (int64_t b = 0; b < b_dim; ++b)
        for (int64_t co = 0; co < cout; ++co)
          for (int64_t ci = 0; ci < cin; ++ci) {
            const T* xplane = xi->data.data() + (b * cin + ci) * h * w;
            T* gxplane = gx ? xi->grad.data() + (b * cin + ci) * h * w : nullptr;
            const T* kk = ki->data.data() + (co * cin + ci) * 9;
            T* gkk = gk ? ki->grad.data() + (co * cin + ci) * 9 : nullptr;
            const T* goplane = oi->grad.data() + (b * cout + co) * ho * wo;
            for (int64_t oy = 0; oy < ho; ++oy)
              for (int64_t ox = 0; ox < wo; ++ox) {
                const T go = goplane[oy * wo + ox];
                if (go == T(0)) continue;
                const int64_t iy0 = oy * stride - 1, ix0 = ox * stride - 1;
                for (int64_t ky = 0; ky < 3; ++ky) {
                  const int64_t iy = iy0 + ky;
                  if (iy < 0 || iy >= h) continue;
                  for (int64_t kx = 0; kx < 3; ++kx) {
                    const int64_t ix = ix0 + kx;
                    if (ix < 0 || ix >= w) continue;
                    if (gx) gxplane[iy * w + ix] += go * kk[ky * 3 + kx];
                    if (gk) gkk[ky * 3 + kx] += go * xplane[iy * w + ix];
                  }
                }
              }
          }
    });
  }
  return out;
}

/// x[b,c,:,:] + bias[c].
template <typename T>
TensorT<T> channel_bias(const TensorT<T>& x, const TensorT<T>& bias) {
  if (x.rank() != 4) throw ShapeError("channel_bias: input must be (B, C, H, W)");
  if (bias.rank() != 1 || bias.dim(0) != x.dim(1))
    throw ShapeError("channel_bias: bias must match channel count");
  const int64_t b_dim = x.dim(0), c_dim = x.dim(1), hw = x.dim(2) * x.dim(3);
  TensorT<T> out(x.shape());
  for (int64_t b = 0; b < b_dim; ++b)
    for (int64_t c = 0; c < c_dim; ++c) {
      const T bv = bias.data()[static_cast<size_t>(c)];
      const size_t base = static_cast<size_t>((b * c_dim + c) * hw);
      for (int64_t i = 0; i < hw; ++i) out.data()[base + static_cast<size_t>(i)] = x.data()[base + static_cast<size_t>(i)] + bv;
    }
  if (detail::wants_tape(x, bias)) {
    out.set_requires_grad(true);
    auto xi = x.impl, bi = bias.impl, oi = out.impl;
    GradTape<T>::current()->record("channel_bias", oi, [xi, bi, oi, b_dim, c_dim, hw] {
      if (oi->grad.empty()) return;
      if (xi->requires_grad) {
        ensure_grad(*xi);
        for (size_t i = 0; i < oi->grad.size(); ++i) xi->grad[i] += oi->grad[i];
      }
      if (bi->requires_grad) {
        ensure_grad(*bi);
        for (int64_t b = 0; b < b_dim; ++b)
          for (int64_t c = 0; c < c_dim; ++c) {
            const size_t base = static_cast<size_t>((b * c_dim + c) * hw);
            T acc = T(0);
            for (int64_t i = 0; i < hw; ++i) acc += oi->grad[base + static_cast<size_t>(i)];
            bi->grad[static_cast<size_t>(c)] += acc;
          }
      }
    });
  }
  return out;
}

/// Each pixel becomes a 2x2 block; the gradient sums the block back.
template <typename T>
TensorT<T> nearest_upsample2x(const TensorT<T>& x) {
  if (x.rank() != 4) throw ShapeError("nearest_upsample2x: input must be (B, C, H, W)");
  const int64_t bc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  TensorT<T> out({x.dim(0), x.dim(1), 2 * h, 2 * w});
  for (int64_t p = 0; p < bc; ++p) {
    const T* src = x.data().data() + p * h * w;
    T* dst = out.data().data() + p * 4 * h * w;
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x2 = 0; x2 < w; ++x2) {
        const T v = src[y * w + x2];
        const int64_t oy = 2 * y, ox = 2 * x2, ow = 2 * w;
        dst[oy * ow + ox] = v;
        dst[oy * ow + ox + 1] = v;
        dst[(oy + 1) * ow + ox] = v;
        dst[(oy + 1) * ow + ox + 1] = v;
      }
  }
  if (detail::wants_tape(x)) {
    out.set_requires_grad(true);
    auto xi = x.impl, oi = out.impl;
    GradTape<T>::current()->record("nearest_upsample2x", oi, [xi, oi, bc, h, w] {
      if (oi->grad.empty() || !xi->requires_grad) return;
      ensure_grad(*xi);
      for (int64_t p = 0; p < bc; ++p) {
        T* gsrc = xi->grad.data() + p * h * w;
        const T* gdst = oi->grad.data() + p * 4 * h * w;
        for (int64_t y = 0; y < h; ++y)
          for (int64_t x2 = 0; x2 < w; ++x2) {
            const int64_t oy = 2 * y, ox = 2 * x2, ow = 2 * w;
            gsrc[y * w + x2] += gdst[oy * ow + ox] + gdst[oy * ow + ox + 1] +
                                gdst[(oy + 1) * ow + ox] + gdst[(oy + 1) * ow + ox + 1];
          }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Differences and reductions
// ---------------------------------------------------------------------------

/// First-order forward difference along `axis`: out[..., i, ...] =
/// x[..., i+1, ...] - x[..., i, ...]. The axis shrinks by one.
template <typename T>
TensorT<T> axis_diff(const TensorT<T>& x, int axis) {
  const int r = x.rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ShapeError("axis_diff: axis out of range");
  const int64_t n_axis = x.dim(axis);
  if (n_axis < 2) throw ShapeError("axis_diff: axis must have length >= 2");

  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);
  for (int i = axis + 1; i < r; ++i) inner *= x.dim(i);

  Shape out_shape = x.shape();
  out_shape[static_cast<size_t>(axis)] = n_axis - 1;
  TensorT<T> out(out_shape);
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t i = 0; i + 1 < n_axis; ++i) {
      const T* hi = x.data().data() + (o * n_axis + i + 1) * inner;
      const T* lo = x.data().data() + (o * n_axis + i) * inner;
      T* dst = out.data().data() + (o * (n_axis - 1) + i) * inner;
      for (int64_t j = 0; j < inner; ++j) dst[j] = hi[j] - lo[j];
    }

  if (detail::wants_tape(x)) {
    out.set_requires_grad(true);
    auto xi = x.impl, oi = out.impl;
    GradTape<T>::current()->record("axis_diff", oi, [xi, oi, outer, inner, n_axis] {
      if (oi->grad.empty() || !xi->requires_grad) return;
      ensure_grad(*xi);
      for (int64_t o = 0; o < outer; ++o)
        for (int64_t i = 0; i + 1 < n_axis; ++i) {
          const T* g = oi->grad.data() + (o * (n_axis - 1) + i) * inner;
          T* ghi = xi->grad.data() + (o * n_axis + i + 1) * inner;
          T* glo = xi->grad.data() + (o * n_axis + i) * inner;
          for (int64_t j = 0; j < inner; ++j) {
            ghi[j] += g[j];
            glo[j] -= g[j];
          }
        }
    });
  }
  return out;
}

enum class Reduce { Sum, Mean, AbsMean };

/// Full reduction to a single-element tensor.
template <typename T>
TensorT<T> reduce(const TensorT<T>& x, Reduce kind) {
  const int64_t n = x.numel();
  if (n == 0) throw ShapeError("reduce: empty tensor");
  T acc = T(0);
  switch (kind) {
    case Reduce::Sum:
    case Reduce::Mean:
      for (T v : x.data()) acc += v;
      break;
    case Reduce::AbsMean:
      for (T v : x.data()) acc += std::abs(v);
      break;
  }
  if (kind != Reduce::Sum) acc /= static_cast<T>(n);
  TensorT<T> out = TensorT<T>::scalar(acc);
  if (detail::wants_tape(x)) {
    out.set_requires_grad(true);
    auto xi = x.impl, oi = out.impl;
    GradTape<T>::current()->record("reduce", oi, [xi, oi, kind, n] {
      if (oi->grad.empty() || !xi->requires_grad) return;
      ensure_grad(*xi);
      const T g = oi->grad[0];
      const T inv_n = T(1) / static_cast<T>(n);
      switch (kind) {
        case Reduce::Sum:
          for (auto& gv : xi->grad) gv += g;
          break;
        case Reduce::Mean:
          for (auto& gv : xi->grad) gv += g * inv_n;
          break;
        case Reduce::AbsMean:
          for (size_t i = 0; i < xi->grad.size(); ++i) {
            const T v = xi->data[i];
            const T sign = v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0));
            xi->grad[i] += g * sign * inv_n;
          }
          break;
      }
    });
  }
  return out;
}

/// Runs reverse-mode accumulation for `loss` over `tape`.
template <typename T>
void backward(const TensorT<T>& loss, GradTape<T>& tape) {
  tape.backward(loss);
}

}  // namespace framecast
