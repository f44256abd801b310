#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fpesc/errors.hpp"

namespace fpesc {

// Analytic scalar series with all derivatives available; piecewise-linear
// activations are unrepresentable here on purpose.
enum class Analytic { tanh, exp, sin, cos, reciprocal };

inline std::string analytic_name(Analytic a) {
  switch (a) {
    case Analytic::tanh: return "tanh";
    case Analytic::exp: return "exp";
    case Analytic::sin: return "sin";
    case Analytic::cos: return "cos";
    case Analytic::reciprocal: return "reciprocal";
  }
  return "?";
}

inline Analytic analytic_from_name(const std::string& s) {
  if (s == "tanh") return Analytic::tanh;
  if (s == "exp") return Analytic::exp;
  if (s == "sin") return Analytic::sin;
  if (s == "cos") return Analytic::cos;
  if (s == "reciprocal") return Analytic::reciprocal;
  throw ConfigError("unknown activation: " + s);
}

// Shared immutable tables for dense truncated Taylor arithmetic in `dim`
// variables up to total degree `degree`. Terms are enumerated grade by
// grade; within a grade the exponent of the first variable descends.
class JetSpace {
 public:
  JetSpace(int dim, int degree) : dim_(dim), degree_(degree) {
    if (dim < 1) throw ConfigError("jet dim must be >= 1");
    if (degree < 0) throw ConfigError("jet degree must be >= 0");
    std::vector<int> a(dim, 0);
    for (int g = 0; g <= degree; ++g) emit_grade(a, 0, g);
    size_ = static_cast<int>(order_.size());

    grade_begin_.assign(degree + 2, size_);
    for (int t = size_ - 1; t >= 0; --t) grade_begin_[order_[t]] = t;
    for (int g = degree; g >= 0; --g)
      if (grade_begin_[g] > grade_begin_[g + 1]) grade_begin_[g] = grade_begin_[g + 1];

    raise_.assign(static_cast<std::size_t>(size_) * dim, -1);
    for (int t = 0; t < size_; ++t) {
      for (int j = 0; j < dim; ++j) {
        std::vector<int> b(exps_.begin() + t * dim, exps_.begin() + (t + 1) * dim);
        b[j] += 1;
        raise_[t * dim + j] = index_of(b);
      }
    }

    // products grouped by output term: out[c] = sum over pairs (a,b)
    mul_offset_.assign(size_ + 1, 0);
    std::vector<std::pair<std::int32_t, std::int32_t>> pairs;
    for (int c = 0; c < size_; ++c) {
      mul_offset_[c] = static_cast<int>(pairs.size());
      for (int ta = 0; ta < size_; ++ta) {
        if (order_[ta] > order_[c]) continue;
        std::vector<int> rem(dim);
        bool ok = true;
        for (int j = 0; j < dim; ++j) {
          rem[j] = exps_[c * dim + j] - exps_[ta * dim + j];
          if (rem[j] < 0) { ok = false; break; }
        }
        if (!ok) continue;
        int tb = index_of(rem);
        pairs.emplace_back(ta, tb);
      }
    }
    mul_offset_[size_] = static_cast<int>(pairs.size());
    mul_pairs_ = std::move(pairs);
  }

  int dim() const { return dim_; }
  int degree() const { return degree_; }
  int size() const { return size_; }

  std::span<const int> exponents(int term) const {
    return {exps_.data() + static_cast<std::size_t>(term) * dim_,
            static_cast<std::size_t>(dim_)};
  }
  int order(int term) const { return order_[term]; }
  double factorial(int term) const { return fact_[term]; }

  // -1 when the multi-index exceeds the truncation degree
  int index_of(std::span<const int> a) const {
    int g = 0;
    for (int v : a) {
      if (v < 0) return -1;
      g += v;
    }
    if (g > degree_) return -1;
    for (int t = grade_begin_[g]; t < grade_begin_[g + 1]; ++t) {
      bool eq = true;
      for (int j = 0; j < dim_; ++j)
        if (exps_[t * dim_ + j] != a[j]) { eq = false; break; }
      if (eq) return t;
    }
    return -1;
  }

  // index of a + e_axis, or -1 beyond the degree
  int raise(int term, int axis) const { return raise_[term * dim_ + axis]; }

  int unit_term(int axis) const { return 1 + axis; }

  // product-pair table grouped by output term, for batched kernels
  int pair_begin(int c) const { return mul_offset_[c]; }
  int pair_end(int c) const { return mul_offset_[c + 1]; }
  const std::pair<std::int32_t, std::int32_t>& pair_at(int p) const {
    return mul_pairs_[p];
  }

  void mul(const double* a, const double* b, double* out) const {
    for (int c = 0; c < size_; ++c) {
      double acc = 0.0;
      for (int p = mul_offset_[c]; p < mul_offset_[c + 1]; ++p)
        acc += a[mul_pairs_[p].first] * b[mul_pairs_[p].second];
      out[c] = acc;
    }
  }

  // adjoint of v -> mul(m, v): out[b] = sum over (a, c=a+b) of m[a] * w[c]
  void mul_transpose(const double* m, const double* w, double* out) const {
    for (int c = 0; c < size_; ++c) out[c] = 0.0;
    for (int c = 0; c < size_; ++c) {
      double wc = w[c];
      if (wc == 0.0) continue;
      for (int p = mul_offset_[c]; p < mul_offset_[c + 1]; ++p)
        out[mul_pairs_[p].second] += m[mul_pairs_[p].first] * wc;
    }
  }

 private:
  void emit_grade(std::vector<int>& a, int pos, int rem) {
    if (pos == dim_ - 1) {
      a[pos] = rem;
      push_term(a);
      return;
    }
    for (int v = rem; v >= 0; --v) {
      a[pos] = v;
      emit_grade(a, pos + 1, rem - v);
    }
  }
  void push_term(const std::vector<int>& a) {
    int g = 0;
    double f = 1.0;
    for (int v : a) {
      g += v;
      for (int k = 2; k <= v; ++k) f *= k;
    }
    exps_.insert(exps_.end(), a.begin(), a.end());
    order_.push_back(g);
    fact_.push_back(f);
  }

  int dim_, degree_, size_ = 0;
  std::vector<int> exps_;
  std::vector<int> order_;
  std::vector<double> fact_;
  std::vector<int> grade_begin_;
  std::vector<int> raise_;
  std::vector<int> mul_offset_;
  std::vector<std::pair<std::int32_t, std::int32_t>> mul_pairs_;
};

// Taylor coefficients t_k of the series at base point c, k = 0..n-1,
// i.e. g^{(k)}(c) / k!.
inline void analytic_series(Analytic fn, double c, int n, double* out) {
  switch (fn) {
    case Analytic::tanh: {
      // T' = 1 - T^2 propagated coefficientwise
      out[0] = std::tanh(c);
      for (int k = 0; k + 1 < n; ++k) {
        double conv = 0.0;
        for (int j = 0; j <= k; ++j) conv += out[j] * out[k - j];
        out[k + 1] = ((k == 0 ? 1.0 : 0.0) - conv) / (k + 1);
      }
      break;
    }
    case Analytic::exp: {
      double e = std::exp(c);
      double f = 1.0;
      for (int k = 0; k < n; ++k) {
        if (k > 0) f *= k;
        out[k] = e / f;
      }
      break;
    }
    case Analytic::sin:
    case Analytic::cos: {
      double s = std::sin(c), co = std::cos(c);
      for (int k = 0; k < n; ++k) {
        out[k] = (fn == Analytic::sin) ? s : co;
        double ns = co / (k + 1), nc = -s / (k + 1);
        s = ns;
        co = nc;
      }
      break;
    }
    case Analytic::reciprocal: {
      if (c == 0.0)
        throw SingularityError("reciprocal of a jet with zero constant term");
      double p = 1.0 / c;
      for (int k = 0; k < n; ++k) {
        out[k] = (k % 2 == 0 ? p : -p);
        p /= c;
      }
      break;
    }
  }
}

// out = (series composed with u), series given as K+1 Taylor coefficients at
// u's constant term; Horner in w = u - u0. out must not alias u.
inline void jet_compose_series(const JetSpace& sp, const double* series,
                               const double* u, double* out, double* scratch) {
  const int n = sp.size();
  const int K = sp.degree();
  // w = u with zero constant term lives implicitly: Horner multiplies by u
  // and corrects the constant separately.
  for (int i = 0; i < n; ++i) out[i] = 0.0;
  out[0] = series[K];
  for (int k = K - 1; k >= 0; --k) {
    // scratch = out * w  (w = u - u0)
    sp.mul(out, u, scratch);
    double u0 = u[0];
    for (int i = 0; i < n; ++i) scratch[i] -= u0 * out[i];
    scratch[0] += series[k];
    for (int i = 0; i < n; ++i) out[i] = scratch[i];
  }
}

// Value-level truncated Taylor polynomial; convenience wrapper over the raw
// kernels above for tests and non-hot-path code.
class Jet {
 public:
  Jet() = default;
  explicit Jet(const JetSpace& sp) : sp_(&sp), c_(sp.size(), 0.0) {}

  static Jet constant(const JetSpace& sp, double v) {
    Jet j(sp);
    j.c_[0] = v;
    return j;
  }
  // the coordinate function x -> x_axis expanded at x0
  static Jet variable(const JetSpace& sp, int axis, double x0) {
    if (axis < 0 || axis >= sp.dim()) throw ConfigError("axis out of range");
    Jet j(sp);
    j.c_[0] = x0;
    if (sp.degree() >= 1) j.c_[sp.unit_term(axis)] = 1.0;
    return j;
  }

  const JetSpace& space() const { return *sp_; }
  double value() const { return c_[0]; }
  double coeff(int t) const { return c_[t]; }
  double& coeff(int t) { return c_[t]; }
  const double* data() const { return c_.data(); }
  double* data() { return c_.data(); }

  // the partial derivative d^a at the base point, i.e. a! * coeff
  double partial(std::span<const int> a) const {
    int t = sp_->index_of(a);
    if (t < 0) throw OrderError("multi-index order exceeds jet degree");
    return c_[t] * sp_->factorial(t);
  }

  Jet& operator+=(const Jet& o) {
    check(o);
    for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += o.c_[i];
    return *this;
  }
  Jet& operator-=(const Jet& o) {
    check(o);
    for (std::size_t i = 0; i < c_.size(); ++i) c_[i] -= o.c_[i];
    return *this;
  }
  Jet& operator*=(double s) {
    for (auto& v : c_) v *= s;
    return *this;
  }
  friend Jet operator+(Jet a, const Jet& b) { return a += b; }
  friend Jet operator-(Jet a, const Jet& b) { return a -= b; }
  friend Jet operator*(double s, Jet a) { return a *= s; }

  friend Jet operator*(const Jet& a, const Jet& b) {
    a.check(b);
    Jet out(*a.sp_);
    a.sp_->mul(a.c_.data(), b.c_.data(), out.c_.data());
    return out;
  }

  friend Jet compose(Analytic fn, const Jet& u) {
    const JetSpace& sp = *u.sp_;
    std::vector<double> series(sp.degree() + 1);
    analytic_series(fn, u.c_[0], sp.degree() + 1, series.data());
    Jet out(sp);
    std::vector<double> scratch(sp.size());
    jet_compose_series(sp, series.data(), u.c_.data(), out.c_.data(),
                       scratch.data());
    return out;
  }

 private:
  void check(const Jet& o) const {
    if (sp_ != o.sp_ && (sp_->dim() != o.sp_->dim() || sp_->degree() != o.sp_->degree()))
      throw ConfigError("jet dim/degree mismatch");
  }
  const JetSpace* sp_ = nullptr;
  std::vector<double> c_;
};

}  // namespace fpesc
