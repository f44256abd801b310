#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fpesc/domain.hpp"
#include "fpesc/errors.hpp"
#include "fpesc/jets.hpp"
#include "fpesc/oracle.hpp"
#include "fpesc/rng.hpp"

namespace fpesc {

// Spatial jet of a velocity field at (t, x): component i is a truncated
// Taylor polynomial in x. Partials are read off as a! * coefficient;
// divergence partials are contractions of one-order-higher entries.
struct FieldJet {
  const JetSpace* space = nullptr;
  std::vector<std::vector<double>> comp;

  void reset(const JetSpace& sp, int d) {
    space = &sp;
    comp.assign(d, std::vector<double>(sp.size(), 0.0));
  }
  int dim() const { return static_cast<int>(comp.size()); }

  double value(int i) const { return comp[i][0]; }
  double partial(int i, int term) const {
    return comp[i][term] * space->factorial(term);
  }
  double partial(int i, std::span<const int> a) const {
    int t = space->index_of(a);
    if (t < 0) throw OrderError("partial order exceeds jet degree");
    return partial(i, t);
  }
  // d^a (div f); requires |a| < degree
  double div_partial(int term) const {
    double acc = 0.0;
    for (int m = 0; m < dim(); ++m) {
      int up = space->raise(term, m);
      if (up < 0) throw OrderError("divergence partial exceeds jet degree");
      acc += partial(m, up);
    }
    return acc;
  }
  double div_partial(std::span<const int> a) const {
    int t = space->index_of(a);
    if (t < 0) throw OrderError("divergence partial exceeds jet degree");
    return div_partial(t);
  }
};

struct PotentialJet {
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;  // third and fourth derivatives are identically zero
};

// V(x) = c (x-mu)^T Sinf^{-1} (x-mu), c = 1/2 with the half factor on
// (the default; makes the analytic Gaussian curve an exact solution).
class QuadraticPotential {
 public:
  QuadraticPotential(Eigen::VectorXd mu_inf, Eigen::MatrixXd sigma_inf,
                     bool half_factor = true)
      : mu_(std::move(mu_inf)),
        sigma_(std::move(sigma_inf)),
        half_(half_factor) {
    require_spd(sigma_, "sigma_inf");
    if (sigma_.rows() != mu_.size())
      throw ConfigError("quadratic potential: dimension mismatch");
    scaled_inv_ = (half_ ? 1.0 : 2.0) * sigma_.inverse();
  }

  int dim() const { return static_cast<int>(mu_.size()); }
  const Eigen::VectorXd& mu_inf() const { return mu_; }
  const Eigen::MatrixXd& sigma_inf() const { return sigma_; }
  bool half_factor() const { return half_; }

  double value(const Eigen::VectorXd& x) const {
    Eigen::VectorXd r = x - mu_;
    return 0.5 * r.dot(scaled_inv_ * r);
  }
  Eigen::VectorXd grad(const Eigen::VectorXd& x) const {
    return scaled_inv_ * (x - mu_);
  }
  const Eigen::MatrixXd& hess() const { return scaled_inv_; }
  double third(int, int, int) const { return 0.0; }
  double fourth(int, int, int, int) const { return 0.0; }

  PotentialJet eval_jet(const Eigen::VectorXd& x, int order) const {
    if (order < 1) throw OrderError("potential jet order must be >= 1");
    return PotentialJet{grad(x), scaled_inv_};
  }

 private:
  Eigen::VectorXd mu_;
  Eigen::MatrixXd sigma_;
  bool half_;
  Eigen::MatrixXd scaled_inv_;
};

enum class TimeMode { none, append_scalar };

struct PeriodicEmbedding {
  bool enabled = false;
  double l = 0.0;
};

// Fully-connected velocity field with an analytic activation. Spatial
// inputs enter raw or through the periodic sin/cos features; time, when
// enabled, is appended as one raw scalar.
//
// Jet propagation is laid out coefficient-major: a layer's activations form
// a (width x n_coeffs) column-major matrix, so every step of the series
// Horner recursion is a column-wise fused multiply over all neurons.
class MlpField {
 public:
  struct Workspace {
    const JetSpace* space = nullptr;
    std::vector<Eigen::MatrixXd> act;  // act[0] = features, act[k] = layer k output
    Eigen::MatrixXd z, series, acc, tmp;
    std::vector<double> series1;

    void ensure(const JetSpace& sp, const std::vector<int>& sizes) {
      if (space == &sp && !act.empty()) return;
      space = &sp;
      int n = sp.size();
      act.resize(sizes.size());
      int maxw = 0;
      for (std::size_t k = 0; k < sizes.size(); ++k) {
        act[k].setZero(sizes[k], n);
        maxw = std::max(maxw, sizes[k]);
      }
      z.setZero(maxw, n);
      series.setZero(maxw, sp.degree() + 2);
      acc.setZero(maxw, n);
      tmp.setZero(maxw, n);
      series1.assign(sp.degree() + 2, 0.0);
    }
  };

  // forward intermediates for parameter reverse sweeps
  struct Tape {
    const JetSpace* space = nullptr;
    std::vector<Eigen::MatrixXd> act;
    std::vector<Eigen::MatrixXd> dact;  // g'(z) per hidden layer
    Eigen::MatrixXd z, series, dseries, acc, tmp;
    std::vector<double> series1;

    void ensure(const JetSpace& sp, const std::vector<int>& sizes) {
      if (space == &sp && !act.empty()) return;
      space = &sp;
      int n = sp.size();
      act.resize(sizes.size());
      dact.assign(sizes.size() >= 2 ? sizes.size() - 2 : 0, {});
      int maxw = 0;
      for (std::size_t k = 0; k < sizes.size(); ++k) {
        act[k].setZero(sizes[k], n);
        maxw = std::max(maxw, sizes[k]);
      }
      for (std::size_t k = 0; k + 2 < sizes.size(); ++k)
        dact[k].setZero(sizes[k + 1], n);
      z.setZero(maxw, n);
      series.setZero(maxw, sp.degree() + 2);
      dseries.setZero(maxw, sp.degree() + 1);
      acc.setZero(maxw, n);
      tmp.setZero(maxw, n);
      series1.assign(sp.degree() + 2, 0.0);
    }
  };

  MlpField(std::vector<int> layer_sizes, Analytic activation, TimeMode time_mode,
           PeriodicEmbedding embedding, int spatial_dim)
      : sizes_(std::move(layer_sizes)),
        act_(activation),
        time_mode_(time_mode),
        emb_(embedding),
        d_(spatial_dim) {
    if (sizes_.size() < 2) throw ConfigError("mlp needs at least input and output");
    if (sizes_.front() != input_width())
      throw ConfigError("mlp input width must be " + std::to_string(input_width()));
    if (sizes_.back() != d_)
      throw ConfigError("mlp output width must equal the spatial dimension");
    if (emb_.enabled && emb_.l <= 0.0)
      throw ConfigError("periodic embedding needs a positive period");
    W_.resize(n_layers());
    b_.resize(n_layers());
    for (int k = 0; k < n_layers(); ++k) {
      W_[k].setZero(sizes_[k + 1], sizes_[k]);
      b_[k].setZero(sizes_[k + 1]);
    }
  }

  static MlpField xavier(std::vector<int> layer_sizes, Analytic activation,
                         TimeMode time_mode, PeriodicEmbedding embedding,
                         int spatial_dim, std::uint64_t seed) {
    MlpField f(std::move(layer_sizes), activation, time_mode, embedding,
               spatial_dim);
    Rng rng(seed);
    for (int k = 0; k < f.n_layers(); ++k) {
      double lim = std::sqrt(6.0 / (f.sizes_[k] + f.sizes_[k + 1]));
      for (Eigen::Index i = 0; i < f.W_[k].rows(); ++i)
        for (Eigen::Index j = 0; j < f.W_[k].cols(); ++j)
          f.W_[k](i, j) = lim * (2.0 * rng.uniform01() - 1.0);
    }
    return f;
  }

  int dim() const { return d_; }
  int n_layers() const { return static_cast<int>(sizes_.size()) - 1; }
  const std::vector<int>& layer_sizes() const { return sizes_; }
  Analytic activation() const { return act_; }
  TimeMode time_mode() const { return time_mode_; }
  const PeriodicEmbedding& embedding() const { return emb_; }

  int input_width() const {
    return d_ * (emb_.enabled ? 2 : 1) +
           (time_mode_ == TimeMode::append_scalar ? 1 : 0);
  }

  int param_count() const {
    int n = 0;
    for (int k = 0; k < n_layers(); ++k)
      n += sizes_[k] * sizes_[k + 1] + sizes_[k + 1];
    return n;
  }

  // flat layout: per layer, W row-major then b
  void get_params(Eigen::VectorXd& out) const {
    out.resize(param_count());
    int p = 0;
    for (int k = 0; k < n_layers(); ++k) {
      for (Eigen::Index i = 0; i < W_[k].rows(); ++i)
        for (Eigen::Index j = 0; j < W_[k].cols(); ++j) out[p++] = W_[k](i, j);
      for (Eigen::Index i = 0; i < b_[k].size(); ++i) out[p++] = b_[k][i];
    }
  }
  void set_params(const Eigen::VectorXd& in) {
    if (in.size() != param_count()) throw ConfigError("parameter size mismatch");
    for (Eigen::Index i = 0; i < in.size(); ++i)
      if (!std::isfinite(in[i])) throw InvalidFieldError("non-finite parameter");
    int p = 0;
    for (int k = 0; k < n_layers(); ++k) {
      for (Eigen::Index i = 0; i < W_[k].rows(); ++i)
        for (Eigen::Index j = 0; j < W_[k].cols(); ++j) W_[k](i, j) = in[p++];
      for (Eigen::Index i = 0; i < b_[k].size(); ++i) b_[k][i] = in[p++];
    }
  }
  Eigen::MatrixXd& weights(int layer) { return W_[layer]; }
  Eigen::VectorXd& biases(int layer) { return b_[layer]; }
  const Eigen::MatrixXd& weights(int layer) const { return W_[layer]; }
  const Eigen::VectorXd& biases(int layer) const { return b_[layer]; }

  Eigen::VectorXd eval(double t, const Eigen::VectorXd& x) const {
    Eigen::VectorXd a = features_value(t, x);
    for (int k = 0; k < n_layers(); ++k) {
      Eigen::VectorXd z = W_[k] * a + b_[k];
      if (k + 1 < n_layers()) {
        a.resize(z.size());
        for (Eigen::Index i = 0; i < z.size(); ++i) a[i] = scalar_act(z[i]);
      } else {
        a = std::move(z);
      }
    }
    return a;
  }

  void eval_jet(double t, const Eigen::VectorXd& x, const JetSpace& sp,
                FieldJet& out, Workspace& ws) const {
    check_order(sp);
    ws.ensure(sp, sizes_);
    fill_features(t, x, sp, ws.act[0], ws.series1);
    for (int k = 0; k < n_layers(); ++k) {
      const int w = sizes_[k + 1];
      auto zblock = ws.z.topRows(w);
      zblock.noalias() = W_[k] * ws.act[k];
      zblock.col(0) += b_[k];
      if (k + 1 < n_layers()) {
        for (int i = 0; i < w; ++i) {
          analytic_series(act_, zblock(i, 0), sp.degree() + 1,
                          ws.series1.data());
          for (int q = 0; q <= sp.degree(); ++q) ws.series(i, q) = ws.series1[q];
        }
        compose_rows(sp, ws.series, zblock, ws.act[k + 1], ws.acc, ws.tmp);
      } else {
        ws.act[k + 1] = zblock;
      }
    }
    out.reset(sp, d_);
    for (int i = 0; i < d_; ++i)
      for (int c = 0; c < sp.size(); ++c) out.comp[i][c] = ws.act.back()(i, c);
  }

  void eval_jet_tape(double t, const Eigen::VectorXd& x, const JetSpace& sp,
                     FieldJet& out, Tape& tape) const {
    check_order(sp);
    tape.ensure(sp, sizes_);
    fill_features(t, x, sp, tape.act[0], tape.series1);
    for (int k = 0; k < n_layers(); ++k) {
      const int w = sizes_[k + 1];
      auto zblock = tape.z.topRows(w);
      zblock.noalias() = W_[k] * tape.act[k];
      zblock.col(0) += b_[k];
      if (k + 1 < n_layers()) {
        for (int i = 0; i < w; ++i) {
          analytic_series(act_, zblock(i, 0), sp.degree() + 2,
                          tape.series1.data());
          for (int q = 0; q <= sp.degree(); ++q) {
            tape.series(i, q) = tape.series1[q];
            tape.dseries(i, q) = (q + 1) * tape.series1[q + 1];
          }
        }
        compose_rows(sp, tape.series, zblock, tape.act[k + 1], tape.acc,
                     tape.tmp);
        compose_rows(sp, tape.dseries, zblock, tape.dact[k], tape.acc,
                     tape.tmp);
      } else {
        tape.act[k + 1] = zblock;
      }
    }
    out.reset(sp, d_);
    for (int i = 0; i < d_; ++i)
      for (int c = 0; c < sp.size(); ++c) out.comp[i][c] = tape.act.back()(i, c);
  }

  // accumulate d<cot, output coefficients>/dtheta into grad (flat layout).
  // cot[i][c] weights coefficient c of output component i.
  void vjp(const Tape& tape, const std::vector<std::vector<double>>& cot,
           Eigen::VectorXd& grad) const {
    const JetSpace& sp = *tape.space;
    const int n = sp.size();
    if (grad.size() != param_count()) {
      grad.setZero(param_count());
    }
    Eigen::MatrixXd cur(d_, n);
    for (int i = 0; i < d_; ++i)
      for (int c = 0; c < n; ++c) cur(i, c) = cot[i][c];

    // flat offsets per layer
    std::vector<int> off(n_layers());
    int p = 0;
    for (int k = 0; k < n_layers(); ++k) {
      off[k] = p;
      p += sizes_[k] * sizes_[k + 1] + sizes_[k + 1];
    }

    using RowMajorMap =
        Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                 Eigen::RowMajor>>;
    for (int k = n_layers() - 1; k >= 0; --k) {
      const auto& a_prev = tape.act[k];
      RowMajorMap gW(grad.data() + off[k], sizes_[k + 1], sizes_[k]);
      gW.noalias() += cur * a_prev.transpose();
      Eigen::Map<Eigen::VectorXd> gb(
          grad.data() + off[k] + sizes_[k] * sizes_[k + 1], sizes_[k + 1]);
      gb += cur.col(0);
      if (k == 0) break;
      Eigen::MatrixXd wa(sizes_[k], n);
      wa.noalias() = W_[k].transpose() * cur;
      // adjoint of multiplication by the activation-derivative jets,
      // column-wise over all neurons at once
      Eigen::MatrixXd next = Eigen::MatrixXd::Zero(sizes_[k], n);
      const auto& dact = tape.dact[k - 1];
      for (int c = 0; c < n; ++c)
        for (int pp = sp.pair_begin(c); pp < sp.pair_end(c); ++pp) {
          auto [ia, ib] = sp.pair_at(pp);
          next.col(ib).array() += dact.col(ia).array() * wa.col(c).array();
        }
      cur = std::move(next);
    }
  }

  // gradient of one extracted jet entry with respect to all parameters
  Eigen::VectorXd param_grad_entry(double t, const Eigen::VectorXd& x,
                                   const JetSpace& sp, int comp, int term) const {
    Tape tape;
    FieldJet jet;
    eval_jet_tape(t, x, sp, jet, tape);
    std::vector<std::vector<double>> cot(d_, std::vector<double>(sp.size(), 0.0));
    cot[comp][term] = sp.factorial(term);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(param_count());
    vjp(tape, cot, g);
    return g;
  }

  Eigen::VectorXd param_grad_div_entry(double t, const Eigen::VectorXd& x,
                                       const JetSpace& sp, int term) const {
    Tape tape;
    FieldJet jet;
    eval_jet_tape(t, x, sp, jet, tape);
    std::vector<std::vector<double>> cot(d_, std::vector<double>(sp.size(), 0.0));
    for (int m = 0; m < d_; ++m) {
      int up = sp.raise(term, m);
      if (up < 0) throw OrderError("divergence partial exceeds jet degree");
      cot[m][up] = sp.factorial(up);
    }
    Eigen::VectorXd g = Eigen::VectorXd::Zero(param_count());
    vjp(tape, cot, g);
    return g;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["layer_sizes"] = sizes_;
    j["activation"] = analytic_name(act_);
    j["time_mode"] = time_mode_ == TimeMode::append_scalar ? "append_scalar" : "none";
    if (emb_.enabled)
      j["embedding"] = {{"type", "periodic"}, {"l", emb_.l}};
    else
      j["embedding"] = {{"type", "none"}};
    j["spatial_dim"] = d_;
    nlohmann::json ws = nlohmann::json::array();
    nlohmann::json bs = nlohmann::json::array();
    for (int k = 0; k < n_layers(); ++k) {
      std::vector<double> w(W_[k].size());
      for (Eigen::Index i = 0; i < W_[k].rows(); ++i)
        for (Eigen::Index jj = 0; jj < W_[k].cols(); ++jj)
          w[i * W_[k].cols() + jj] = W_[k](i, jj);
      ws.push_back(w);
      bs.push_back(std::vector<double>(b_[k].data(), b_[k].data() + b_[k].size()));
    }
    j["weights"] = ws;
    j["biases"] = bs;
    return j;
  }

  static MlpField from_json(const nlohmann::json& j) {
    std::vector<int> sizes = j.at("layer_sizes").get<std::vector<int>>();
    Analytic act = analytic_from_name(j.at("activation").get<std::string>());
    TimeMode tm = j.at("time_mode").get<std::string>() == "append_scalar"
                      ? TimeMode::append_scalar
                      : TimeMode::none;
    PeriodicEmbedding emb;
    if (j.at("embedding").at("type").get<std::string>() == "periodic") {
      emb.enabled = true;
      emb.l = j.at("embedding").at("l").get<double>();
    }
    int d = j.at("spatial_dim").get<int>();
    MlpField f(sizes, act, tm, emb, d);
    const auto& ws = j.at("weights");
    const auto& bs = j.at("biases");
    if (static_cast<int>(ws.size()) != f.n_layers() ||
        static_cast<int>(bs.size()) != f.n_layers())
      throw ConfigError("checkpoint layer count mismatch");
    for (int k = 0; k < f.n_layers(); ++k) {
      auto w = ws[k].get<std::vector<double>>();
      auto b = bs[k].get<std::vector<double>>();
      if (static_cast<int>(w.size()) != sizes[k] * sizes[k + 1] ||
          static_cast<int>(b.size()) != sizes[k + 1])
        throw ConfigError("checkpoint shape mismatch");
      for (int i = 0; i < sizes[k + 1]; ++i) {
        for (int jj = 0; jj < sizes[k]; ++jj) {
          double v = w[i * sizes[k] + jj];
          if (!std::isfinite(v)) throw InvalidFieldError("non-finite weight");
          f.W_[k](i, jj) = v;
        }
        if (!std::isfinite(b[i])) throw InvalidFieldError("non-finite bias");
        f.b_[k][i] = b[i];
      }
    }
    return f;
  }

 private:
  void check_order(const JetSpace& sp) const {
    if (sp.degree() > 5) throw OrderError("field jets supported up to order 5");
    if (sp.dim() != d_) throw ConfigError("jet space dim mismatch");
  }

  // Horner composition of per-row series with the pre-activation jets, one
  // column-wise fused multiply per product pair. The Horner variable is the
  // jet minus its constant term, hence the ib == 0 skip.
  static void compose_rows(const JetSpace& sp, const Eigen::MatrixXd& series,
                           const Eigen::Ref<const Eigen::MatrixXd>& z,
                           Eigen::MatrixXd& out, Eigen::MatrixXd& accbuf,
                           Eigen::MatrixXd& tmpbuf) {
    const int rows = static_cast<int>(z.rows());
    const int n = sp.size();
    const int K = sp.degree();
    auto acc = accbuf.topLeftCorner(rows, n);
    auto tmp = tmpbuf.topLeftCorner(rows, n);
    acc.setZero();
    acc.col(0) = series.col(K).head(rows);
    for (int k = K - 1; k >= 0; --k) {
      tmp.setZero();
      for (int c = 0; c < n; ++c) {
        auto tc = tmp.col(c);
        for (int p = sp.pair_begin(c); p < sp.pair_end(c); ++p) {
          auto [ia, ib] = sp.pair_at(p);
          if (ib == 0) continue;
          tc.array() += acc.col(ia).array() * z.col(ib).array();
        }
      }
      tmp.col(0) += series.col(k).head(rows);
      acc = tmp;
    }
    out = acc;
  }

  double scalar_act(double v) const {
    switch (act_) {
      case Analytic::tanh: return std::tanh(v);
      case Analytic::exp: return std::exp(v);
      case Analytic::sin: return std::sin(v);
      case Analytic::cos: return std::cos(v);
      case Analytic::reciprocal: return 1.0 / v;
    }
    return 0.0;
  }

  Eigen::VectorXd features_value(double t, const Eigen::VectorXd& x) const {
    Eigen::VectorXd f(input_width());
    if (emb_.enabled) {
      const double w = 2.0 * M_PI / emb_.l;
      for (int j = 0; j < d_; ++j) {
        double xw = wrap_coord(x[j], emb_.l);
        f[j] = std::sin(w * xw);
        f[d_ + j] = std::cos(w * xw);
      }
      if (time_mode_ == TimeMode::append_scalar) f[2 * d_] = t;
    } else {
      for (int j = 0; j < d_; ++j) f[j] = x[j];
      if (time_mode_ == TimeMode::append_scalar) f[d_] = t;
    }
    return f;
  }

  // feature jets: raw coordinates are seeds; periodic features are
  // univariate series in one coordinate with slope 2*pi/l
  void fill_features(double t, const Eigen::VectorXd& x, const JetSpace& sp,
                     Eigen::MatrixXd& feat, std::vector<double>& series) const {
    feat.setZero();
    const int n = sp.size();
    (void)n;
    if (emb_.enabled) {
      const double w = 2.0 * M_PI / emb_.l;
      for (int j = 0; j < d_; ++j) {
        double xw = wrap_coord(x[j], emb_.l);
        analytic_series(Analytic::sin, w * xw, sp.degree() + 1, series.data());
        double pw = 1.0;
        int term = 0;
        for (int q = 0; q <= sp.degree(); ++q) {
          feat(j, term) = series[q] * pw;
          if (q < sp.degree()) term = sp.raise(term, j);
          pw *= w;
        }
        analytic_series(Analytic::cos, w * xw, sp.degree() + 1, series.data());
        pw = 1.0;
        term = 0;
        for (int q = 0; q <= sp.degree(); ++q) {
          feat(d_ + j, term) = series[q] * pw;
          if (q < sp.degree()) term = sp.raise(term, j);
          pw *= w;
        }
      }
      if (time_mode_ == TimeMode::append_scalar) feat(2 * d_, 0) = t;
    } else {
      for (int j = 0; j < d_; ++j) {
        feat(j, 0) = x[j];
        if (sp.degree() >= 1) feat(j, sp.unit_term(j)) = 1.0;
      }
      if (time_mode_ == TimeMode::append_scalar) feat(d_, 0) = t;
    }
  }

  std::vector<int> sizes_;
  Analytic act_;
  TimeMode time_mode_;
  PeriodicEmbedding emb_;
  int d_;
  std::vector<Eigen::MatrixXd> W_;
  std::vector<Eigen::VectorXd> b_;
};

// Analytic ground-truth field of the Gaussian problem:
// f(t,x) = -grad V(x) + Sigma_t^{-1} (x - mu_t). Affine in x, so jets are
// filled in closed form. It carries no trainable parameters.
class OracleField {
 public:
  struct Workspace {};

  OracleField(GaussianPath path, const QuadraticPotential& pot)
      : path_(std::move(path)), pot_hess_(pot.hess()), pot_mu_(pot.mu_inf()) {
    if (!path_.mu_inf().isApprox(pot.mu_inf()) ||
        !path_.sigma_inf().isApprox(pot.sigma_inf()))
      throw ConfigError("oracle field: path and potential disagree on the target");
    int n = static_cast<int>(path_.horizon() / path_.dt() + 0.5) + 1;
    sig_inv_.reserve(n);
    for (int k = 0; k < n; ++k)
      sig_inv_.push_back(path_.sigma_at(k).inverse());
  }

  int dim() const { return path_.dim(); }
  const GaussianPath& path() const { return path_; }

  Eigen::VectorXd eval(double t, const Eigen::VectorXd& x) const {
    int k = path_.stamp_index(t);
    return -pot_hess_ * (x - pot_mu_) + sig_inv_[k] * (x - path_.mu_at(k));
  }

  void eval_jet(double t, const Eigen::VectorXd& x, const JetSpace& sp,
                FieldJet& out, Workspace&) const {
    int k = path_.stamp_index(t);
    Eigen::MatrixXd jac = -pot_hess_ + sig_inv_[k];
    Eigen::VectorXd v =
        -pot_hess_ * (x - pot_mu_) + sig_inv_[k] * (x - path_.mu_at(k));
    out.reset(sp, dim());
    for (int i = 0; i < dim(); ++i) {
      out.comp[i][0] = v[i];
      if (sp.degree() >= 1)
        for (int j = 0; j < dim(); ++j)
          out.comp[i][sp.unit_term(j)] = jac(i, j);
    }
  }

 private:
  GaussianPath path_;
  Eigen::MatrixXd pot_hess_;
  Eigen::VectorXd pot_mu_;
  std::vector<Eigen::MatrixXd> sig_inv_;
};

}  // namespace fpesc
