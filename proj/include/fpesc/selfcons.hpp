#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "fpesc/domain.hpp"
#include "fpesc/errors.hpp"
#include "fpesc/fields.hpp"
#include "fpesc/integrate.hpp"
#include "fpesc/parallel.hpp"
#include "fpesc/rng.hpp"
#include "fpesc/sym.hpp"

namespace fpesc {

class GaussianInitial {
 public:
  GaussianInitial(Eigen::VectorXd mu0, Eigen::MatrixXd sigma0)
      : mu_(std::move(mu0)), sigma_(std::move(sigma0)) {
    try {
      require_spd(sigma_, "sigma0");
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("invalid initial distribution: ") + e.what());
    }
    if (sigma_.rows() != mu_.size())
      throw ConfigError("invalid initial distribution: dimension mismatch");
    inv_ = sigma_.inverse();
    gamma_ = spd_sqrt(sigma_);
    Eigen::LLT<Eigen::MatrixXd> llt(sigma_);
    logdet_ = 0.0;
    for (Eigen::Index i = 0; i < sigma_.rows(); ++i)
      logdet_ += 2.0 * std::log(llt.matrixL()(i, i));
  }

  int dim() const { return static_cast<int>(mu_.size()); }
  const Eigen::VectorXd& mu0() const { return mu_; }
  const Eigen::MatrixXd& sigma0() const { return sigma_; }
  const Eigen::MatrixXd& inv() const { return inv_; }
  const Eigen::MatrixXd& gamma0() const { return gamma_; }

  double log_density(const Eigen::VectorXd& x) const {
    Eigen::VectorXd r = x - mu_;
    return -0.5 * (dim() * std::log(2.0 * M_PI) + logdet_ + r.dot(inv_ * r));
  }
  Eigen::VectorXd score(const Eigen::VectorXd& x) const {
    return -inv_ * (x - mu_);
  }
  Eigen::VectorXd sample(Rng& rng) const {
    Eigen::VectorXd z(dim());
    for (int i = 0; i < dim(); ++i) z[i] = rng.normal();
    return mu_ + gamma_.transpose() * z;
  }

  // density of the periodized distribution on the torus (truncated shift sum)
  double wrapped_log_density(const Eigen::VectorXd& x, const DomainMode& mode,
                             int shells = 3) const {
    if (!mode.is_torus())
      throw ModeMismatchError("wrapped density requires a torus domain");
    Eigen::VectorXd xw = wrap(mode, x);
    double acc = 0.0;
    Eigen::VectorXd shift(dim());
    std::vector<int> k(dim(), -shells);
    while (true) {
      for (int i = 0; i < dim(); ++i) shift[i] = xw[i] + k[i] * mode.l;
      acc += std::exp(log_density(shift));
      int i = 0;
      while (i < dim() && ++k[i] > shells) k[i++] = -shells;
      if (i == dim()) break;
    }
    return std::log(acc);
  }

 private:
  Eigen::VectorXd mu_;
  Eigen::MatrixXd sigma_;
  Eigen::MatrixXd inv_, gamma_;
  double logdet_ = 0.0;
};

inline Eigen::VectorXd sample_initial(const GaussianInitial& init, Rng& rng) {
  return init.sample(rng);
}

// Particle position plus log-density derivative tensors of orders 1..3
// carried along the trajectory; zeta2/zeta3 store unique entries only.
struct AugmentedState {
  Eigen::VectorXd x;
  Eigen::VectorXd zeta1;
  Eigen::VectorXd zeta2;  // n2 unique entries
  Eigen::VectorXd zeta3;  // n3 unique entries
  double running_loss = 0.0;

  double z2(const SymLayout& sym, int i, int j) const {
    return zeta2[sym.idx2(i, j)];
  }
  double z3(const SymLayout& sym, int i, int j, int k) const {
    return zeta3[sym.idx3(i, j, k)];
  }
};

// Flat layout [x | zeta1 | zeta2 | zeta3 | running_loss] used by the
// integrators and the adjoint.
struct StateLayout {
  int d;
  SymLayout sym;
  int off_x, off_z1, off_z2, off_z3, off_loss, size;

  explicit StateLayout(int dim)
      : d(dim),
        sym(dim),
        off_x(0),
        off_z1(dim),
        off_z2(2 * dim),
        off_z3(2 * dim + sym.n2()),
        off_loss(2 * dim + sym.n2() + sym.n3()),
        size(2 * dim + sym.n2() + sym.n3() + 1) {}

  int state_dim() const { return size - 1; }  // without running loss

  Eigen::VectorXd pack(const AugmentedState& s) const {
    Eigen::VectorXd y(size);
    y.segment(off_x, d) = s.x;
    y.segment(off_z1, d) = s.zeta1;
    y.segment(off_z2, sym.n2()) = s.zeta2;
    y.segment(off_z3, sym.n3()) = s.zeta3;
    y[off_loss] = s.running_loss;
    return y;
  }
  AugmentedState unpack(const Eigen::VectorXd& y) const {
    AugmentedState s;
    s.x = y.segment(off_x, d);
    s.zeta1 = y.segment(off_z1, d);
    s.zeta2 = y.segment(off_z2, sym.n2());
    s.zeta3 = y.segment(off_z3, sym.n3());
    s.running_loss = y[off_loss];
    return s;
  }
};

inline AugmentedState init_state(const Eigen::VectorXd& x0,
                                 const GaussianInitial& init) {
  const int d = init.dim();
  SymLayout sym(d);
  AugmentedState s;
  s.x = x0;
  s.zeta1 = -init.inv() * (x0 - init.mu0());
  s.zeta2.resize(sym.n2());
  for (int slot = 0; slot < sym.n2(); ++slot) {
    auto [i, j] = sym.pair(slot);
    s.zeta2[slot] = -init.inv()(i, j);
  }
  s.zeta3 = Eigen::VectorXd::Zero(sym.n3());
  s.running_loss = 0.0;
  return s;
}

// Index-explicit right-hand sides of the log-density derivative transport.
// The zeta accessors take full index tuples so tests can probe permuted
// entries against the same formula the production path uses.
template <class Z1, class Z2>
double zeta2_rhs_entry(const FieldJet& F, Z1&& z1, Z2&& z2, int i, int j,
                       int term_ij) {
  const int d = F.dim();
  double acc = -F.div_partial(term_ij);
  double s1 = 0.0, s2 = 0.0, s3 = 0.0;
  for (int k = 0; k < d; ++k) {
    s1 += z2(i, k) * F.partial(k, 1 + j);
    s2 += z2(j, k) * F.partial(k, 1 + i);
    s3 += F.partial(k, term_ij) * z1(k);
  }
  return acc - s1 - s2 - s3;
}

template <class Z1, class Z2, class Z3>
double zeta3_rhs_entry(const FieldJet& F, Z1&& z1, Z2&& z2, Z3&& z3, int i,
                       int j, int k, int term_ij, int term_ik, int term_jk,
                       int term_ijk) {
  const int d = F.dim();
  double acc = -F.div_partial(term_ijk);
  double s3 = 0.0, s2 = 0.0, s1 = 0.0;
  for (int m = 0; m < d; ++m) {
    s3 += z3(i, j, m) * F.partial(m, 1 + k) + z3(i, k, m) * F.partial(m, 1 + j) +
          z3(j, k, m) * F.partial(m, 1 + i);
    s2 += z2(i, m) * F.partial(m, term_jk) + z2(j, m) * F.partial(m, term_ik) +
          z2(k, m) * F.partial(m, term_ij);
    s1 += z1(m) * F.partial(m, term_ijk);
  }
  return acc - s3 - s2 - s1;
}

// delta^0 = f + grad V + zeta1, delta^1 = Df + hess V + zeta2,
// delta^2 = D^2 f + zeta3 (third derivative of a quadratic V vanishes).
struct Residual {
  Eigen::VectorXd d0;
  Eigen::MatrixXd d1;
  std::vector<double> d2;  // full (i*d + j)*d + k layout
  int d = 0;

  double& t2(int i, int j, int k) { return d2[(i * d + j) * d + k]; }
  double t2(int i, int j, int k) const { return d2[(i * d + j) * d + k]; }
  double g() const {
    double acc = d0.squaredNorm() + d1.squaredNorm();
    for (double v : d2) acc += v * v;
    return acc;
  }
};

inline double loss_integrand_g(const Residual& r) { return r.g(); }

// Buffers and the flattened RHS for one trajectory of the augmented system.
template <class Field, class Potential = QuadraticPotential>
class TrajectoryEngine {
 public:
  TrajectoryEngine(const Field& field, const Potential& pot, int order = 4)
      : field_(field),
        pot_(pot),
        layout_(pot.dim()),
        space_(pot.dim(), order),
        rk4_(layout_.size) {
    const int d = layout_.d;
    xbuf_.resize(d);
    gradv_.resize(d);
    term2_.assign(d * d, -1);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        term2_[i * d + j] = space_.raise(1 + i, j);
    term3_.assign(d * d * d, -1);
    if (order >= 3)
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
          for (int k = 0; k < d; ++k)
            term3_[(i * d + j) * d + k] = space_.raise(term2_[i * d + j], k);
    res_.d = d;
    res_.d0.resize(d);
    res_.d1.resize(d, d);
    res_.d2.assign(d * d * d, 0.0);
  }

  const StateLayout& layout() const { return layout_; }
  const JetSpace& space() const { return space_; }
  const Field& field() const { return field_; }
  const Potential& potential() const { return pot_; }

  int term2(int i, int j) const { return term2_[i * layout_.d + j]; }
  int term3(int i, int j, int k) const {
    return term3_[(i * layout_.d + j) * layout_.d + k];
  }

  void rhs(double t, const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
    const int d = layout_.d;
    const SymLayout& sym = layout_.sym;
    xbuf_ = y.segment(layout_.off_x, d);
    field_.eval_jet(t, xbuf_, space_, jet_, ws_);
    auto z1 = [&](int i) { return y[layout_.off_z1 + i]; };
    auto z2 = [&](int i, int j) { return y[layout_.off_z2 + sym.idx2(i, j)]; };
    auto z3 = [&](int i, int j, int k) {
      return y[layout_.off_z3 + sym.idx3(i, j, k)];
    };

    dy.resize(layout_.size);
    for (int i = 0; i < d; ++i) dy[layout_.off_x + i] = jet_.value(i);

    for (int j = 0; j < d; ++j) {
      double acc = -jet_.div_partial(1 + j);
      for (int i = 0; i < d; ++i) acc -= jet_.partial(i, 1 + j) * z1(i);
      dy[layout_.off_z1 + j] = acc;
    }

    for (int slot = 0; slot < sym.n2(); ++slot) {
      auto [i, j] = sym.pair(slot);
      dy[layout_.off_z2 + slot] =
          zeta2_rhs_entry(jet_, z1, z2, i, j, term2(i, j));
    }

    for (int slot = 0; slot < sym.n3(); ++slot) {
      auto [i, j, k] = sym.triple(slot);
      dy[layout_.off_z3 + slot] =
          zeta3_rhs_entry(jet_, z1, z2, z3, i, j, k, term2(i, j), term2(i, k),
                          term2(j, k), term3(i, j, k));
    }

    fill_residual(y);
    dy[layout_.off_loss] = res_.g();
  }

  const Residual& compute_residual(double t, const Eigen::VectorXd& y) {
    const int d = layout_.d;
    xbuf_ = y.segment(layout_.off_x, d);
    field_.eval_jet(t, xbuf_, space_, jet_, ws_);
    fill_residual(y);
    return res_;
  }

  const FieldJet& jet() const { return jet_; }

  // integrate from s0 over [0, T]; observer(step, t, flat_state) fires at
  // every node including t = 0
  template <class Obs>
  std::pair<double, AugmentedState> run(const AugmentedState& s0,
                                        const IntegratorSpec& spec, Obs&& obs) {
    int n = spec.steps();
    Eigen::VectorXd y = layout_.pack(s0);
    obs(0, 0.0, y);
    auto rhs_fn = [this](double t, const Eigen::VectorXd& yy,
                         Eigen::VectorXd& dyy) { rhs(t, yy, dyy); };
    for (int s = 0; s < n; ++s) {
      double t = s * spec.dt;
      rk4_.step(rhs_fn, t, spec.dt, y);
      if (!all_finite(y)) throw DivergenceError((s + 1) * spec.dt);
      obs(s + 1, (s + 1) * spec.dt, y);
    }
    return {y[layout_.off_loss], layout_.unpack(y)};
  }

  std::pair<double, AugmentedState> run(const AugmentedState& s0,
                                        const IntegratorSpec& spec) {
    return run(s0, spec, [](int, double, const Eigen::VectorXd&) {});
  }

 private:
  void fill_residual(const Eigen::VectorXd& y) {
    const int d = layout_.d;
    const SymLayout& sym = layout_.sym;
    gradv_.noalias() = pot_.hess() * (xbuf_ - pot_.mu_inf());
    for (int i = 0; i < d; ++i)
      res_.d0[i] = jet_.value(i) + gradv_[i] + y[layout_.off_z1 + i];
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        res_.d1(i, j) = jet_.partial(i, 1 + j) + pot_.hess()(i, j) +
                        y[layout_.off_z2 + sym.idx2(i, j)];
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        for (int k = 0; k < d; ++k)
          res_.t2(i, j, k) = jet_.partial(i, term2(j, k)) + pot_.third(i, j, k) +
                             y[layout_.off_z3 + sym.idx3(i, j, k)];
  }

  const Field& field_;
  const Potential& pot_;
  StateLayout layout_;
  JetSpace space_;
  Rk4 rk4_;
  FieldJet jet_;
  typename Field::Workspace ws_;
  Eigen::VectorXd xbuf_, gradv_;
  std::vector<int> term2_, term3_;
  Residual res_;
};

// Spec-level conveniences (tests use these; hot paths use the engine).
template <class Field>
AugmentedState state_velocity(const Field& field, const QuadraticPotential& pot,
                              double t, const AugmentedState& s) {
  TrajectoryEngine<Field> eng(field, pot, 4);
  Eigen::VectorXd y = eng.layout().pack(s);
  Eigen::VectorXd dy;
  eng.rhs(t, y, dy);
  AugmentedState ds = eng.layout().unpack(dy);
  ds.running_loss = 0.0;
  return ds;
}

template <class Field>
Residual residual(const Field& field, const QuadraticPotential& pot, double t,
                  const AugmentedState& s) {
  TrajectoryEngine<Field> eng(field, pot, 4);
  Eigen::VectorXd y = eng.layout().pack(s);
  return eng.compute_residual(t, y);
}

template <class Field>
std::pair<double, AugmentedState> trajectory_loss(const Field& field,
                                                  const QuadraticPotential& pot,
                                                  const GaussianInitial& init,
                                                  const Eigen::VectorXd& x0,
                                                  const IntegratorSpec& spec) {
  TrajectoryEngine<Field> eng(field, pot, 4);
  return eng.run(init_state(x0, init), spec);
}

struct EstimateResult {
  double mean = 0.0;
  std::optional<double> std_error;  // absent for n = 1
};

// Monte Carlo estimate of the self-consistency potential. Deterministic for
// a fixed seed: each sample has its own derived stream and the reduction
// runs in index order regardless of worker count.
template <class Field>
EstimateResult estimate_R(const Field& field, const QuadraticPotential& pot,
                          const GaussianInitial& init, int n,
                          std::uint64_t seed, const IntegratorSpec& spec) {
  if (n < 1) throw ConfigError("estimate_R needs at least one sample");
  std::vector<double> losses(n);
  parallel_ranges(static_cast<std::size_t>(n), [&](std::size_t b, std::size_t e) {
    TrajectoryEngine<Field> eng(field, pot, 4);
    for (std::size_t i = b; i < e; ++i) {
      Rng rng(substream_seed(seed, i));
      Eigen::VectorXd x0 = init.sample(rng);
      try {
        losses[i] = eng.run(init_state(x0, init), spec).first;
      } catch (const DivergenceError& err) {
        throw DivergenceError(err.time, static_cast<long>(i));
      }
    }
  });
  double mean = 0.0;
  for (double v : losses) mean += v;
  mean /= n;
  EstimateResult out{mean, std::nullopt};
  if (n > 1) {
    double ss = 0.0;
    for (double v : losses) ss += (v - mean) * (v - mean);
    out.std_error = std::sqrt(ss / (n - 1) / n);
  }
  return out;
}

}  // namespace fpesc
