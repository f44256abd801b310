#pragma once

#include <Eigen/Dense>
#include <map>
#include <utility>
#include <vector>

#include "fpesc/selfcons.hpp"

namespace fpesc {

// States at every RK4 node and midpoint over [0, T]; the backward pass reads
// only these, never re-solving the forward ODE. Midpoints are filled at tape
// time from cubic Hermite interpolation of adjacent nodes and their stored
// derivatives, which matches the node accuracy order.
struct ForwardTape {
  double dt = 0.0;
  int n_steps = 0;
  std::vector<Eigen::VectorXd> slots;  // 2 n_steps + 1 states (with loss)

  double slot_time(int s) const { return 0.5 * dt * s; }
  int n_slots() const { return 2 * n_steps + 1; }
};

namespace detail {

// d psi / d state and d g / d state at one tape state, in the unique
// coordinates [x | z1 | z2 | z3]. Linear in the jet entries and in zeta.
template <class Field, class Potential>
class SlotAssembler {
 public:
  SlotAssembler(const Field& field, const Potential& pot)
      : field_(field),
        pot_(pot),
        layout_(pot.dim()),
        space5_(pot.dim(), 5),
        D_(layout_.state_dim()) {
    const int d = layout_.d;
    t2_.assign(d * d, -1);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) t2_[i * d + j] = space5_.raise(1 + i, j);
    t3_.assign(d * d * d, -1);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        for (int k = 0; k < d; ++k)
          t3_[(i * d + j) * d + k] = space5_.raise(t2_[i * d + j], k);
    t4_.assign(d * d * d * d, -1);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        for (int k = 0; k < d; ++k)
          for (int m = 0; m < d; ++m)
            t4_[((i * d + j) * d + k) * d + m] =
                space5_.raise(t3_[(i * d + j) * d + k], m);
  }

  const StateLayout& layout() const { return layout_; }
  int state_dim() const { return D_; }

  void assemble(double t, const Eigen::VectorXd& y, Eigen::MatrixXd& M,
                Eigen::VectorXd& gs) {
    const int d = layout_.d;
    const SymLayout& sym = layout_.sym;
    Eigen::VectorXd x = y.segment(layout_.off_x, d);
    field_.eval_jet(t, x, space5_, jet_, ws_);

    auto P1 = [&](int i, int j) { return jet_.partial(i, 1 + j); };
    auto P2 = [&](int i, int j, int k) {
      return jet_.partial(i, t2_[j * d + k]);
    };
    auto P3 = [&](int i, int j, int k, int l) {
      return jet_.partial(i, t3_[(j * d + k) * d + l]);
    };
    auto P4 = [&](int i, int j, int k, int l, int m) {
      return jet_.partial(i, t4_[((j * d + k) * d + l) * d + m]);
    };
    auto p = [&](int i) { return y[layout_.off_z1 + i]; };
    auto Q = [&](int i, int j) { return y[layout_.off_z2 + sym.idx2(i, j)]; };
    auto R = [&](int i, int j, int k) {
      return y[layout_.off_z3 + sym.idx3(i, j, k)];
    };

    M.setZero(D_, D_);
    const int ox = layout_.off_x, oz1 = layout_.off_z1, oz2 = layout_.off_z2,
              oz3 = layout_.off_z3;

    for (int i = 0; i < d; ++i)
      for (int m = 0; m < d; ++m) M(ox + i, ox + m) = P1(i, m);

    for (int j = 0; j < d; ++j) {
      for (int m = 0; m < d; ++m) {
        double acc = -jet_.div_partial(t2_[j * d + m]);
        for (int i = 0; i < d; ++i) acc -= P2(i, j, m) * p(i);
        M(oz1 + j, ox + m) = acc;
      }
      for (int i = 0; i < d; ++i) M(oz1 + j, oz1 + i) = -P1(i, j);
    }

    for (int slot = 0; slot < sym.n2(); ++slot) {
      auto [i, j] = sym.pair(slot);
      int row = oz2 + slot;
      for (int m = 0; m < d; ++m) {
        double acc = -jet_.div_partial(t3_[(i * d + j) * d + m]);
        for (int k = 0; k < d; ++k)
          acc -= Q(i, k) * P2(k, j, m) + Q(j, k) * P2(k, i, m) +
                 P3(k, i, j, m) * p(k);
        M(row, ox + m) = acc;
      }
      for (int k = 0; k < d; ++k) M(row, oz1 + k) = -P2(k, i, j);
      for (int cs = 0; cs < sym.n2(); ++cs) {
        auto [a, b] = sym.pair(cs);
        double val = -(i == a ? P1(b, j) : 0.0) - (j == a ? P1(b, i) : 0.0);
        if (a != b)
          val += -(i == b ? P1(a, j) : 0.0) - (j == b ? P1(a, i) : 0.0);
        M(row, oz2 + cs) = val;
      }
    }

    for (int slot = 0; slot < sym.n3(); ++slot) {
      auto [i, j, k] = sym.triple(slot);
      int row = oz3 + slot;
      for (int n = 0; n < d; ++n) {
        double acc = -jet_.div_partial(t4_[((i * d + j) * d + k) * d + n]);
        for (int m = 0; m < d; ++m) {
          acc -= R(i, j, m) * P2(m, k, n) + R(i, k, m) * P2(m, j, n) +
                 R(j, k, m) * P2(m, i, n);
          acc -= Q(i, m) * P3(m, j, k, n) + Q(j, m) * P3(m, i, k, n) +
                 Q(k, m) * P3(m, i, j, n);
          acc -= p(m) * P4(m, i, j, k, n);
        }
        M(row, ox + n) = acc;
      }
      for (int m = 0; m < d; ++m) M(row, oz1 + m) = -P3(m, i, j, k);
      for (int cs = 0; cs < sym.n2(); ++cs) {
        auto [a, b] = sym.pair(cs);
        double val = 0.0;
        auto add = [&](int c, int dd) {
          val += -(i == c ? P2(dd, j, k) : 0.0) - (j == c ? P2(dd, i, k) : 0.0) -
                 (k == c ? P2(dd, i, j) : 0.0);
        };
        add(a, b);
        if (a != b) add(b, a);
        M(row, oz2 + cs) = val;
      }
      for (int cs = 0; cs < sym.n3(); ++cs) {
        double val = 0.0;
        for (const auto& perm : sym.orbit3(cs)) {
          int u = perm[0], v = perm[1], w = perm[2];
          if (i == u && j == v) val -= P1(w, k);
          if (i == u && k == v) val -= P1(w, j);
          if (j == u && k == v) val -= P1(w, i);
        }
        M(row, oz3 + cs) = val;
      }
    }

    // residual channels for dg/ds
    Eigen::VectorXd gradv = pot_.hess() * (x - pot_.mu_inf());
    Eigen::VectorXd d0(d);
    Eigen::MatrixXd d1(d, d);
    std::vector<double> d2(d * d * d);
    for (int i = 0; i < d; ++i) d0[i] = jet_.value(i) + gradv[i] + p(i);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        d1(i, j) = P1(i, j) + pot_.hess()(i, j) + Q(i, j);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        for (int k = 0; k < d; ++k)
          d2[(i * d + j) * d + k] = P2(i, j, k) + pot_.third(i, j, k) + R(i, j, k);

    gs.setZero(D_);
    for (int m = 0; m < d; ++m) {
      double acc = 0.0;
      for (int i = 0; i < d; ++i)
        acc += 2.0 * d0[i] * (P1(i, m) + pot_.hess()(i, m));
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
          acc += 2.0 * d1(i, j) * (P2(i, j, m) + pot_.third(i, j, m));
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
          for (int k = 0; k < d; ++k)
            acc += 2.0 * d2[(i * d + j) * d + k] *
                   (P3(i, j, k, m) + pot_.fourth(i, j, k, m));
      gs[ox + m] = acc;
    }
    for (int i = 0; i < d; ++i) gs[oz1 + i] = 2.0 * d0[i];
    for (int slot = 0; slot < sym.n2(); ++slot) {
      auto [a, b] = sym.pair(slot);
      gs[oz2 + slot] = (a == b) ? 2.0 * d1(a, a) : 2.0 * (d1(a, b) + d1(b, a));
    }
    for (int slot = 0; slot < sym.n3(); ++slot) {
      double acc = 0.0;
      for (const auto& perm : layout_.sym.orbit3(slot))
        acc += 2.0 * d2[(perm[0] * d + perm[1]) * d + perm[2]];
      gs[oz3 + slot] = acc;
    }
  }

 private:
  const Field& field_;
  const Potential& pot_;
  StateLayout layout_;
  JetSpace space5_;
  int D_;
  FieldJet jet_;
  typename Field::Workspace ws_;
  std::vector<int> t2_, t3_, t4_;
};

}  // namespace detail

// da/dt = -(d psi/d s)^T a - (d g/d s)^T at one state; a is laid out like the
// flat state without the running-loss component.
template <class Field, class Potential = QuadraticPotential>
Eigen::VectorXd adjoint_velocity(const Field& field, const Potential& pot,
                                 double t, const AugmentedState& s,
                                 const Eigen::VectorXd& a) {
  detail::SlotAssembler<Field, Potential> asmr(field, pot);
  Eigen::VectorXd y = asmr.layout().pack(s);
  Eigen::MatrixXd M;
  Eigen::VectorXd gs;
  asmr.assemble(t, y, M, gs);
  return -M.transpose() * a - gs;
}

struct GradResult {
  double loss = 0.0;
  Eigen::VectorXd grad;
};

// Forward solve, tape fill, backward costate sweep, then one parameter
// reverse sweep per tape slot with the RK4-weighted costate sums as seeds.
template <class Potential = QuadraticPotential>
class AdjointEngine {
 public:
  AdjointEngine(const MlpField& field, const Potential& pot)
      : field_(field),
        pot_(pot),
        traj_(field, pot, 4),
        asmr_(field, pot),
        layout_(pot.dim()),
        space4_(pot.dim(), 4),
        D_(layout_.state_dim()) {
    const int d = layout_.d;
    t2_.assign(d * d, -1);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) t2_[i * d + j] = space4_.raise(1 + i, j);
    t3_.assign(d * d * d, -1);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        for (int k = 0; k < d; ++k)
          t3_[(i * d + j) * d + k] = space4_.raise(t2_[i * d + j], k);
  }

  GradResult run(const GaussianInitial& init, const Eigen::VectorXd& x0,
                 const IntegratorSpec& spec) {
    const int n = spec.steps();
    const double h = spec.dt;

    // forward: nodes and node derivatives
    std::vector<Eigen::VectorXd> nodes(n + 1), derivs(n + 1);
    Eigen::VectorXd y = layout_.pack(init_state(x0, init));
    Rk4 rk(layout_.size);
    auto rhs_fn = [this](double t, const Eigen::VectorXd& yy,
                         Eigen::VectorXd& dyy) { traj_.rhs(t, yy, dyy); };
    for (int s = 0; s < n; ++s) {
      nodes[s] = y;
      derivs[s].resize(layout_.size);
      rk.step_with_start_derivative(rhs_fn, s * h, h, y, derivs[s]);
      if (!all_finite(y)) throw DivergenceError((s + 1) * h);
    }
    nodes[n] = y;
    derivs[n].resize(layout_.size);
    traj_.rhs(n * h, y, derivs[n]);

    GradResult out;
    out.loss = y[layout_.off_loss];
    out.grad = Eigen::VectorXd::Zero(field_.param_count());
    if (n == 0) return out;

    // tape: nodes at even slots, Hermite midpoints at odd slots
    ForwardTape tape;
    tape.dt = h;
    tape.n_steps = n;
    tape.slots.resize(2 * n + 1);
    for (int s = 0; s <= n; ++s) tape.slots[2 * s] = nodes[s];
    for (int s = 0; s < n; ++s)
      tape.slots[2 * s + 1] = 0.5 * (nodes[s] + nodes[s + 1]) +
                              (h / 8.0) * (derivs[s] - derivs[s + 1]);

    // backward costate sweep with per-slot weighted costate sums
    Eigen::MatrixXd wsum = Eigen::MatrixXd::Zero(D_, 2 * n + 1);
    Eigen::VectorXd wscal = Eigen::VectorXd::Zero(2 * n + 1);
    std::map<int, std::pair<Eigen::MatrixXd, Eigen::VectorXd>> cache;
    auto fetch = [&](int slot) -> std::pair<Eigen::MatrixXd, Eigen::VectorXd>& {
      auto it = cache.find(slot);
      if (it == cache.end()) {
        auto& entry = cache[slot];
        asmr_.assemble(tape.slot_time(slot), tape.slots[slot], entry.first,
                       entry.second);
        return entry;
      }
      return it->second;
    };
    auto rhs_a = [&](int slot, const Eigen::VectorXd& a) -> Eigen::VectorXd {
      auto& [M, gs] = fetch(slot);
      return -M.transpose() * a - gs;
    };

    Eigen::VectorXd a = Eigen::VectorXd::Zero(D_);
    const double w6 = h / 6.0;
    for (int s = n - 1; s >= 0; --s) {
      const int hi = 2 * s + 2, mid = 2 * s + 1, lo = 2 * s;
      const double hh = -h;
      Eigen::VectorXd k1 = rhs_a(hi, a);
      Eigen::VectorXd a2 = a + 0.5 * hh * k1;
      Eigen::VectorXd k2 = rhs_a(mid, a2);
      Eigen::VectorXd a3 = a + 0.5 * hh * k2;
      Eigen::VectorXd k3 = rhs_a(mid, a3);
      Eigen::VectorXd a4 = a + hh * k3;
      Eigen::VectorXd k4 = rhs_a(lo, a4);

      wsum.col(hi) += w6 * a;
      wscal[hi] += w6;
      wsum.col(mid) += (2.0 * w6) * (a2 + a3);
      wscal[mid] += 4.0 * w6;
      wsum.col(lo) += w6 * a4;
      wscal[lo] += w6;

      a += (hh / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      if (!all_finite(a)) throw DivergenceError(s * h);
      cache.erase(hi);  // no longer reachable
      cache.erase(mid);
    }

    // parameter sweep: one reverse pass per slot with the combined seed
    const int d = layout_.d;
    const SymLayout& sym = layout_.sym;
    std::vector<std::vector<double>> cot(d, std::vector<double>(space4_.size()));
    for (int slot = 0; slot <= 2 * n; ++slot) {
      const Eigen::VectorXd& ys = tape.slots[slot];
      const double t = tape.slot_time(slot);
      Eigen::VectorXd x = ys.segment(layout_.off_x, d);
      field_.eval_jet_tape(t, x, space4_, jet_, mlp_tape_);
      for (auto& row : cot) std::fill(row.begin(), row.end(), 0.0);

      auto p = [&](int i) { return ys[layout_.off_z1 + i]; };
      auto Q = [&](int i, int j) { return ys[layout_.off_z2 + sym.idx2(i, j)]; };
      auto R = [&](int i, int j, int k) {
        return ys[layout_.off_z3 + sym.idx3(i, j, k)];
      };
      const Eigen::VectorXd& A = wsum.col(slot);
      const double W = wscal[slot];

      // a^T dpsi/dtheta, routed through the field jet entries
      for (int i = 0; i < d; ++i) cot[i][0] += A[layout_.off_x + i];
      for (int j = 0; j < d; ++j) {
        double aj = A[layout_.off_z1 + j];
        if (aj != 0.0) {
          for (int m = 0; m < d; ++m) cot[m][t2_[j * d + m]] -= aj;
          for (int i = 0; i < d; ++i) cot[i][1 + j] -= aj * p(i);
        }
      }
      for (int slot2 = 0; slot2 < sym.n2(); ++slot2) {
        auto [i, j] = sym.pair(slot2);
        double a2 = A[layout_.off_z2 + slot2];
        if (a2 == 0.0) continue;
        for (int m = 0; m < d; ++m) cot[m][t3_[(i * d + j) * d + m]] -= a2;
        for (int k = 0; k < d; ++k) {
          cot[k][1 + j] -= a2 * Q(i, k);
          cot[k][1 + i] -= a2 * Q(j, k);
          cot[k][t2_[i * d + j]] -= a2 * p(k);
        }
      }
      for (int slot3 = 0; slot3 < sym.n3(); ++slot3) {
        auto [i, j, k] = sym.triple(slot3);
        double a3 = A[layout_.off_z3 + slot3];
        if (a3 == 0.0) continue;
        for (int m = 0; m < d; ++m) {
          int t4 = space4_.raise(t3_[(i * d + j) * d + k], m);
          cot[m][t4] -= a3;
          cot[m][1 + k] -= a3 * R(i, j, m);
          cot[m][1 + j] -= a3 * R(i, k, m);
          cot[m][1 + i] -= a3 * R(j, k, m);
          cot[m][t2_[j * d + k]] -= a3 * Q(i, m);
          cot[m][t2_[i * d + k]] -= a3 * Q(j, m);
          cot[m][t2_[i * d + j]] -= a3 * Q(k, m);
          cot[m][t3_[(i * d + j) * d + k]] -= a3 * p(m);
        }
      }

      // dg/dtheta with the slot's total quadrature weight
      if (W != 0.0) {
        Eigen::VectorXd gradv = pot_.hess() * (x - pot_.mu_inf());
        for (int i = 0; i < d; ++i) {
          double d0 = jet_.value(i) + gradv[i] + p(i);
          cot[i][0] += W * 2.0 * d0;
          for (int j = 0; j < d; ++j) {
            double d1 = jet_.partial(i, 1 + j) + pot_.hess()(i, j) + Q(i, j);
            cot[i][1 + j] += W * 2.0 * d1;
            for (int k = 0; k < d; ++k) {
              double d2 = jet_.partial(i, t2_[j * d + k]) +
                          pot_.third(i, j, k) + R(i, j, k);
              cot[i][t2_[j * d + k]] += W * 2.0 * d2;
            }
          }
        }
      }

      // extracted-value cotangents -> coefficient cotangents
      for (int i = 0; i < d; ++i)
        for (int c = 0; c < space4_.size(); ++c)
          cot[i][c] *= space4_.factorial(c);
      field_.vjp(mlp_tape_, cot, out.grad);
    }
    return out;
  }

 private:
  const MlpField& field_;
  const Potential& pot_;
  TrajectoryEngine<MlpField, Potential> traj_;
  detail::SlotAssembler<MlpField, Potential> asmr_;
  StateLayout layout_;
  JetSpace space4_;
  int D_;
  FieldJet jet_;
  MlpField::Tape mlp_tape_;
  std::vector<int> t2_, t3_;
};

template <class Potential = QuadraticPotential>
GradResult grad_trajectory(const MlpField& field, const Potential& pot,
                           const GaussianInitial& init,
                           const Eigen::VectorXd& x0,
                           const IntegratorSpec& spec) {
  AdjointEngine<Potential> eng(field, pot);
  return eng.run(init, x0, spec);
}

// Minibatch mean of (loss, gradient) over sampled starts. Per-sample derived
// streams and index-ordered reduction keep the result worker-count
// independent.
template <class Potential = QuadraticPotential>
GradResult grad_estimate_R(const MlpField& field, const Potential& pot,
                           const GaussianInitial& init, int n,
                           std::uint64_t seed, const IntegratorSpec& spec) {
  if (n < 1) throw ConfigError("grad_estimate_R needs at least one sample");
  std::vector<GradResult> results(n);
  parallel_ranges(static_cast<std::size_t>(n), [&](std::size_t b, std::size_t e) {
    AdjointEngine<Potential> eng(field, pot);
    for (std::size_t i = b; i < e; ++i) {
      Rng rng(substream_seed(seed, i));
      Eigen::VectorXd x0 = init.sample(rng);
      try {
        results[i] = eng.run(init, x0, spec);
      } catch (const DivergenceError& err) {
        throw DivergenceError(err.time, static_cast<long>(i));
      }
    }
  });
  GradResult out;
  out.grad = Eigen::VectorXd::Zero(field.param_count());
  for (const auto& r : results) {
    out.loss += r.loss;
    out.grad += r.grad;
  }
  out.loss /= n;
  out.grad /= n;
  return out;
}

}  // namespace fpesc
