#pragma once

#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fpesc/domain.hpp"
#include "fpesc/selfcons.hpp"

namespace fpesc {

// Space-time evaluation grid: the box [-10,10]^2 at spatial increment h and
// the stamps 0, 0.3, ..., 3.0; both weights are uniform.
struct EvalGrid {
  double lo = -10.0;
  double hi = 10.0;
  double h = 0.4;
  double t_max = 3.0;
  double t_step = 0.3;

  int per_axis() const {
    double n = (hi - lo) / h;
    long k = std::lround(n);
    if (k < 1 || std::abs(n - k) > 1e-9)
      throw ConfigError("grid increment must divide the box side");
    return static_cast<int>(k) + 1;
  }
  std::vector<double> axis() const {
    int n = per_axis();
    std::vector<double> xs(n);
    for (int i = 0; i < n; ++i) xs[i] = lo + h * i;
    return xs;
  }
  std::vector<double> stamps() const {
    long k = std::lround(t_max / t_step);
    std::vector<double> ts(k + 1);
    for (long i = 0; i <= k; ++i) ts[i] = t_step * i;
    return ts;
  }
};

// Density recovery along the reverse flow: solve the final value problem
// x' = f back to time zero while accumulating the divergence, then read the
// initial log density at the pulled-back point.
template <class Field>
class RecoveryEngine {
 public:
  RecoveryEngine(const Field& field, const GaussianInitial& init,
                 std::optional<DomainMode> torus = std::nullopt)
      : field_(field),
        init_(init),
        torus_(std::move(torus)),
        d_(init.dim()),
        space_(init.dim(), 1),
        rk_(init.dim() + 1),
        y_(init.dim() + 1),
        xbuf_(init.dim()) {}

  double log_density(double t, const Eigen::VectorXd& x, double dt) {
    int n = grid_steps(t, dt);
    y_.head(d_) = x;
    y_[d_] = 0.0;
    auto rhs = [this](double s, const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
      xbuf_ = y.head(d_);
      field_.eval_jet(s, xbuf_, space_, jet_, ws_);
      dy.resize(d_ + 1);
      for (int i = 0; i < d_; ++i) dy[i] = jet_.value(i);
      dy[d_] = jet_.div_partial(0);
    };
    for (int s = n; s > 0; --s) {
      rk_.step(rhs, s * dt, -dt, y_);
      if (!all_finite(y_)) throw DivergenceError((s - 1) * dt);
    }
    xbuf_ = y_.head(d_);
    double log_a0 = torus_ ? init_.wrapped_log_density(xbuf_, *torus_)
                           : init_.log_density(xbuf_);
    return log_a0 + y_[d_];
  }

 private:
  const Field& field_;
  const GaussianInitial& init_;
  std::optional<DomainMode> torus_;
  int d_;
  JetSpace space_;
  FieldJet jet_;
  typename Field::Workspace ws_;
  Rk4 rk_;
  Eigen::VectorXd y_, xbuf_;
};

template <class Field>
double recover_log_density(const Field& field, const GaussianInitial& init,
                           double t, const Eigen::VectorXd& x, double dt,
                           std::optional<DomainMode> torus = std::nullopt) {
  RecoveryEngine<Field> eng(field, init, std::move(torus));
  return eng.log_density(t, x, dt);
}

struct ScoreError {
  double total = 0.0;
  std::vector<double> per_stamp;
};

// mean squared deviation of the field from the analytic ground-truth
// velocity over the grid and stamps
template <class Field>
ScoreError score_error_ls(const Field& field, const GaussianPath& path,
                          const QuadraticPotential& pot, const EvalGrid& grid) {
  auto xs = grid.axis();
  auto ts = grid.stamps();
  const int n = static_cast<int>(xs.size());
  ScoreError out;
  out.per_stamp.reserve(ts.size());
  std::vector<double> cell(static_cast<std::size_t>(n) * n);
  for (double t : ts) {
    parallel_ranges(cell.size(), [&](std::size_t b, std::size_t e) {
      Eigen::VectorXd x(2);
      for (std::size_t idx = b; idx < e; ++idx) {
        x << xs[idx / n], xs[idx % n];
        Eigen::VectorXd err = field.eval(t, x) + path.score(t, x) + pot.grad(x);
        cell[idx] = err.squaredNorm();
      }
    });
    double acc = 0.0;
    for (double v : cell) acc += v;
    out.per_stamp.push_back(acc / cell.size());
  }
  for (double v : out.per_stamp) out.total += v;
  out.total /= static_cast<double>(out.per_stamp.size());
  return out;
}

struct DensityError {
  double total = 0.0;
  std::vector<double> per_stamp;
  std::vector<double> mass_per_stamp;
};

// mean absolute deviation between the analytic density and a hypothesis
// density evaluator rho(t, x)
template <class Rho>
DensityError density_error_ld(Rho&& rho, const GaussianPath& path,
                              const EvalGrid& grid) {
  auto xs = grid.axis();
  auto ts = grid.stamps();
  const int n = static_cast<int>(xs.size());
  DensityError out;
  for (double t : ts) {
    std::vector<double> diff(static_cast<std::size_t>(n) * n);
    std::vector<double> dens(diff.size());
    parallel_ranges(diff.size(), [&](std::size_t b, std::size_t e) {
      Eigen::VectorXd x(2);
      for (std::size_t idx = b; idx < e; ++idx) {
        x << xs[idx / n], xs[idx % n];
        double r = rho(t, x);
        double alpha = std::exp(path.log_density(t, x));
        dens[idx] = r;
        diff[idx] = std::abs(alpha - r);
      }
    });
    double acc = 0.0, mass = 0.0;
    for (std::size_t i = 0; i < diff.size(); ++i) {
      acc += diff[i];
      mass += dens[i];
    }
    out.per_stamp.push_back(acc / diff.size());
    out.mass_per_stamp.push_back(mass * grid.h * grid.h);
  }
  for (double v : out.per_stamp) out.total += v;
  out.total /= static_cast<double>(out.per_stamp.size());
  return out;
}

// density evaluator backed by reverse-flow recovery; parallel-safe via one
// engine per worker
template <class Field>
DensityError recovered_density_error(const Field& field,
                                     const GaussianInitial& init,
                                     const GaussianPath& path,
                                     const EvalGrid& grid, double dt) {
  auto xs = grid.axis();
  auto ts = grid.stamps();
  const int n = static_cast<int>(xs.size());
  DensityError out;
  for (double t : ts) {
    std::vector<double> diff(static_cast<std::size_t>(n) * n);
    std::vector<double> dens(diff.size());
    parallel_ranges(diff.size(), [&](std::size_t b, std::size_t e) {
      RecoveryEngine<Field> eng(field, init);
      Eigen::VectorXd x(2);
      for (std::size_t idx = b; idx < e; ++idx) {
        x << xs[idx / n], xs[idx % n];
        double r = std::exp(eng.log_density(t, x, dt));
        dens[idx] = r;
        diff[idx] = std::abs(std::exp(path.log_density(t, x)) - r);
      }
    });
    double acc = 0.0, mass = 0.0;
    for (std::size_t i = 0; i < diff.size(); ++i) {
      acc += diff[i];
      mass += dens[i];
    }
    out.per_stamp.push_back(acc / diff.size());
    out.mass_per_stamp.push_back(mass * grid.h * grid.h);
  }
  for (double v : out.per_stamp) out.total += v;
  out.total /= static_cast<double>(out.per_stamp.size());
  return out;
}

struct EvalReport {
  std::string checkpoint;
  double grid_h = 0.0;
  double dt = 0.0;
  double T = 0.0;
  std::vector<double> stamps;
  std::vector<double> ls_per_stamp;
  std::vector<double> ld_per_stamp;
  std::vector<double> mass_per_stamp;
  double ls = 0.0;
  double ld = 0.0;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["meta"] = {{"checkpoint", checkpoint},
                 {"grid_h", grid_h},
                 {"dt", dt},
                 {"T", T}};
    nlohmann::json arr = nlohmann::json::array();
    for (std::size_t i = 0; i < stamps.size(); ++i)
      arr.push_back({{"t", stamps[i]},
                     {"ls", ls_per_stamp[i]},
                     {"ld", ld_per_stamp[i]},
                     {"mass", mass_per_stamp[i]}});
    j["stamps"] = arr;
    j["aggregate"] = {{"ls", ls}, {"ld", ld}};
    return j;
  }

  void write_csv(std::ostream& os) const {
    os << "t,ls,ld,mass\n";
    os << std::setprecision(17);
    for (std::size_t i = 0; i < stamps.size(); ++i)
      os << stamps[i] << ',' << ls_per_stamp[i] << ',' << ld_per_stamp[i]
         << ',' << mass_per_stamp[i] << '\n';
  }
};

template <class Field>
EvalReport eval_report(const Field& field, const GaussianInitial& init,
                       const GaussianPath& path, const QuadraticPotential& pot,
                       const EvalGrid& grid, double recover_dt,
                       const std::string& checkpoint_id) {
  EvalReport rep;
  rep.checkpoint = checkpoint_id;
  rep.grid_h = grid.h;
  rep.dt = recover_dt;
  rep.T = grid.t_max;
  rep.stamps = grid.stamps();
  ScoreError ls = score_error_ls(field, path, pot, grid);
  DensityError ld = recovered_density_error(field, init, path, grid, recover_dt);
  rep.ls_per_stamp = ls.per_stamp;
  rep.ld_per_stamp = ld.per_stamp;
  rep.mass_per_stamp = ld.mass_per_stamp;
  rep.ls = ls.total;
  rep.ld = ld.total;
  return rep;
}

struct Lemma1Result {
  double lhs = 0.0;  // grid quadrature of g against the recovered density
  double rhs = 0.0;  // Monte Carlo mean of g over pushed-forward samples
  double std_error = 0.0;
  double z = 0.0;
};

// Change-of-variables identity on the torus: quadrature of a periodic test
// function against the recovered density versus the sample average along
// pushed-forward trajectories.
template <class Field, class G>
Lemma1Result lemma1_check(const Field& field, G&& g,
                          const GaussianInitial& init, const DomainMode& mode,
                          double t, int n, std::uint64_t seed, double dt,
                          int quad_per_axis = 64) {
  if (!mode.is_torus())
    throw ModeMismatchError("the change-of-variables check needs a torus");
  const int d = mode.dim;
  const double l = mode.l;
  int n_steps = grid_steps(t, dt);

  // left side: midpoint-rule quadrature (spectrally accurate for smooth
  // periodic integrands)
  long cells = 1;
  for (int i = 0; i < d; ++i) cells *= quad_per_axis;
  std::vector<double> vals(cells);
  double cell_vol = std::pow(l / quad_per_axis, d);
  parallel_ranges(static_cast<std::size_t>(cells), [&](std::size_t b,
                                                       std::size_t e) {
    RecoveryEngine<Field> eng(field, init, mode);
    Eigen::VectorXd x(d);
    for (std::size_t idx = b; idx < e; ++idx) {
      long rem = static_cast<long>(idx);
      for (int i = 0; i < d; ++i) {
        x[i] = -0.5 * l + (rem % quad_per_axis + 0.5) * (l / quad_per_axis);
        rem /= quad_per_axis;
      }
      vals[idx] = g(x) * std::exp(eng.log_density(t, x, dt));
    }
  });
  Lemma1Result out;
  for (double v : vals) out.lhs += v;
  out.lhs *= cell_vol;

  // right side: forward transport of samples from the initial law
  std::vector<double> gs(n);
  parallel_ranges(static_cast<std::size_t>(n), [&](std::size_t b, std::size_t e) {
    Rk4 rk(d);
    for (std::size_t i = b; i < e; ++i) {
      Rng rng(substream_seed(seed, i));
      Eigen::VectorXd x = init.sample(rng);
      auto rhs = [&](double s, const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
        dy = field.eval(s, y);
      };
      for (int s = 0; s < n_steps; ++s) rk.step(rhs, s * dt, dt, x);
      gs[i] = g(x);
    }
  });
  double mean = 0.0;
  for (double v : gs) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : gs) ss += (v - mean) * (v - mean);
  out.rhs = mean;
  out.std_error = n > 1 ? std::sqrt(ss / (n - 1) / n) : 0.0;
  out.z = out.std_error > 0 ? (out.lhs - out.rhs) / out.std_error
                            : (out.lhs == out.rhs ? 0.0
                                                  : std::numeric_limits<double>::infinity());
  return out;
}

}  // namespace fpesc
