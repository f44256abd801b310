#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

#include "fpesc/adjoint.hpp"

namespace fpesc {

enum class OptimizerKind { adam, sgd };

struct TrainConfig {
  int steps = 500;
  int batch = 32;
  double lr = 1e-3;
  OptimizerKind optimizer = OptimizerKind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 42;
  IntegratorSpec spec{1e-2, 3.0};
  int log_every = 10;
  int checkpoint_every = 100;
  std::string out_dir;  // empty: keep everything in memory

  void validate() const {
    if (steps < 1) throw ConfigError("training needs steps >= 1");
    if (batch < 1) throw ConfigError("training needs batch >= 1");
    if (lr < 0.0) throw ConfigError("learning rate must be nonnegative");
    if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
      throw ConfigError("adam betas must lie in [0, 1)");
    spec.steps();
  }
};

struct TrainLogRow {
  int step;
  double loss_mean;
  double loss_se;
  double grad_norm;
  double ms;
};

struct TrainLog {
  std::vector<TrainLogRow> rows;

  void write_csv(std::ostream& os) const {
    os << "step,loss_mean,loss_se,grad_norm,ms\n";
    os << std::setprecision(17);
    for (const auto& r : rows)
      os << r.step << ',' << r.loss_mean << ',' << r.loss_se << ','
         << r.grad_norm << ',' << r.ms << '\n';
  }
};

class AdamState {
 public:
  explicit AdamState(Eigen::Index n)
      : m_(Eigen::VectorXd::Zero(n)), v_(Eigen::VectorXd::Zero(n)) {}

  void apply(Eigen::VectorXd& params, const Eigen::VectorXd& grad, double lr,
             double beta1, double beta2, double eps) {
    ++t_;
    m_ = beta1 * m_ + (1.0 - beta1) * grad;
    v_ = beta2 * v_ + (1.0 - beta2) * grad.cwiseProduct(grad);
    double bc1 = 1.0 - std::pow(beta1, t_);
    double bc2 = 1.0 - std::pow(beta2, t_);
    for (Eigen::Index i = 0; i < params.size(); ++i)
      params[i] -= lr * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + eps);
  }

 private:
  Eigen::VectorXd m_, v_;
  long t_ = 0;
};

namespace detail {

// batch of (loss, gradient) samples with per-sample statistics; reduction is
// index-ordered so results do not depend on the worker count
template <class Potential>
struct BatchGrad {
  double loss_mean = 0.0;
  double loss_se = 0.0;
  Eigen::VectorXd grad;
};

template <class Potential>
BatchGrad<Potential> batch_gradient(const MlpField& field, const Potential& pot,
                                    const GaussianInitial& init, int n,
                                    std::uint64_t seed,
                                    const IntegratorSpec& spec) {
  std::vector<double> losses(n);
  std::vector<Eigen::VectorXd> grads(n);
  parallel_ranges(static_cast<std::size_t>(n), [&](std::size_t b, std::size_t e) {
    AdjointEngine<Potential> eng(field, pot);
    for (std::size_t i = b; i < e; ++i) {
      Rng rng(substream_seed(seed, i));
      Eigen::VectorXd x0 = init.sample(rng);
      try {
        GradResult r = eng.run(init, x0, spec);
        losses[i] = r.loss;
        grads[i] = std::move(r.grad);
      } catch (const DivergenceError& err) {
        throw DivergenceError(err.time, static_cast<long>(i));
      }
    }
  });
  BatchGrad<Potential> out;
  out.grad = Eigen::VectorXd::Zero(field.param_count());
  for (int i = 0; i < n; ++i) {
    out.loss_mean += losses[i];
    out.grad += grads[i];
  }
  out.loss_mean /= n;
  out.grad /= n;
  if (n > 1) {
    double ss = 0.0;
    for (double v : losses) ss += (v - out.loss_mean) * (v - out.loss_mean);
    out.loss_se = std::sqrt(ss / (n - 1) / n);
  }
  return out;
}

}  // namespace detail

inline void write_checkpoint(const MlpField& field, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write checkpoint: " + path);
  os << field.to_json().dump(1) << '\n';
}

inline MlpField load_checkpoint(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read checkpoint: " + path);
  nlohmann::json j;
  is >> j;
  return MlpField::from_json(j);
}

// Stochastic minimization of the self-consistency potential. Fresh starts
// are drawn every step; the final checkpoint is always written, and a
// divergent step aborts without applying the update so the last good
// checkpoint survives.
template <class Potential = QuadraticPotential>
TrainLog train(MlpField& field, const Potential& pot,
               const GaussianInitial& init, const TrainConfig& cfg) {
  cfg.validate();
  namespace fs = std::filesystem;
  const bool to_disk = !cfg.out_dir.empty();
  if (to_disk) fs::create_directories(cfg.out_dir);

  auto checkpoint_path = [&](int step) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "checkpoint_%06d.json", step);
    return (fs::path(cfg.out_dir) / buf).string();
  };

  TrainLog log;
  Eigen::VectorXd params;
  field.get_params(params);
  AdamState adam(params.size());

  auto flush_log = [&]() {
    if (!to_disk) return;
    std::ofstream os(fs::path(cfg.out_dir) / "train_log.csv");
    log.write_csv(os);
  };

  for (int step = 0; step < cfg.steps; ++step) {
    auto tic = std::chrono::steady_clock::now();
    std::uint64_t step_seed = substream_seed(cfg.seed, 0x70000000ull + step);
    detail::BatchGrad<Potential> g;
    try {
      g = detail::batch_gradient(field, pot, init, cfg.batch, step_seed,
                                 cfg.spec);
    } catch (const DivergenceError&) {
      flush_log();
      if (to_disk) write_checkpoint(field, checkpoint_path(step));
      throw;
    }
    if (!all_finite(g.grad) || !std::isfinite(g.loss_mean)) {
      flush_log();
      if (to_disk) write_checkpoint(field, checkpoint_path(step));
      throw DivergenceError(cfg.spec.T);
    }

    if (cfg.optimizer == OptimizerKind::adam)
      adam.apply(params, g.grad, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
    else
      params -= cfg.lr * g.grad;
    field.set_params(params);

    double ms = std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - tic)
                    .count();
    if (step % cfg.log_every == 0 || step == cfg.steps - 1)
      log.rows.push_back({step, g.loss_mean, g.loss_se, g.grad.norm(), ms});
    if (to_disk && cfg.checkpoint_every > 0 &&
        (step + 1) % cfg.checkpoint_every == 0)
      write_checkpoint(field, checkpoint_path(step + 1));
  }

  if (to_disk) {
    write_checkpoint(field,
                     (fs::path(cfg.out_dir) / "checkpoint_final.json").string());
    flush_log();
  }
  return log;
}

}  // namespace fpesc
