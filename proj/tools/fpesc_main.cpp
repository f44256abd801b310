// fpesc: learn self-consistent velocity fields for Fokker-Planck dynamics
// and validate them against the analytic Gaussian benchmark.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "fpesc/config.hpp"
#include "fpesc/eval.hpp"
#include "fpesc/svg.hpp"
#include "fpesc/training.hpp"

namespace fs = std::filesystem;
using namespace fpesc;

namespace {

RunConfig load_config(const std::string& path) {
  if (path.empty()) return RunConfig{};
  return RunConfig::from_file(path);
}

int cmd_train(const std::string& config_path, const std::string& out_dir) {
  RunConfig cfg = load_config(config_path);
  if (!out_dir.empty()) cfg.training.out_dir = out_dir;
  if (cfg.training.out_dir.empty()) cfg.training.out_dir = "runs/latest";
  QuadraticPotential pot = cfg.potential();
  GaussianInitial init = cfg.initial();
  MlpField field = cfg.make_field();
  std::cout << "training " << cfg.training.steps << " steps, batch "
            << cfg.training.batch << ", dt " << cfg.integrator.dt << ", T "
            << cfg.integrator.T << " -> " << cfg.training.out_dir << "\n";
  TrainLog log = train(field, pot, init, cfg.training);
  if (!log.rows.empty())
    std::cout << "final objective " << log.rows.back().loss_mean << " after "
              << cfg.training.steps << " steps\n";
  std::cout << "checkpoint: "
            << (fs::path(cfg.training.out_dir) / "checkpoint_final.json").string()
            << "\n";
  return 0;
}

std::vector<std::pair<double, double>> read_train_log(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read train log: " + path);
  std::vector<std::pair<double, double>> rows;
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    double step, loss;
    if (std::sscanf(line.c_str(), "%lf,%lf", &step, &loss) == 2)
      rows.emplace_back(step, loss);
  }
  return rows;
}

int cmd_eval(const std::string& config_path, const std::string& checkpoint,
             double grid_h, const std::string& out,
             const std::string& train_log, double recover_dt) {
  RunConfig cfg = load_config(config_path);
  MlpField field = load_checkpoint(checkpoint);
  QuadraticPotential pot = cfg.potential();
  GaussianInitial init = cfg.initial();
  GaussianPath path(cfg.mu0, cfg.sigma0, cfg.mu_inf, cfg.sigma_inf,
                    cfg.integrator.T, 1e-3);
  EvalGrid grid;
  grid.h = grid_h;
  grid.t_max = cfg.integrator.T;

  EvalReport rep =
      eval_report(field, init, path, pot, grid, recover_dt, checkpoint);
  EstimateResult obj =
      estimate_R(field, pot, init, cfg.n_samples, cfg.seed, cfg.integrator);

  fs::path out_path(out);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  {
    std::ofstream os(out_path);
    if (!os) throw ConfigError("cannot write report: " + out);
    os << rep.to_json().dump(1) << '\n';
  }
  fs::path csv = out_path;
  csv.replace_extension(".csv");
  {
    std::ofstream os(csv);
    rep.write_csv(os);
  }

  auto svg_name = [&](const char* tag) {
    fs::path p = out_path;
    p.replace_extension("");
    return p.string() + "_" + tag + ".svg";
  };
  SvgSeries ls_series{"score error", rep.stamps, rep.ls_per_stamp, "#d62728"};
  write_svg_plot(svg_name("ls"), "Score Estimation Error", "t", "error",
                 {ls_series}, false);
  SvgSeries ld_series{"density error", rep.stamps, rep.ld_per_stamp, "#2ca02c"};
  write_svg_plot(svg_name("ld"), "Density Estimation Error", "t", "error",
                 {ld_series}, false);
  if (!train_log.empty()) {
    auto rows = read_train_log(train_log);
    SvgSeries obj{"objective", {}, {}, "#1f6feb"};
    for (auto& [s, l] : rows) {
      obj.x.push_back(s);
      obj.y.push_back(l);
    }
    write_svg_plot(svg_name("objective"), "Objective Value", "step", "objective",
                   {obj}, true);
  }

  std::cout << "ls " << rep.ls << "\nld " << rep.ld << "\nreport " << out
            << "\n";
  return 0;
}

int cmd_oracle(const std::string& config_path, double t, bool have_t) {
  RunConfig cfg = load_config(config_path);
  GaussianPath path(cfg.mu0, cfg.sigma0, cfg.mu_inf, cfg.sigma_inf,
                    cfg.integrator.T, 1e-3);
  std::cout << "t,mu1,mu2,s11,s12,s21,s22\n";
  std::cout << std::setprecision(12);
  auto row = [&](double tt) {
    Eigen::VectorXd mu = path.mu(tt);
    Eigen::MatrixXd s = path.sigma(tt);
    std::cout << tt << ',' << mu[0] << ',' << mu[1] << ',' << s(0, 0) << ','
              << s(0, 1) << ',' << s(1, 0) << ',' << s(1, 1) << '\n';
  };
  if (have_t) {
    row(t);
  } else {
    for (int k = 0; k <= 10; ++k) row(0.3 * k);
  }
  return 0;
}

int cmd_recover(const std::string& config_path, const std::string& checkpoint,
                double t, const std::vector<double>& x, double dt) {
  RunConfig cfg = load_config(config_path);
  MlpField field = load_checkpoint(checkpoint);
  GaussianInitial init = cfg.initial();
  if (static_cast<int>(x.size()) != cfg.domain.dim)
    throw ConfigError("--x needs exactly domain.dim coordinates");
  Eigen::VectorXd xv(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) xv[i] = x[i];
  std::optional<DomainMode> torus;
  if (cfg.domain.is_torus()) torus = cfg.domain;
  double ld = recover_log_density(field, init, t, xv, dt, torus);
  std::cout << std::setprecision(12) << ld << "\n";
  return 0;
}

// central difference of the trajectory loss over one parameter
double fd_loss(const MlpField& field, const QuadraticPotential& pot,
               const GaussianInitial& init, const Eigen::VectorXd& x0,
               const IntegratorSpec& spec, const Eigen::VectorXd& theta, int p,
               double h) {
  MlpField pert = field;
  Eigen::VectorXd th = theta;
  th[p] = theta[p] + h;
  pert.set_params(th);
  double up = trajectory_loss(pert, pot, init, x0, spec).first;
  th[p] = theta[p] - h;
  pert.set_params(th);
  double dn = trajectory_loss(pert, pot, init, x0, spec).first;
  return (up - dn) / (2.0 * h);
}

int cmd_gradcheck(std::uint64_t seed) {
  QuadraticPotential pot((Eigen::VectorXd(2) << 4, 4).finished(),
                         (Eigen::MatrixXd(2, 2) << 1.1, 0, 0, 0.9).finished());
  GaussianInitial init((Eigen::VectorXd(2) << -4, -4).finished(),
                       (Eigen::MatrixXd(2, 2) << 0.7, 0, 0, 1.3).finished());
  IntegratorSpec spec{1e-2, 0.5};

  bool all_ok = true;
  std::cout << "field  |grad|        rel_l2_err    verdict\n";
  for (int rep = 0; rep < 3; ++rep) {
    MlpField field = MlpField::xavier({2, 8, 2}, Analytic::tanh,
                                      TimeMode::none, {}, 2, seed + rep);
    Rng rng(substream_seed(seed, 100 + rep));
    Eigen::VectorXd x0 = init.sample(rng);
    GradResult g = grad_trajectory(field, pot, init, x0, spec);

    Eigen::VectorXd theta;
    field.get_params(theta);
    Eigen::VectorXd fd(theta.size());
    for (int p = 0; p < theta.size(); ++p) {
      double c1 = fd_loss(field, pot, init, x0, spec, theta, p, 1e-4);
      double c2 = fd_loss(field, pot, init, x0, spec, theta, p, 1e-5);
      double c3 = fd_loss(field, pot, init, x0, spec, theta, p, 1e-6);
      fd[p] = std::abs(c2 - c1) < std::abs(c3 - c2) ? c2 : c3;
    }
    double rel = (fd - g.grad).norm() / std::max(fd.norm(), 1e-300);
    bool ok = rel < 1e-4;
    all_ok = all_ok && ok;
    std::printf("%-6d %-13.6g %-13.3e %s\n", rep, g.grad.norm(), rel,
                ok ? "pass" : "FAIL");
  }
  std::cout << (all_ok ? "gradcheck passed\n" : "gradcheck FAILED\n");
  return all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"self-consistent velocity-field learning for Fokker-Planck "
               "dynamics"};
  app.require_subcommand(1);

  std::string config_path, out_dir, checkpoint, out = "eval_report.json",
                                                train_log;
  double grid_h = 0.4, t = 0.0, recover_dt = 1e-2;
  std::vector<double> x;
  std::uint64_t seed = 2024;

  auto* tr = app.add_subcommand("train", "train a velocity field");
  tr->add_option("--config", config_path, "JSON config file");
  tr->add_option("--out", out_dir, "output directory override");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  ev->add_option("--checkpoint", checkpoint, "checkpoint JSON")->required();
  ev->add_option("--config", config_path, "JSON config file");
  ev->add_option("--grid-h", grid_h, "spatial grid increment (0.1 = full)");
  ev->add_option("--dt", recover_dt, "recovery integrator step");
  ev->add_option("--out", out, "report JSON path");
  ev->add_option("--train-log", train_log, "training log CSV for the objective plot");

  auto* orc = app.add_subcommand("oracle", "dump the analytic path");
  orc->add_option("--config", config_path, "JSON config file");
  auto* topt = orc->add_option("--t", t, "single stamp instead of all");

  auto* rec = app.add_subcommand("recover", "recovered log-density at (t, x)");
  rec->add_option("--checkpoint", checkpoint, "checkpoint JSON")->required();
  rec->add_option("--config", config_path, "JSON config file");
  rec->add_option("--t", t, "time")->required();
  rec->add_option("--x", x, "point coordinates (comma separated)")
      ->required()
      ->delimiter(',');
  rec->add_option("--dt", recover_dt, "recovery integrator step");

  auto* gc = app.add_subcommand("gradcheck", "adjoint vs finite differences");
  gc->add_option("--seed", seed, "field seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (tr->parsed()) return cmd_train(config_path, out_dir);
    if (ev->parsed())
      return cmd_eval(config_path, checkpoint, grid_h, out, train_log,
                      recover_dt);
    if (orc->parsed()) return cmd_oracle(config_path, t, topt->count() > 0);
    if (rec->parsed()) return cmd_recover(config_path, checkpoint, t, x,
                                          recover_dt);
    if (gc->parsed()) return cmd_gradcheck(seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
