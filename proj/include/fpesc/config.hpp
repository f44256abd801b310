#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fpesc/domain.hpp"
#include "fpesc/fields.hpp"
#include "fpesc/selfcons.hpp"
#include "fpesc/training.hpp"

namespace fpesc {

// Run configuration for the command-line tools. Defaults reproduce the
// 2-d Gaussian relaxation benchmark.
struct RunConfig {
  std::uint64_t seed = 42;
  DomainMode domain = DomainMode::free_space(2);
  Eigen::VectorXd mu0 = (Eigen::VectorXd(2) << -4, -4).finished();
  Eigen::MatrixXd sigma0 = (Eigen::MatrixXd(2, 2) << 0.7, 0, 0, 1.3).finished();
  Eigen::VectorXd mu_inf = (Eigen::VectorXd(2) << 4, 4).finished();
  Eigen::MatrixXd sigma_inf = (Eigen::MatrixXd(2, 2) << 1.1, 0, 0, 0.9).finished();
  bool half_factor = true;
  std::vector<int> hidden = {64, 64};
  Analytic activation = Analytic::tanh;
  TimeMode time_mode = TimeMode::append_scalar;
  IntegratorSpec integrator{1e-2, 3.0};
  int n_samples = 64;
  TrainConfig training;

  QuadraticPotential potential() const {
    return QuadraticPotential(mu_inf, sigma_inf, half_factor);
  }
  GaussianInitial initial() const { return GaussianInitial(mu0, sigma0); }

  PeriodicEmbedding embedding() const {
    if (domain.is_torus()) return {true, domain.l};
    return {};
  }

  std::vector<int> layer_sizes() const {
    int in = domain.dim * (domain.is_torus() ? 2 : 1) +
             (time_mode == TimeMode::append_scalar ? 1 : 0);
    std::vector<int> sizes;
    sizes.push_back(in);
    for (int h : hidden) sizes.push_back(h);
    sizes.push_back(domain.dim);
    return sizes;
  }

  MlpField make_field() const {
    return MlpField::xavier(layer_sizes(), activation, time_mode, embedding(),
                            domain.dim, seed);
  }

  static Eigen::VectorXd parse_vector(const nlohmann::json& j) {
    Eigen::VectorXd v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) v[i] = j[i].get<double>();
    return v;
  }

  // diagonal arrays or full nested arrays
  static Eigen::MatrixXd parse_matrix(const nlohmann::json& j) {
    if (j.empty()) throw ConfigError("empty matrix in config");
    if (j[0].is_array()) {
      Eigen::MatrixXd m(j.size(), j[0].size());
      for (std::size_t i = 0; i < j.size(); ++i)
        for (std::size_t k = 0; k < j[i].size(); ++k)
          m(i, k) = j[i][k].get<double>();
      return m;
    }
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(j.size(), j.size());
    for (std::size_t i = 0; i < j.size(); ++i) m(i, i) = j[i].get<double>();
    return m;
  }

  static RunConfig from_json(const nlohmann::json& j) {
    RunConfig c;
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("domain")) {
      const auto& d = j["domain"];
      int dim = d.value("dim", 2);
      std::string mode = d.value("mode", "free");
      if (mode == "torus")
        c.domain = DomainMode::torus(d.at("l").get<double>(), dim);
      else if (mode == "free")
        c.domain = DomainMode::free_space(dim);
      else
        throw ConfigError("domain.mode must be 'torus' or 'free'");
    }
    if (j.contains("problem")) {
      const auto& p = j["problem"];
      if (p.contains("mu0")) c.mu0 = parse_vector(p["mu0"]);
      if (p.contains("sigma0")) c.sigma0 = parse_matrix(p["sigma0"]);
      if (p.contains("mu_inf")) c.mu_inf = parse_vector(p["mu_inf"]);
      if (p.contains("sigma_inf")) c.sigma_inf = parse_matrix(p["sigma_inf"]);
      if (p.contains("half_factor")) c.half_factor = p["half_factor"].get<bool>();
    }
    if (j.contains("field")) {
      const auto& f = j["field"];
      if (f.contains("hidden")) c.hidden = f["hidden"].get<std::vector<int>>();
      if (f.contains("activation"))
        c.activation = analytic_from_name(f["activation"].get<std::string>());
      if (f.contains("time_mode"))
        c.time_mode = f["time_mode"].get<std::string>() == "none"
                          ? TimeMode::none
                          : TimeMode::append_scalar;
    }
    if (j.contains("integrator")) {
      c.integrator.dt = j["integrator"].value("dt", c.integrator.dt);
      c.integrator.T = j["integrator"].value("T", c.integrator.T);
    }
    if (j.contains("loss") && j["loss"].contains("n_samples"))
      c.n_samples = j["loss"]["n_samples"].get<int>();
    if (j.contains("training")) {
      const auto& t = j["training"];
      c.training.steps = t.value("steps", c.training.steps);
      c.training.batch = t.value("batch", c.training.batch);
      c.training.lr = t.value("lr", c.training.lr);
      std::string opt = t.value("optimizer", std::string("adam"));
      if (opt == "adam")
        c.training.optimizer = OptimizerKind::adam;
      else if (opt == "sgd")
        c.training.optimizer = OptimizerKind::sgd;
      else
        throw ConfigError("training.optimizer must be 'adam' or 'sgd'");
      c.training.beta1 = t.value("beta1", c.training.beta1);
      c.training.beta2 = t.value("beta2", c.training.beta2);
      c.training.eps = t.value("eps", c.training.eps);
      c.training.log_every = t.value("log_every", c.training.log_every);
      c.training.checkpoint_every =
          t.value("checkpoint_every", c.training.checkpoint_every);
      c.training.out_dir = t.value("out_dir", c.training.out_dir);
    }
    c.training.seed = c.seed;
    c.training.spec = c.integrator;
    if (c.mu0.size() != c.domain.dim || c.mu_inf.size() != c.domain.dim)
      throw ConfigError("problem dimensions disagree with domain.dim");
    return c;
  }

  static RunConfig from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read config file: " + path);
    nlohmann::json j;
    is >> j;
    return from_json(j);
  }
};

}  // namespace fpesc
