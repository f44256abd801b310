#include <catch2/catch_amalgamated.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "fpesc/training.hpp"

using namespace fpesc;
using Catch::Approx;

namespace {
Eigen::VectorXd vec2(double a, double b) {
  Eigen::VectorXd v(2);
  v << a, b;
  return v;
}
Eigen::MatrixXd diag2(double a, double b) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2, 2);
  m(0, 0) = a;
  m(1, 1) = b;
  return m;
}
QuadraticPotential ref_pot() {
  return QuadraticPotential(vec2(4, 4), diag2(1.1, 0.9));
}
GaussianInitial ref_init() {
  return GaussianInitial(vec2(-4, -4), diag2(0.7, 1.3));
}
MlpField default_net(std::uint64_t seed) {
  return MlpField::xavier({3, 16, 2}, Analytic::tanh, TimeMode::append_scalar,
                          {}, 2, seed);
}
}  // namespace

TEST_CASE("initial sampling statistics and reproducibility") {
  GaussianInitial init = ref_init();
  Rng a(substream_seed(7, 0)), b(substream_seed(7, 0));
  CHECK(init.sample(a) == init.sample(b));

  // CLT bound on the empirical mean, per coordinate
  const int n = 100000;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(2);
  Rng rng(substream_seed(7, 1));
  for (int i = 0; i < n; ++i) mean += init.sample(rng);
  mean /= n;
  for (int i = 0; i < 2; ++i) {
    double sd = std::sqrt(init.sigma0()(i, i));
    CHECK(std::abs(mean[i] - init.mu0()[i]) < 4.0 * sd / std::sqrt(double(n)));
  }
}

TEST_CASE("config validation") {
  TrainConfig cfg;
  cfg.steps = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.steps = 1;
  cfg.batch = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.batch = 1;
  cfg.lr = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.lr = 1e-3;
  cfg.spec = {1e-2, 0.05};
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("zero learning rate leaves parameters unchanged but logs") {
  auto pot = ref_pot();
  auto init = ref_init();
  MlpField f = default_net(3);
  Eigen::VectorXd before;
  f.get_params(before);

  TrainConfig cfg;
  cfg.steps = 3;
  cfg.batch = 2;
  cfg.lr = 0.0;
  cfg.spec = {1e-2, 0.1};
  cfg.log_every = 1;
  TrainLog log = train(f, pot, init, cfg);

  Eigen::VectorXd after;
  f.get_params(after);
  CHECK((before - after).norm() == 0.0);
  CHECK(log.rows.size() == 3);
  for (const auto& r : log.rows) CHECK(std::isfinite(r.loss_mean));
}

TEST_CASE("a few adam steps reduce the batch loss") {
  auto pot = ref_pot();
  auto init = ref_init();
  MlpField f = default_net(11);

  TrainConfig cfg;
  cfg.steps = 20;
  cfg.batch = 4;
  cfg.lr = 2e-2;
  cfg.spec = {2e-2, 0.2};
  cfg.log_every = 1;
  cfg.seed = 5;
  TrainLog log = train(f, pot, init, cfg);
  REQUIRE(log.rows.size() == 20);
  CHECK(log.rows.back().loss_mean < log.rows.front().loss_mean);
}

TEST_CASE("training is deterministic and worker-count independent") {
  auto pot = ref_pot();
  auto init = ref_init();
  TrainConfig cfg;
  cfg.steps = 4;
  cfg.batch = 3;
  cfg.lr = 1e-3;
  cfg.spec = {1e-2, 0.1};
  cfg.log_every = 1;
  cfg.seed = 17;

  setenv("FPESC_THREADS", "1", 1);
  MlpField f1 = default_net(2);
  TrainLog l1 = train(f1, pot, init, cfg);
  setenv("FPESC_THREADS", "2", 1);
  MlpField f2 = default_net(2);
  TrainLog l2 = train(f2, pot, init, cfg);
  unsetenv("FPESC_THREADS");

  REQUIRE(l1.rows.size() == l2.rows.size());
  for (std::size_t i = 0; i < l1.rows.size(); ++i) {
    CHECK(l1.rows[i].loss_mean == l2.rows[i].loss_mean);
    CHECK(l1.rows[i].grad_norm == l2.rows[i].grad_norm);
  }
  Eigen::VectorXd p1, p2;
  f1.get_params(p1);
  f2.get_params(p2);
  CHECK((p1 - p2).norm() == 0.0);
}

TEST_CASE("checkpoints round trip through training output") {
  namespace fs = std::filesystem;
  auto pot = ref_pot();
  auto init = ref_init();
  MlpField f = default_net(23);
  fs::path dir = fs::temp_directory_path() / "fpesc_train_test";
  fs::remove_all(dir);

  TrainConfig cfg;
  cfg.steps = 2;
  cfg.batch = 2;
  cfg.spec = {1e-2, 0.05};
  cfg.log_every = 1;
  cfg.checkpoint_every = 1;
  cfg.out_dir = dir.string();
  train(f, pot, init, cfg);

  CHECK(fs::exists(dir / "checkpoint_000001.json"));
  CHECK(fs::exists(dir / "checkpoint_final.json"));
  CHECK(fs::exists(dir / "train_log.csv"));

  MlpField g = load_checkpoint((dir / "checkpoint_final.json").string());
  Eigen::VectorXd pf, pg;
  f.get_params(pf);
  g.get_params(pg);
  CHECK((pf - pg).norm() == 0.0);

  // the reloaded field reproduces the estimator bit-for-bit
  IntegratorSpec spec{1e-2, 0.1};
  EstimateResult a = estimate_R(f, pot, init, 4, 99, spec);
  EstimateResult b = estimate_R(g, pot, init, 4, 99, spec);
  CHECK(a.mean == b.mean);
  fs::remove_all(dir);
}
