#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "fd.hpp"
#include "fpesc/oracle.hpp"
#include "fpesc/rng.hpp"

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

// scalar closed forms for diagonal problems
double mu_closed(double mu0, double muinf, double s, double t) {
  return muinf + (mu0 - muinf) * std::exp(-t / s);
}
double var_closed(double v0, double s, double t) {
  return s + (v0 - s) * std::exp(-2.0 * t / s);
}

GaussianPath reference_path(double T, double dt) {
  return GaussianPath(vec2(-4, -4), diag2(0.7, 1.3), vec2(4, 4),
                      diag2(1.1, 0.9), T, dt);
}
}  // namespace

TEST_CASE("stationary input is a fixed point") {
  GaussianPath p(vec2(4, 4), diag2(1.1, 0.9), vec2(4, 4), diag2(1.1, 0.9), 2.0,
                 1e-3);
  for (double t : {0.0, 0.5, 1.0, 2.0}) {
    CHECK((p.mu(t) - vec2(4, 4)).norm() < 1e-12);
    CHECK((p.sigma(t) - diag2(1.1, 0.9)).norm() < 1e-12);
  }
}

TEST_CASE("path matches the scalar closed forms on the diagonal problem") {
  GaussianPath p = reference_path(3.0, 1e-3);
  CHECK(p.gamma_at(0).transpose() * p.gamma_at(0) == p.sigma_at(0));
  CHECK((p.sigma(0.0) - diag2(0.7, 1.3)).norm() < 1e-12);
  for (int k = 0; k <= 10; ++k) {
    double t = 0.3 * k;
    Eigen::VectorXd mu = p.mu(t);
    Eigen::MatrixXd sig = p.sigma(t);
    CHECK(std::abs(mu[0] - mu_closed(-4, 4, 1.1, t)) < 1e-8);
    CHECK(std::abs(mu[1] - mu_closed(-4, 4, 0.9, t)) < 1e-8);
    CHECK(std::abs(sig(0, 0) - var_closed(0.7, 1.1, t)) < 1e-8);
    CHECK(std::abs(sig(1, 1) - var_closed(1.3, 0.9, t)) < 1e-8);
    CHECK(std::abs(sig(0, 1)) < 1e-10);
  }
  // spot values at the horizon
  CHECK(p.mu(3.0)[0] == Approx(4.0 - 8.0 * std::exp(-3.0 / 1.1)).epsilon(1e-9));
  CHECK(p.sigma(3.0)(1, 1) ==
        Approx(0.9 + 0.4 * std::exp(-6.0 / 0.9)).epsilon(1e-9));
}

TEST_CASE("off-grid queries are rejected") {
  GaussianPath p = reference_path(1.0, 1e-3);
  CHECK_THROWS_AS(p.mu(0.00053), OffGridError);
  CHECK_THROWS_AS(p.mu(-0.1), OffGridError);
  CHECK_THROWS_AS(p.mu(1.5), OffGridError);
  CHECK_NOTHROW(p.mu(0.999));
}

TEST_CASE("score and log density") {
  GaussianPath p = reference_path(1.0, 1e-3);
  // at the mean: score zero, density is the normalization constant
  Eigen::VectorXd mu = p.mu(0.4);
  CHECK(p.score(0.4, mu).norm() < 1e-12);
  Eigen::MatrixXd sig = p.sigma(0.4);
  CHECK(p.log_density(0.4, mu) ==
        Approx(-0.5 * std::log(4.0 * M_PI * M_PI * sig.determinant())));

  CHECK(p.score(0.0, vec2(-4.0 + 0.7, -4.0))[0] == Approx(-1.0));
  CHECK(p.score(0.0, vec2(-4.0 + 0.7, -4.0))[1] == Approx(0.0).margin(1e-14));

  // score is the spatial gradient of the log density
  Rng rng(13);
  for (int rep = 0; rep < 5; ++rep) {
    double t = 0.1 * static_cast<double>(rng.next_u64() % 11);
    Eigen::VectorXd x = vec2(3 * rng.normal(), 3 * rng.normal());
    auto ld = [&](const Eigen::VectorXd& xx) { return p.log_density(t, xx); };
    Eigen::VectorXd sc = p.score(t, x);
    for (int i = 0; i < 2; ++i) {
      std::vector<int> a = {i == 0 ? 1 : 0, i == 0 ? 0 : 1};
      CHECK(std::abs(fdtest::fd_partial(ld, x, a) - sc[i]) < 1e-6);
    }
  }
}

TEST_CASE("grid mass of the density") {
  GaussianPath p = reference_path(3.0, 1e-2);
  for (double t : {0.0, 3.0}) {
    double mass = 0.0;
    for (int i = 0; i < 201; ++i)
      for (int j = 0; j < 201; ++j) {
        Eigen::VectorXd x = vec2(-10.0 + 0.1 * i, -10.0 + 0.1 * j);
        mass += std::exp(p.log_density(t, x)) * 0.01;
      }
    CHECK(mass >= 0.98);
    CHECK(mass <= 1.0);
  }
}

TEST_CASE("squared bures distance") {
  Eigen::MatrixXd I = Eigen::MatrixXd::Identity(2, 2);
  CHECK(gaussian_w2(vec2(1, 2), diag2(0.5, 2.0), vec2(1, 2), diag2(0.5, 2.0)) ==
        Approx(0.0).margin(1e-12));
  CHECK(gaussian_w2(vec2(0, 0), I, vec2(3, 4), I) == Approx(25.0));
  // diagonal reduction
  double a1 = 0.7, a2 = 1.3, b1 = 1.1, b2 = 0.9;
  double want = (std::sqrt(a1) - std::sqrt(b1)) * (std::sqrt(a1) - std::sqrt(b1)) +
                (std::sqrt(a2) - std::sqrt(b2)) * (std::sqrt(a2) - std::sqrt(b2));
  CHECK(gaussian_w2(vec2(1, 1), diag2(a1, a2), vec2(1, 1), diag2(b1, b2)) ==
        Approx(want));
  CHECK_THROWS_AS(gaussian_w2(vec2(0, 0), -I, vec2(0, 0), I), ConfigError);
}

TEST_CASE("distance to equilibrium contracts along the path") {
  GaussianPath p = reference_path(3.0, 1e-3);
  double prev = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= 10; ++k) {
    double t = 0.3 * k;
    double w = gaussian_w2(p.mu(t), p.sigma(t), vec2(4, 4), diag2(1.1, 0.9));
    CHECK(w <= prev + 1e-12);
    prev = w;
  }
}

TEST_CASE("invalid problem data") {
  CHECK_THROWS_AS(GaussianPath(vec2(0, 0), -diag2(1, 1), vec2(0, 0),
                               diag2(1, 1), 1.0, 1e-2),
                  ConfigError);
  CHECK_THROWS_AS(GaussianPath(vec2(0, 0), diag2(1, 1), vec2(0, 0),
                               diag2(1, 1), 1.0, 3e-3),
                  ConfigError);  // horizon not a multiple of dt
}
