#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "fd.hpp"
#include "fpesc/eval.hpp"

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
GaussianPath ref_path(double dt) {
  return GaussianPath(vec2(-4, -4), diag2(0.7, 1.3), vec2(4, 4),
                      diag2(1.1, 0.9), 3.0, dt);
}

// rigid rotation, divergence-free
struct RotationField {
  struct Workspace {};
  int dim() const { return 2; }
  Eigen::VectorXd eval(double, const Eigen::VectorXd& x) const {
    return vec2(-x[1], x[0]);
  }
  void eval_jet(double, const Eigen::VectorXd& x, const JetSpace& sp,
                FieldJet& out, Workspace&) const {
    out.reset(sp, 2);
    out.comp[0][0] = -x[1];
    out.comp[1][0] = x[0];
    if (sp.degree() >= 1) {
      out.comp[0][sp.unit_term(1)] = -1.0;
      out.comp[1][sp.unit_term(0)] = 1.0;
    }
  }
};

// constant offset over a base field
template <class Base>
struct OffsetField {
  const Base& base;
  Eigen::VectorXd c;
  using Workspace = typename Base::Workspace;
  int dim() const { return base.dim(); }
  Eigen::VectorXd eval(double t, const Eigen::VectorXd& x) const {
    return base.eval(t, x) + c;
  }
  void eval_jet(double t, const Eigen::VectorXd& x, const JetSpace& sp,
                FieldJet& out, Workspace& ws) const {
    base.eval_jet(t, x, sp, out, ws);
    for (int i = 0; i < dim(); ++i) out.comp[i][0] += c[i];
  }
};

struct ZeroField {
  struct Workspace {};
  int dim() const { return 2; }
  Eigen::VectorXd eval(double, const Eigen::VectorXd&) const {
    return Eigen::VectorXd::Zero(2);
  }
  void eval_jet(double, const Eigen::VectorXd&, const JetSpace& sp,
                FieldJet& out, Workspace&) const {
    out.reset(sp, 2);
  }
};
}  // namespace

TEST_CASE("grid bookkeeping") {
  EvalGrid g;
  g.h = 0.1;
  CHECK(g.per_axis() == 201);
  g.h = 0.4;
  CHECK(g.per_axis() == 51);
  CHECK(g.stamps().size() == 11);
  CHECK(g.stamps().back() == Approx(3.0));
  g.h = 0.3;
  CHECK_THROWS_AS(g.per_axis(), ConfigError);
}

TEST_CASE("recovery with the zero field returns the initial density") {
  GaussianInitial init = ref_init();
  ZeroField f;
  for (double t : {0.0, 0.5, 1.0}) {
    Eigen::VectorXd x = vec2(-3.0, -4.5);
    CHECK(recover_log_density(f, init, t, x, 1e-2) ==
          Approx(init.log_density(x)).margin(1e-12));
  }
}

TEST_CASE("divergence-free flow transports density without rescaling") {
  GaussianInitial init = ref_init();
  RotationField f;
  double t = 0.7;  // multiple of dt
  Eigen::VectorXd x = vec2(-2.0, -3.0);
  double got = recover_log_density(f, init, t, x, 1e-3);
  // closed-form inverse rotation of x by angle t
  double c = std::cos(-t), s = std::sin(-t);
  Eigen::VectorXd x0 = vec2(c * x[0] - s * x[1], s * x[0] + c * x[1]);
  CHECK(got == Approx(init.log_density(x0)).margin(1e-9));
}

TEST_CASE("oracle recovery matches the analytic log density") {
  GaussianInitial init = ref_init();
  QuadraticPotential pot = ref_pot();
  GaussianPath path = ref_path(1e-3);
  GaussianPath field_path(init.mu0(), init.sigma0(), pot.mu_inf(),
                          pot.sigma_inf(), 3.0, 5e-4);
  OracleField f(field_path, pot);
  RecoveryEngine<OracleField> eng(f, init);
  Rng rng(31);
  for (int rep = 0; rep < 20; ++rep) {
    double t = 0.3 * static_cast<double>(rng.next_u64() % 11);
    Eigen::VectorXd x = vec2(8 * (rng.uniform01() - 0.5), 8 * (rng.uniform01() - 0.5));
    double got = eng.log_density(t, x, 1e-3);
    CHECK(got == Approx(path.log_density(t, x)).margin(1e-4));
  }
}

TEST_CASE("score error closed forms") {
  QuadraticPotential pot = ref_pot();
  GaussianInitial init = ref_init();
  GaussianPath path = ref_path(1e-3);
  GaussianPath field_path(init.mu0(), init.sigma0(), pot.mu_inf(),
                          pot.sigma_inf(), 3.0, 1e-3);
  OracleField f(field_path, pot);
  EvalGrid grid;
  grid.h = 0.4;

  ScoreError zero = score_error_ls(f, path, pot, grid);
  CHECK(zero.total < 1e-10);

  OffsetField<OracleField> fc{f, vec2(0.6, -0.8)};
  ScoreError shifted = score_error_ls(fc, path, pot, grid);
  CHECK(shifted.total == Approx(1.0).margin(1e-12));
}

TEST_CASE("zero-field score error agrees with Monte Carlo quadrature") {
  QuadraticPotential pot = ref_pot();
  GaussianPath path = ref_path(1e-3);
  ZeroField f;
  EvalGrid grid;
  grid.h = 0.1;
  ScoreError ls = score_error_ls(f, path, pot, grid);

  // uniform MC over the box and stamps
  Rng rng(2024);
  const int n = 1000000;
  auto ts = grid.stamps();
  double acc = 0.0, acc2 = 0.0;
  for (int i = 0; i < n; ++i) {
    double t = ts[rng.next_u64() % ts.size()];
    Eigen::VectorXd x = vec2(-10 + 20 * rng.uniform01(), -10 + 20 * rng.uniform01());
    double v = (path.score(t, x) + pot.grad(x)).squaredNorm();
    acc += v;
    acc2 += v * v;
  }
  double mean = acc / n;
  double se = std::sqrt((acc2 / n - mean * mean) / n);
  INFO("grid " << ls.total << " mc " << mean << " se " << se);
  CHECK(std::abs(ls.total - mean) < 3.0 * se + 1e-3 * mean);
}

TEST_CASE("density error closed forms") {
  GaussianPath path = ref_path(1e-3);
  EvalGrid grid;
  grid.h = 0.4;

  auto zero_rho = [](double, const Eigen::VectorXd&) { return 0.0; };
  DensityError ld0 = density_error_ld(zero_rho, path, grid);
  // |alpha - 0| averaged over the grid is the grid mean of alpha; compare
  // against mass / (points * cell area)
  for (std::size_t k = 0; k < ld0.per_stamp.size(); ++k) {
    double cells = 51.0 * 51.0;
    double expected = 1.0 / (cells * 0.16);
    CHECK(ld0.per_stamp[k] == Approx(expected).epsilon(0.03));
  }

  auto twice_rho = [&](double t, const Eigen::VectorXd& x) {
    return 2.0 * std::exp(path.log_density(t, x));
  };
  DensityError ld2 = density_error_ld(twice_rho, path, grid);
  for (std::size_t k = 0; k < ld0.per_stamp.size(); ++k)
    CHECK(ld2.per_stamp[k] == Approx(ld0.per_stamp[k]).margin(1e-15));
}

TEST_CASE("grid coarsening changes the zero-field score error only slightly") {
  QuadraticPotential pot = ref_pot();
  GaussianPath path = ref_path(1e-3);
  ZeroField f;
  EvalGrid fine, coarse;
  fine.h = 0.1;
  coarse.h = 0.2;
  double a = score_error_ls(f, path, pot, fine).total;
  double b = score_error_ls(f, path, pot, coarse).total;
  CHECK(std::abs(a - b) / a < 0.02);
}

TEST_CASE("recovered zeta1 equals the spatial gradient of recovered density") {
  // transport the augmented state with a generic field, then compare zeta1
  // against finite differences of the recovered log density
  QuadraticPotential pot = ref_pot();
  GaussianInitial init = ref_init();
  MlpField f = MlpField::xavier({3, 12, 2}, Analytic::tanh,
                                TimeMode::append_scalar, {}, 2, 2027);
  IntegratorSpec spec{1e-2, 0.5};
  TrajectoryEngine<MlpField> eng(f, pot);
  auto [loss, fin] = eng.run(init_state(vec2(-3.3, -4.6), init), spec);
  (void)loss;

  RecoveryEngine<MlpField> rec(f, init);
  auto ld = [&](const Eigen::VectorXd& x) {
    return rec.log_density(0.5, x, 1e-2);
  };
  for (int i = 0; i < 2; ++i) {
    std::vector<int> a = {i == 0 ? 1 : 0, i == 0 ? 0 : 1};
    double fd = fdtest::central_partial(ld, fin.x, a, 1e-3);
    CHECK(std::abs(fd - fin.zeta1[i]) < 1e-4);
  }
}

TEST_CASE("change-of-variables identity on the torus") {
  DomainMode mode = DomainMode::torus(8.0, 2);
  GaussianInitial init(vec2(0.5, -0.3), diag2(0.5, 0.8));
  MlpField f = MlpField::xavier({5, 12, 2}, Analytic::tanh,
                                TimeMode::append_scalar, {true, 8.0}, 2, 314);

  // constant test function: lhs is the recovered mass, rhs is exactly one
  auto one = [](const Eigen::VectorXd&) { return 1.0; };
  Lemma1Result r1 = lemma1_check(f, one, init, mode, 0.5, 100, 5, 1e-2, 48);
  CHECK(r1.rhs == 1.0);
  CHECK(r1.lhs == Approx(1.0).margin(1e-3));

  auto g = [](const Eigen::VectorXd& x) {
    return std::cos(2.0 * M_PI * x[0] / 8.0);
  };
  // identity map at t = 0
  Lemma1Result r0 = lemma1_check(f, g, init, mode, 0.0, 10000, 6, 1e-2, 48);
  CHECK(std::abs(r0.z) <= 3.0);

  // transported at t = 1 with a rotation-like periodic field
  Lemma1Result rt = lemma1_check(f, g, init, mode, 1.0, 10000, 7, 1e-2, 48);
  CHECK(std::abs(rt.z) <= 3.0);

  CHECK_THROWS_AS(
      lemma1_check(f, g, init, DomainMode::free_space(2), 0.0, 10, 1, 1e-2, 8),
      ModeMismatchError);
}

TEST_CASE("report serialization") {
  EvalReport rep;
  rep.checkpoint = "ckpt.json";
  rep.grid_h = 0.4;
  rep.dt = 1e-2;
  rep.T = 3.0;
  rep.stamps = {0.0, 0.3};
  rep.ls_per_stamp = {1.0, 2.0};
  rep.ld_per_stamp = {0.1, 0.2};
  rep.mass_per_stamp = {0.99, 1.0};
  rep.ls = 1.5;
  rep.ld = 0.15;

  nlohmann::json j = rep.to_json();
  CHECK(j["meta"]["checkpoint"] == "ckpt.json");
  CHECK(j["meta"]["grid_h"] == 0.4);
  CHECK(j["stamps"].size() == 2);
  CHECK(j["stamps"][1]["ls"] == 2.0);
  CHECK(j["aggregate"]["ls"] == 1.5);

  std::ostringstream os;
  rep.write_csv(os);
  CHECK(os.str().rfind("t,ls,ld,mass\n", 0) == 0);
}
