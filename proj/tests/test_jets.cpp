#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <vector>

#include "fd.hpp"
#include "fpesc/jets.hpp"
#include "fpesc/rng.hpp"

using namespace fpesc;
using Catch::Approx;

namespace {
std::vector<int> mi(std::initializer_list<int> v) { return {v}; }

Jet random_jet(const JetSpace& sp, Rng& rng, double scale = 0.5) {
  Jet j(sp);
  for (int t = 0; t < sp.size(); ++t)
    j.coeff(t) = scale * (2.0 * rng.uniform01() - 1.0);
  return j;
}

// plain scalar evaluation of the polynomial a jet represents
double eval_poly(const Jet& j, const Eigen::VectorXd& dx) {
  const JetSpace& sp = j.space();
  double acc = 0.0;
  for (int t = 0; t < sp.size(); ++t) {
    double term = j.coeff(t);
    auto e = sp.exponents(t);
    for (int k = 0; k < sp.dim(); ++k)
      for (int p = 0; p < e[k]; ++p) term *= dx[k];
    acc += term;
  }
  return acc;
}

double ref_scalar(Analytic fn, double v) {
  switch (fn) {
    case Analytic::tanh: return std::tanh(v);
    case Analytic::exp: return std::exp(v);
    case Analytic::sin: return std::sin(v);
    case Analytic::cos: return std::cos(v);
    case Analytic::reciprocal: return 1.0 / v;
  }
  return 0.0;
}
}  // namespace

TEST_CASE("seed_variable layout") {
  JetSpace sp(2, 2);
  CHECK(sp.size() == 6);
  Jet x0 = Jet::variable(sp, 0, 3.0);
  CHECK(x0.value() == 3.0);
  CHECK(x0.partial(mi({1, 0})) == 1.0);
  CHECK(x0.partial(mi({0, 1})) == 0.0);
  CHECK(x0.partial(mi({2, 0})) == 0.0);

  JetSpace sp0(1, 0);
  Jet c = Jet::variable(sp0, 0, 5.0);
  CHECK(c.value() == 5.0);
  CHECK(sp0.size() == 1);

  JetSpace sp3(2, 3);
  Jet x1 = Jet::variable(sp3, 1, 0.0);
  CHECK(x1.value() == 0.0);
  CHECK(x1.partial(mi({0, 1})) == 1.0);
  CHECK(x1.partial(mi({1, 1})) == 0.0);
}

TEST_CASE("truncated products") {
  JetSpace sp1(2, 1);
  Jet a = Jet::constant(sp1, 1.0) + Jet::variable(sp1, 0, 0.0);
  Jet b = Jet::constant(sp1, 1.0) + Jet::variable(sp1, 1, 0.0);
  Jet p = a * b;  // (1+x)(1+y) truncated to degree 1
  CHECK(p.value() == 1.0);
  CHECK(p.partial(mi({1, 0})) == 1.0);
  CHECK(p.partial(mi({0, 1})) == 1.0);

  JetSpace sp2(2, 2);
  Jet a2 = Jet::constant(sp2, 1.0) + Jet::variable(sp2, 0, 0.0);
  Jet b2 = Jet::constant(sp2, 1.0) + Jet::variable(sp2, 1, 0.0);
  Jet p2 = a2 * b2;
  CHECK(p2.partial(mi({1, 1})) == 1.0);

  Rng rng(3);
  JetSpace sp(3, 3);
  for (int rep = 0; rep < 20; ++rep) {
    Jet u = random_jet(sp, rng), v = random_jet(sp, rng);
    Jet uv = u * v, vu = v * u;
    for (int t = 0; t < sp.size(); ++t)
      CHECK(uv.coeff(t) == Approx(vu.coeff(t)).margin(1e-15));
  }
}

TEST_CASE("dimension and degree mismatch is a hard error") {
  JetSpace a(2, 2), b(2, 3), c(3, 2);
  Jet ja(a), jb(b), jc(c);
  CHECK_THROWS_AS(ja + jb, ConfigError);
  CHECK_THROWS_AS(ja * jc, ConfigError);
}

TEST_CASE("composition with analytic series") {
  JetSpace sp(1, 3);
  Jet x = Jet::variable(sp, 0, 0.0);
  Jet th = compose(Analytic::tanh, x);  // x - x^3/3
  CHECK(th.value() == 0.0);
  CHECK(th.partial(mi({1})) == Approx(1.0));
  CHECK(th.partial(mi({2})) == Approx(0.0).margin(1e-15));
  CHECK(th.partial(mi({3})) == Approx(-2.0));  // 3! * (-1/3)

  Jet z = Jet(sp);  // zero polynomial
  Jet e = compose(Analytic::exp, z);
  CHECK(e.value() == 1.0);
  for (int t = 1; t < sp.size(); ++t) CHECK(e.coeff(t) == 0.0);

  CHECK_THROWS_AS(compose(Analytic::reciprocal, z), SingularityError);
}

TEST_CASE("tanh composition against finite differences at order 4") {
  JetSpace sp(1, 4);
  Rng rng(17);
  Jet u = random_jet(sp, rng, 0.2);
  u.coeff(0) = 0.5;
  Jet v = compose(Analytic::tanh, u);
  auto f = [&](const Eigen::VectorXd& dx) {
    return std::tanh(eval_poly(u, dx));
  };
  Eigen::VectorXd origin = Eigen::VectorXd::Zero(1);
  for (int k = 0; k <= 4; ++k) {
    std::vector<int> a = {k};
    double fd = fdtest::fd_partial(f, origin, a);
    double got = v.partial(a);
    INFO("order " << k << " fd=" << fd << " jet=" << got);
    CHECK(fdtest::close_rel(fd, got, 1e-6, 1e-5));
  }
}

TEST_CASE("extract_partial on polynomials and beyond-degree errors") {
  // phi(x, y) = x^2 y at (1, 2)
  JetSpace sp(2, 3);
  Jet x = Jet::variable(sp, 0, 1.0);
  Jet y = Jet::variable(sp, 1, 2.0);
  Jet phi = x * x * y;
  CHECK(phi.partial(mi({1, 1})) == Approx(2.0));  // d/dx d/dy = 2x
  CHECK(phi.partial(mi({0, 0})) == Approx(2.0));  // value x^2 y
  CHECK(phi.partial(mi({2, 1})) == Approx(2.0));
  CHECK_THROWS_AS(phi.partial(mi({2, 2})), OrderError);
}

TEST_CASE("polynomial round trip through seed/mul/add is exact") {
  JetSpace sp(2, 4);
  Rng rng(23);
  Eigen::VectorXd base(2);
  base << 0.7, -0.4;
  Jet x = Jet::variable(sp, 0, base[0]);
  Jet y = Jet::variable(sp, 1, base[1]);
  // phi = 2 + x y^2 - 3 x^2 + 0.5 y
  Jet phi = Jet::constant(sp, 2.0) + x * y * y - 3.0 * (x * x) +
            0.5 * Jet::variable(sp, 1, base[1]);
  auto ref = [&](double a, double b) {
    return 2.0 + a * b * b - 3.0 * a * a + 0.5 * b;
  };
  CHECK(phi.value() == Approx(ref(base[0], base[1])));
  CHECK(phi.partial(mi({1, 0})) == Approx(base[1] * base[1] - 6.0 * base[0]));
  CHECK(phi.partial(mi({1, 2})) == Approx(2.0));
  CHECK(phi.partial(mi({2, 0})) == Approx(-6.0));
  CHECK(phi.partial(mi({0, 2})) == Approx(2.0 * base[0]));
  CHECK(phi.partial(mi({2, 2})) == 0.0);
}

TEST_CASE("product rule at first order") {
  JetSpace sp(2, 3);
  Rng rng(5);
  for (int rep = 0; rep < 25; ++rep) {
    Jet a = random_jet(sp, rng), b = random_jet(sp, rng);
    Jet p = a * b;
    for (int i = 0; i < 2; ++i) {
      std::vector<int> e(2, 0);
      e[i] = 1;
      double lhs = p.partial(e);
      double rhs = a.partial(e) * b.value() + a.value() * b.partial(e);
      CHECK(lhs == Approx(rhs).margin(1e-14));
    }
  }
}

TEST_CASE("composition correctness for every series tag up to order 5") {
  JetSpace sp(2, 5);
  Rng rng(41);
  for (Analytic fn : {Analytic::tanh, Analytic::exp, Analytic::sin,
                      Analytic::cos, Analytic::reciprocal}) {
    Jet u = random_jet(sp, rng, 0.15);
    u.coeff(0) = (fn == Analytic::reciprocal) ? 1.3 : 0.2;
    Jet v = compose(fn, u);
    auto f = [&](const Eigen::VectorXd& dx) {
      return ref_scalar(fn, eval_poly(u, dx));
    };
    Eigen::VectorXd origin = Eigen::VectorXd::Zero(2);
    for (int t = 0; t < sp.size(); ++t) {
      auto e = sp.exponents(t);
      std::vector<int> a(e.begin(), e.end());
      double fd = fdtest::fd_partial(f, origin, a);
      double got = v.partial(a);
      double tol = sp.order(t) <= 3 ? 1e-4 : 1e-3;
      INFO(analytic_name(fn) << " order " << sp.order(t) << " fd=" << fd
                             << " jet=" << got);
      CHECK(fdtest::close_rel(fd, got, tol, 1e-5));
    }
  }
}

TEST_CASE("mul_transpose is the adjoint of multiplication") {
  JetSpace sp(2, 4);
  Rng rng(9);
  for (int rep = 0; rep < 10; ++rep) {
    Jet m = random_jet(sp, rng), v = random_jet(sp, rng), w = random_jet(sp, rng);
    Jet mv = m * v;
    double lhs = 0.0;
    for (int t = 0; t < sp.size(); ++t) lhs += mv.coeff(t) * w.coeff(t);
    std::vector<double> mtw(sp.size());
    sp.mul_transpose(m.data(), w.data(), mtw.data());
    double rhs = 0.0;
    for (int t = 0; t < sp.size(); ++t) rhs += mtw[t] * v.coeff(t);
    CHECK(lhs == Approx(rhs).margin(1e-13));
  }
}
