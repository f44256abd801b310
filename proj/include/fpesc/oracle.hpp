#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <iostream>
#include <vector>

#include "fpesc/errors.hpp"
#include "fpesc/integrate.hpp"

namespace fpesc {

inline void require_spd(const Eigen::MatrixXd& m, const char* what) {
  if (m.rows() != m.cols()) throw ConfigError(std::string(what) + " must be square");
  if (!m.isApprox(m.transpose(), 1e-12))
    throw ConfigError(std::string(what) + " must be symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  if (es.eigenvalues().minCoeff() <= 0.0)
    throw ConfigError(std::string(what) + " must be positive definite");
}

// Principal square root of a symmetric positive semidefinite matrix.
inline Eigen::MatrixXd spd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  Eigen::VectorXd ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] < -1e-12) throw SingularityError("matrix square root of non-PSD input");
    ev[i] = std::sqrt(std::max(ev[i], 0.0));
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

// Time-discretized mean/scale curve of the Gaussian solution: mu' =
// Sinf^{-1}(mu_inf - mu), Gamma' = -Sinf^{-1} Gamma + Gamma^{-T}, with
// Gamma_0 the principal root of Sigma_0. Covariances are reconstituted as
// Gamma^T Gamma so they stay symmetric PSD by construction.
class GaussianPath {
 public:
  GaussianPath(Eigen::VectorXd mu0, Eigen::MatrixXd sigma0,
               Eigen::VectorXd mu_inf, Eigen::MatrixXd sigma_inf, double T,
               double dt)
      : mu0_(std::move(mu0)),
        sigma0_(std::move(sigma0)),
        mu_inf_(std::move(mu_inf)),
        sigma_inf_(std::move(sigma_inf)),
        dt_(dt) {
    require_spd(sigma0_, "sigma0");
    require_spd(sigma_inf_, "sigma_inf");
    if (mu0_.size() != mu_inf_.size() || sigma0_.rows() != mu0_.size() ||
        sigma_inf_.rows() != mu0_.size())
      throw ConfigError("gaussian path: dimension mismatch");
    // the Gamma ODE matches the covariance ODE only when these commute
    Eigen::MatrixXd comm = sigma_inf_ * sigma0_ - sigma0_ * sigma_inf_;
    if (comm.norm() > 1e-10 * sigma0_.norm() * sigma_inf_.norm())
      std::cerr << "warning: sigma0 and sigma_inf do not commute; the Gamma "
                   "parameterization is only exact in the commuting case\n";

    IntegratorSpec spec{dt, T};
    int n = spec.steps();
    Eigen::MatrixXd inv = sigma_inf_.inverse();
    Eigen::VectorXd mu = mu0_;
    Eigen::MatrixXd gamma = spd_sqrt(sigma0_);
    mus_.reserve(n + 1);
    gammas_.reserve(n + 1);
    mus_.push_back(mu);
    gammas_.push_back(gamma);
    const int d = static_cast<int>(mu0_.size());
    auto rhs_mu = [&](const Eigen::VectorXd& m) -> Eigen::VectorXd {
      return inv * (mu_inf_ - m);
    };
    auto rhs_gamma = [&](const Eigen::MatrixXd& g) -> Eigen::MatrixXd {
      return -inv * g + g.inverse().transpose();
    };
    for (int s = 0; s < n; ++s) {
      Eigen::VectorXd km1 = rhs_mu(mu);
      Eigen::MatrixXd kg1 = rhs_gamma(gamma);
      Eigen::VectorXd km2 = rhs_mu(mu + 0.5 * dt * km1);
      Eigen::MatrixXd kg2 = rhs_gamma(gamma + 0.5 * dt * kg1);
      Eigen::VectorXd km3 = rhs_mu(mu + 0.5 * dt * km2);
      Eigen::MatrixXd kg3 = rhs_gamma(gamma + 0.5 * dt * kg2);
      Eigen::VectorXd km4 = rhs_mu(mu + dt * km3);
      Eigen::MatrixXd kg4 = rhs_gamma(gamma + dt * kg3);
      mu += (dt / 6.0) * (km1 + 2.0 * km2 + 2.0 * km3 + km4);
      gamma += (dt / 6.0) * (kg1 + 2.0 * kg2 + 2.0 * kg3 + kg4);
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(gamma);
      double smin = svd.singularValues()(d - 1);
      double smax = svd.singularValues()(0);
      if (!(smin > 0.0) || smax / smin > 1e12)
        throw SingularityError("gaussian path became ill-conditioned at t=" +
                               std::to_string((s + 1) * dt));
      mus_.push_back(mu);
      gammas_.push_back(gamma);
    }
  }

  int dim() const { return static_cast<int>(mu0_.size()); }
  double dt() const { return dt_; }
  double horizon() const { return dt_ * (static_cast<double>(mus_.size()) - 1.0); }

  const Eigen::VectorXd& mu0() const { return mu0_; }
  const Eigen::MatrixXd& sigma0() const { return sigma0_; }
  const Eigen::VectorXd& mu_inf() const { return mu_inf_; }
  const Eigen::MatrixXd& sigma_inf() const { return sigma_inf_; }

  // exact-multiple lookup; interpolation is deliberately not offered
  int stamp_index(double t) const {
    long k = std::lround(t / dt_);
    if (k < 0 || k >= static_cast<long>(mus_.size()) ||
        std::abs(k * dt_ - t) > 1e-9 * std::max(1.0, std::abs(t)))
      throw OffGridError("time " + std::to_string(t) + " is off the path grid");
    return static_cast<int>(k);
  }

  const Eigen::VectorXd& mu_at(int k) const { return mus_[k]; }
  const Eigen::MatrixXd& gamma_at(int k) const { return gammas_[k]; }
  Eigen::MatrixXd sigma_at(int k) const {
    return gammas_[k].transpose() * gammas_[k];
  }
  const Eigen::VectorXd& mu(double t) const { return mus_[stamp_index(t)]; }
  Eigen::MatrixXd sigma(double t) const { return sigma_at(stamp_index(t)); }

  double log_density(double t, const Eigen::VectorXd& x) const {
    int k = stamp_index(t);
    Eigen::MatrixXd s = sigma_at(k);
    Eigen::LLT<Eigen::MatrixXd> llt(s);
    Eigen::VectorXd r = x - mus_[k];
    double quad = r.dot(llt.solve(r));
    double logdet = 0.0;
    for (int i = 0; i < dim(); ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
    return -0.5 * (dim() * std::log(2.0 * M_PI) + logdet + quad);
  }

  Eigen::VectorXd score(double t, const Eigen::VectorXd& x) const {
    int k = stamp_index(t);
    Eigen::LLT<Eigen::MatrixXd> llt(sigma_at(k));
    return -llt.solve(x - mus_[k]);
  }

 private:
  Eigen::VectorXd mu0_;
  Eigen::MatrixXd sigma0_;
  Eigen::VectorXd mu_inf_;
  Eigen::MatrixXd sigma_inf_;
  double dt_;
  std::vector<Eigen::VectorXd> mus_;
  std::vector<Eigen::MatrixXd> gammas_;
};

inline GaussianPath evolve_gaussian(const Eigen::VectorXd& mu0,
                                    const Eigen::MatrixXd& sigma0,
                                    const Eigen::VectorXd& mu_inf,
                                    const Eigen::MatrixXd& sigma_inf, double T,
                                    double dt) {
  return GaussianPath(mu0, sigma0, mu_inf, sigma_inf, T, dt);
}

// Squared Bures-Wasserstein distance between Gaussians:
// |mu1-mu2|^2 + tr(S1 + S2 - 2 (S2^{1/2} S1 S2^{1/2})^{1/2}).
inline double gaussian_w2(const Eigen::VectorXd& mu1, const Eigen::MatrixXd& s1,
                          const Eigen::VectorXd& mu2,
                          const Eigen::MatrixXd& s2) {
  require_spd(s1, "S1");
  require_spd(s2, "S2");
  Eigen::MatrixXd root2 = spd_sqrt(s2);
  Eigen::MatrixXd cross = spd_sqrt(root2 * s1 * root2);
  double tr = s1.trace() + s2.trace() - 2.0 * cross.trace();
  return (mu1 - mu2).squaredNorm() + std::max(tr, 0.0);
}

}  // namespace fpesc
