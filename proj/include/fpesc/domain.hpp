#pragma once

#include <Eigen/Core>
#include <cmath>

#include "fpesc/errors.hpp"

namespace fpesc {

enum class BoundaryKind { torus, free_space };

// Spatial domain: the centered box [-l/2, l/2)^d with opposite faces
// identified (torus), or all of R^d.
struct DomainMode {
  BoundaryKind kind = BoundaryKind::free_space;
  double l = 0.0;
  int dim = 1;

  static DomainMode torus(double side, int d) {
    if (side <= 0.0) throw ConfigError("torus side length must be positive");
    if (d < 1) throw ConfigError("dimension must be >= 1");
    return DomainMode{BoundaryKind::torus, side, d};
  }
  static DomainMode free_space(int d) {
    if (d < 1) throw ConfigError("dimension must be >= 1");
    return DomainMode{BoundaryKind::free_space, 0.0, d};
  }
  bool is_torus() const { return kind == BoundaryKind::torus; }
};

// Unique representative of x mod l in [-l/2, l/2).
inline double wrap_coord(double x, double l) {
  return x - l * std::floor(x / l + 0.5);
}

inline Eigen::VectorXd wrap(const DomainMode& mode, const Eigen::VectorXd& x) {
  if (!mode.is_torus()) throw ModeMismatchError("wrap requires a torus domain");
  Eigen::VectorXd out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) out[i] = wrap_coord(x[i], mode.l);
  return out;
}

// [sin(2 pi x / l); cos(2 pi x / l)] componentwise. Wraps first so that
// shifted inputs with equal wrapped representatives embed bit-identically.
inline Eigen::VectorXd embed_periodic(const DomainMode& mode, const Eigen::VectorXd& x) {
  if (!mode.is_torus())
    throw ModeMismatchError("embed_periodic requires a torus domain");
  const double w = 2.0 * M_PI / mode.l;
  Eigen::VectorXd out(2 * x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    double xi = wrap_coord(x[i], mode.l);
    out[i] = std::sin(w * xi);
    out[x.size() + i] = std::cos(w * xi);
  }
  return out;
}

// x - y in free space; the shortest wrapped representative on the torus.
inline Eigen::VectorXd min_displacement(const DomainMode& mode,
                                        const Eigen::VectorXd& x,
                                        const Eigen::VectorXd& y) {
  Eigen::VectorXd d = x - y;
  if (!mode.is_torus()) return d;
  for (Eigen::Index i = 0; i < d.size(); ++i) d[i] = wrap_coord(d[i], mode.l);
  return d;
}

}  // namespace fpesc
