#include <Eigen/Dense>
#include <cmath>
#include <numbers>

#include "atn/errors.hpp"
#include "atn/fwhm.hpp"
#include "atn/label.hpp"

namespace atn::fwhm {

EllipseFit fit_ellipse(std::span<const Point2> points) {
  const auto n = static_cast<Eigen::Index>(points.size());
  if (n < 5) throw FitError("ellipse fit needs at least 5 points, got " + std::to_string(n));

  // Normalise for conditioning.
  double mx = 0.0, my = 0.0;
  for (const auto& p : points) {
    mx += p.x;
    my += p.y;
  }
  mx /= n;
  my /= n;
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& p : points) {
    const Eigen::Vector2d d(p.x - mx, p.y - my);
    cov += d * d.transpose();
  }
  cov /= n;
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> spread(cov);
  const double lmax = spread.eigenvalues()(1);
  if (!(lmax > 0.0) || spread.eigenvalues()(0) <= 1e-12 * lmax)
    throw FitError("ellipse fit points are collinear");
  const double scale = std::sqrt(cov.trace());

  Eigen::MatrixXd d1(n, 3), d2(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = (points[i].x - mx) / scale;
    const double y = (points[i].y - my) / scale;
    d1.row(i) << x * x, x * y, y * y;
    d2.row(i) << x, y, 1.0;
  }
  const Eigen::Matrix3d s1 = d1.transpose() * d1;
  const Eigen::Matrix3d s2 = d1.transpose() * d2;
  const Eigen::Matrix3d s3 = d2.transpose() * d2;
  const Eigen::FullPivLU<Eigen::Matrix3d> s3_lu(s3);
  if (!s3_lu.isInvertible()) throw FitError("ellipse fit scatter matrix is singular");
  const Eigen::Matrix3d t = -s3_lu.solve(s2.transpose());
  const Eigen::Matrix3d m = s1 + s2 * t;
  Eigen::Matrix3d reduced;
  reduced.row(0) = m.row(2) / 2.0;
  reduced.row(1) = -m.row(1);
  reduced.row(2) = m.row(0) / 2.0;

  const Eigen::EigenSolver<Eigen::Matrix3d> es(reduced);
  int best = -1;
  double best_cond = 0.0;
  for (int k = 0; k < 3; ++k) {
    const Eigen::Vector3d v = es.eigenvectors().col(k).real();
    const double cond = 4.0 * v(0) * v(2) - v(1) * v(1);
    if (cond > best_cond) {
      best_cond = cond;
      best = k;
    }
  }
  if (best < 0) throw FitError("no elliptical solution for the point set");
  const Eigen::Vector3d a1 = es.eigenvectors().col(best).real();
  const Eigen::Vector3d a2 = t * a1;
  const double A = a1(0), B = a1(1), C = a1(2), D = a2(0), E = a2(1), F = a2(2);

  Eigen::Matrix2d q;
  q << A, B / 2.0, B / 2.0, C;
  const Eigen::Vector2d centre = q.fullPivLu().solve(Eigen::Vector2d(-D / 2.0, -E / 2.0));
  const double f0 = F + 0.5 * (D * centre(0) + E * centre(1));
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> qe(q);
  const double r1 = -f0 / qe.eigenvalues()(0);
  const double r2 = -f0 / qe.eigenvalues()(1);
  if (!(r1 > 0.0 && r2 > 0.0) || !std::isfinite(r1) || !std::isfinite(r2))
    throw FitError("degenerate ellipse fit");
  // Larger radius belongs to the smaller |eigenvalue|.
  const double ra = std::sqrt(r1), rb = std::sqrt(r2);
  const int major_idx = ra >= rb ? 0 : 1;
  const Eigen::Vector2d axis = qe.eigenvectors().col(major_idx);

  EllipseFit fit;
  fit.center = {centre(0) * scale + mx, centre(1) * scale + my};
  fit.major = std::max(ra, rb) * scale;
  fit.minor = std::min(ra, rb) * scale;
  fit.theta = wrap_pi(std::atan2(axis(1), axis(0)));
  if (!std::isfinite(fit.center.x) || !std::isfinite(fit.center.y))
    throw FitError("degenerate ellipse fit");
  return fit;
}

}  // namespace atn::fwhm
