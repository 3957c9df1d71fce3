#include "dqnmesh/quasi_newton.hpp"

#include <algorithm>
#include <cmath>

namespace dqnmesh {

namespace {

void symmetrize(Matrix& m) { m = 0.5 * (m + m.transpose()).eval(); }

}  // namespace

double InverseHessianEstimate::q(int n_agents) const {
  const auto n = static_cast<int>(c.rows());
  return gamma * std::sqrt(static_cast<double>(std::min(n, n_agents)));
}

const char* to_string(QnScheme scheme) { return scheme == QnScheme::Bfgs ? "bfgs" : "dfp"; }

QnScheme parse_qn_scheme(const std::string& name) {
  if (name == "bfgs") return QnScheme::Bfgs;
  if (name == "dfp") return QnScheme::Dfp;
  throw InputError("unknown quasi-Newton scheme '" + name + "'");
}

bool curvature_ok(const CurvaturePair& pair, double threshold) {
  if (pair.s.size() != pair.y.size()) throw InputError("CurvaturePair: s and y differ in size");
  const double sn = pair.s.norm();
  const double yn = pair.y.norm();
  if (sn == 0.0 || yn == 0.0 || !std::isfinite(sn) || !std::isfinite(yn)) return false;
  return pair.y.dot(pair.s) >= threshold * sn * yn;
}

std::optional<InverseHessianEstimate> bfgs_inverse_update(const InverseHessianEstimate& c,
                                                          const CurvaturePair& pair) {
  if (!curvature_ok(pair)) return std::nullopt;
  const Vector& s = pair.s;
  const Vector& y = pair.y;
  const double rho = 1.0 / y.dot(s);
  // Expanded product form: C' = C - rho (s (Cy)^T + (Cy) s^T) + (rho^2 y^T C y + rho) s s^T.
  const Vector cy = c.c * y;
  const double ycy = y.dot(cy);
  InverseHessianEstimate out{c.c, c.gamma};
  out.c.noalias() -= rho * (s * cy.transpose() + cy * s.transpose());
  out.c.noalias() += (rho * rho * ycy + rho) * (s * s.transpose());
  symmetrize(out.c);
  return out;
}

std::optional<InverseHessianEstimate> dfp_inverse_update(const InverseHessianEstimate& c,
                                                         const CurvaturePair& pair) {
  if (!curvature_ok(pair)) return std::nullopt;
  const Vector& s = pair.s;
  const Vector& y = pair.y;
  const Vector cy = c.c * y;
  const double ycy = y.dot(cy);
  if (!(ycy > 0.0)) return std::nullopt;
  InverseHessianEstimate out{c.c, c.gamma};
  out.c.noalias() -= (cy * cy.transpose()) / ycy;
  out.c.noalias() += (s * s.transpose()) / y.dot(s);
  symmetrize(out.c);
  return out;
}

std::optional<HessianEstimate> bfgs_hessian_update(const HessianEstimate& b,
                                                   const CurvaturePair& pair) {
  if (!curvature_ok(pair)) return std::nullopt;
  const Vector& s = pair.s;
  const Vector& y = pair.y;
  const Vector bs = b.b * s;
  const double sbs = s.dot(bs);
  if (!(sbs > 0.0)) return std::nullopt;
  HessianEstimate out{b.b};
  out.b.noalias() -= (bs * bs.transpose()) / sbs;
  out.b.noalias() += (y * y.transpose()) / y.dot(s);
  symmetrize(out.b);
  return out;
}

std::optional<HessianEstimate> dfp_hessian_update(const HessianEstimate& b,
                                                  const CurvaturePair& pair) {
  if (!curvature_ok(pair)) return std::nullopt;
  const Vector& s = pair.s;
  const Vector& y = pair.y;
  const double rho = 1.0 / y.dot(s);
  const Vector bs = b.b * s;
  const double sbs = s.dot(bs);
  HessianEstimate out{b.b};
  out.b.noalias() -= rho * (y * bs.transpose() + bs * y.transpose());
  out.b.noalias() += (rho * rho * sbs + rho) * (y * y.transpose());
  symmetrize(out.b);
  return out;
}

Matrix pd_safeguard(const Matrix& m, double floor, std::optional<double> ceiling) {
  if (m.rows() != m.cols()) throw InputError("pd_safeguard: matrix must be square");
  if (!(floor > 0.0)) throw InputError("pd_safeguard: floor must be positive");
  if (ceiling && *ceiling < floor) throw InputError("pd_safeguard: ceiling below floor");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw InputError("pd_safeguard: matrix is not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (m + m.transpose()));
  Vector lam = eig.eigenvalues();
  bool changed = false;
  for (Eigen::Index k = 0; k < lam.size(); ++k) {
    double clamped = std::max(lam[k], floor);
    if (ceiling) clamped = std::min(clamped, *ceiling);
    changed = changed || clamped != lam[k];
    lam[k] = clamped;
  }
  if (!changed) return m;
  Matrix out = eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().transpose();
  symmetrize(out);
  return out;
}

bool spectrum_within(const Matrix& m, double floor, std::optional<double> ceiling) {
  if (!m.allFinite()) return false;
  const auto n = m.rows();
  Eigen::LLT<Matrix> lower(m - floor * Matrix::Identity(n, n));
  if (lower.info() != Eigen::Success) return false;
  if (ceiling) {
    Eigen::LLT<Matrix> upper(*ceiling * Matrix::Identity(n, n) - m);
    if (upper.info() != Eigen::Success) return false;
  }
  return true;
}

bool enforce_spectrum(Matrix& m, double floor, std::optional<double> ceiling) {
  if (spectrum_within(m, floor, ceiling)) return false;
  if (!m.allFinite()) throw DivergenceError("curvature estimate became non-finite");
  m = pd_safeguard(m, floor, ceiling);
  return true;
}

}  // namespace dqnmesh
