#pragma once

#include "dqnmesh/common.hpp"

#include <optional>

namespace dqnmesh {

/// Iterate and tracked-gradient differences seen by one agent in one round.
struct CurvaturePair {
  Vector s;  // x^(k+1) - x^(k)
  Vector y;  // v^(k+1) - v^(k)
};

inline constexpr double kCurvatureThreshold = 1e-10;
inline constexpr double kDefaultInverseCeiling = 1e3;  // gamma
inline constexpr double kDefaultEigenFloor = 1e-8;

/// Local estimate C of the inverse of the mean Hessian.
struct InverseHessianEstimate {
  Matrix c;
  double gamma = kDefaultInverseCeiling;

  /// q = gamma * sqrt(min(n, N)), the analysis constant in the step-size bound.
  double q(int n_agents) const;
};

/// Local estimate B of the mean Hessian.
struct HessianEstimate {
  Matrix b;
};

enum class QnScheme { Bfgs, Dfp };

const char* to_string(QnScheme scheme);
QnScheme parse_qn_scheme(const std::string& name);

/// True when y^T s >= threshold * |y| |s| with both vectors nonzero.
bool curvature_ok(const CurvaturePair& pair, double threshold = kCurvatureThreshold);

// Each update returns std::nullopt when the curvature condition fails; the
// caller keeps its previous estimate in that case.

/// C' = (I - s y^T/y^T s) C (I - y s^T/y^T s) + s s^T/y^T s.
std::optional<InverseHessianEstimate> bfgs_inverse_update(const InverseHessianEstimate& c,
                                                          const CurvaturePair& pair);
/// C' = C - C y y^T C / y^T C y + s s^T / y^T s.
std::optional<InverseHessianEstimate> dfp_inverse_update(const InverseHessianEstimate& c,
                                                         const CurvaturePair& pair);
/// B' = B - B s s^T B / s^T B s + y y^T / y^T s.
std::optional<HessianEstimate> bfgs_hessian_update(const HessianEstimate& b,
                                                   const CurvaturePair& pair);
/// B' = (I - y s^T/y^T s) B (I - s y^T/y^T s) + y y^T/y^T s.
std::optional<HessianEstimate> dfp_hessian_update(const HessianEstimate& b,
                                                  const CurvaturePair& pair);

/// Eigendecompose a symmetric matrix and clamp its spectrum into
/// [floor, ceiling]. Throws InputError on asymmetric input.
Matrix pd_safeguard(const Matrix& m, double floor, std::optional<double> ceiling = std::nullopt);

/// Cholesky-based check that floor*I < m (and m < ceiling*I when given).
bool spectrum_within(const Matrix& m, double floor, std::optional<double> ceiling = std::nullopt);

/// Applies pd_safeguard only when spectrum_within fails. Returns true if it clamped.
bool enforce_spectrum(Matrix& m, double floor, std::optional<double> ceiling = std::nullopt);

}  // namespace dqnmesh
