#pragma once

#include <functional>
#include <stdexcept>

#include "magnetokernel/geometry.hpp"
#include "magnetokernel/paths.hpp"

namespace mk::stochint {

using VectorField = std::function<Vec(const Vec&)>;
using PairCovarianceFn = std::function<Mat(const Vec&, const Vec&)>;

/// Ito (left endpoint) and Stratonovich (midpoint) sums for the same path.
/// correction is defined as their difference, which is the discretization of
/// the (sigma^2/2) div A correction and makes the identity
/// stratonovich = ito + correction hold to the last bit.
struct LineIntegralResult {
    double ito = 0.0;
    double stratonovich = 0.0;
    double correction = 0.0;
};

/// Left-endpoint (non-anticipating) sum  sum_k A(q_k) . (q_{k+1} - q_k).
/// NaNs coming out of the field evaluation propagate into the result.
double ito_integral(const VectorField& field, const paths::SpacePath& path);

/// Midpoint sum  sum_k A((q_k + q_{k+1})/2) . (q_{k+1} - q_k).
double stratonovich_integral(const VectorField& field, const paths::SpacePath& path);

/// Both rules in one pass over the path.
LineIntegralResult line_integrals(const VectorField& field, const paths::SpacePath& path);

/// Thrown when a covariance evaluation produces a negative quadratic form
/// (positive semidefiniteness violated on the sampled points).
struct CovarianceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Pathwise split of the double sum  sum_{k,l} dq_k . G(q_k, q_l) . dq_l.
///
/// Each increment is decomposed exactly as dq = d + M + S with
///   d = (x' - x)/n                                  (drift part)
///   M = -sigma sqrt(tau) du a(u_k)/(1 - u_k)        (bridge-position part)
///   S = dq - d - M                                  (stochastic-integral part,
///                                                    (1-u_{k+1}) db of the
///                                                    time-changed motion)
/// and the six reported groups partition all part pairs:
///   drift_drift        (d,d) over all (k,l)
///   bridge_bridge      (M,M) over all (k,l)
///   equal_time_trace   (S,S) on the diagonal k = l
///   cross_drift_bridge (d,M) and (M,d) over all (k,l)
///   stochastic_integral  every remaining pair involving S
/// so six_term_sum() equals total up to rounding at any n.
struct VarianceDecomposition {
    double drift_drift = 0.0;
    double bridge_bridge = 0.0;
    double equal_time_trace = 0.0;
    double cross_drift_bridge_a = 0.0;  // (d, M)
    double cross_drift_bridge_b = 0.0;  // (M, d)
    double stochastic_integral = 0.0;
    double total = 0.0;  // direct double sum, computed independently

    double six_term_sum() const {
        return drift_drift + bridge_bridge + equal_time_trace + cross_drift_bridge_a +
               cross_drift_bridge_b + stochastic_integral;
    }
};

VarianceDecomposition variance_decomposition(const PairCovarianceFn& covariance,
                                             const paths::SpacePath& path);

/// The direct total alone:  sum_{k,l} dq_k . G(q_k, q_l) . dq_l.
/// Throws CovarianceError if the value comes out negative beyond rounding.
double quadratic_form_total(const PairCovarianceFn& covariance, const paths::SpacePath& path);

}  // namespace mk::stochint
