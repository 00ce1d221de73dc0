#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

#include "magnetokernel/fields.hpp"
#include "magnetokernel/geometry.hpp"
#include "magnetokernel/paths.hpp"

namespace mk::estimator {

struct EstimatorError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct BoxTooSmallError : EstimatorError {
    using EstimatorError::EstimatorError;
};

/// Scalar potential variants. Quadratic(omega) is the oscillator
/// V(x) = (1/2) m omega^2 |x|^2 (or a single axis), so that omega is the
/// oscillation frequency whose eigenvalues enter harmonic_trace directly.
/// PowerLaw is V(x) = coeff |x|^{2 beta}. Custom carries declared bounds
/// c <= V <= a; the lower bound is checked on every evaluation.
class ScalarPotential {
  public:
    enum class Kind { Zero, Quadratic, PowerLaw, Custom };

    static ScalarPotential zero();
    static ScalarPotential quadratic(double omega, int axis = -1);  // axis -1: isotropic
    static ScalarPotential power_law(double coeff, double beta, double shift = 0.0);
    static ScalarPotential custom(std::function<double(const Vec&)> fn, double lower_c,
                                  double upper_a, std::string label = "custom");

    double operator()(const Vec& x, const PhysParams& params) const;
    bool is_zero() const { return kind_ == Kind::Zero; }
    Kind kind() const { return kind_; }
    double lower_bound() const { return lower_c_; }
    /// +inf when no finite upper bound is declared.
    double upper_bound() const { return upper_a_; }
    double omega() const { return omega_; }
    double beta() const { return beta_; }
    double coeff() const { return coeff_; }
    int axis() const { return axis_; }
    const std::string& label() const { return label_; }

  private:
    Kind kind_ = Kind::Zero;
    double omega_ = 0.0;
    double coeff_ = 0.0;
    double beta_ = 0.0;
    double shift_ = 0.0;
    int axis_ = -1;
    double lower_c_ = 0.0;
    double upper_a_ = 0.0;
    std::function<double(const Vec&)> fn_;
    std::string label_ = "zero";
};

struct McBudget {
    long n_paths = 10000;
    int n_steps = 128;
};

/// Monte Carlo kernel estimate. mean is complex for per-realization
/// fixed-field kernels and real (zero imaginary part up to noise) for the
/// averaged estimators; std_error() is the standard error of the real part.
struct KernelEstimate {
    std::complex<double> mean{0.0, 0.0};
    double se_real = 0.0;
    double se_imag = 0.0;
    long n_paths = 0;
    int n_steps = 0;
    long n_exited = 0;
    int n_fields = 0;              // quenched runs only
    double se_field_level = 0.0;   // spread of per-field means
    double se_path_level = 0.0;    // within-field MC error, averaged
    Vec x{}, x_prime{};
    double tau = 0.0;

    double std_error() const { return se_real; }
};

/// Per-realization Feynman-Kac kernel (complex phase):
///   prefactor * E[ exp(i/hbar Strat(A) - (1/hbar) int V) ]
/// Paths that leave the field grid are counted and skipped; more than 0.1%
/// of them aborts the estimate.
KernelEstimate kernel_fixed_field(const fields::FieldSample& field, const ScalarPotential& V,
                                  const Vec& x, const Vec& x_prime, double tau,
                                  const McBudget& budget, const PhysParams& params,
                                  std::uint64_t seed, int workers = 0,
                                  std::uint64_t path_stream_ctx = 0);

/// Quenched field average: mean over n_fields independent realizations of
/// kernel_fixed_field. The reported std_error is the spread of per-field
/// means; the field/path variance split is exposed separately.
KernelEstimate kernel_quenched_average(const fields::CovarianceSpec& spec,
                                       const fields::GridSpec& grid, const ScalarPotential& V,
                                       const Vec& x, const Vec& x_prime, double tau, int n_fields,
                                       const McBudget& budget, const PhysParams& params,
                                       std::uint64_t seed, int workers = 0);

/// Analytic Gaussian average over the field per bridge:
///   prefactor * E[ exp(-Sigma[q]/(2 hbar^2) - (1/hbar) int V) ]
/// with Sigma[q] the direct covariance double sum over path increments.
KernelEstimate kernel_gaussian_average(const fields::PairCovariance& cov,
                                       const ScalarPotential& V, const Vec& x, const Vec& x_prime,
                                       double tau, const McBudget& budget,
                                       const PhysParams& params, std::uint64_t seed,
                                       int workers = 0, std::uint64_t path_stream_ctx = 0);

/// Bridge-averaged moments of the exponent pieces: E[Sigma[q]] and
/// E[int V ds], with standard errors. This is what the Jensen lower bound
/// exponentiates.
struct ExponentMoments {
    double sigma_mean = 0.0;
    double sigma_se = 0.0;
    double v_mean = 0.0;
    double v_se = 0.0;
};
ExponentMoments exponent_moments(const fields::PairCovariance& cov, const ScalarPotential& V,
                                 const Vec& x, const Vec& x_prime, double tau,
                                 const McBudget& budget, const PhysParams& params,
                                 std::uint64_t seed, int workers = 0);

struct TraceOptions {
    double box_halfwidth = 6.0;
    int nodes_per_axis = 41;   // Simpson; forced odd
    bool radial = false;       // D>=2: integrate the (isotropic) diagonal radially
    double boundary_tol = 1e-3;
};

struct TraceEstimate {
    double value = 0.0;
    double std_error = 0.0;
    double truncation_bound = 0.0;
    double boundary_ratio = 0.0;
    double tau = 0.0;
};

/// Quadrature over a box of field-averaged diagonal kernel estimates.
/// Rejects configurations whose diagonal has not decayed to boundary_tol of
/// the central value at the box edge (non-confining potentials).
TraceEstimate trace_estimate(const fields::PairCovariance& cov, const ScalarPotential& V,
                             double tau, const TraceOptions& options, const McBudget& budget,
                             const PhysParams& params, std::uint64_t seed, int workers = 0);

struct ProperTimeQuad {
    double tau_min = 1e-3;
    double tau_max = 50.0;
    int n_nodes = 49;  // forced odd so the coarse Richardson grid nests
};

struct GreenEstimate {
    double value = 0.0;
    double quadrature_error = 0.0;
    double mc_error = 0.0;
    double mass_m = 0.0;
    Vec x{}, x_prime{};
};

/// Proper-time representation of the Green function: log-spaced quadrature
/// over tau of e^{-m^2 tau/2} times field-averaged kernel estimates, with an
/// analytic free-kernel contribution below tau_min and an exponential tail
/// bound above tau_max folded into quadrature_error.
GreenEstimate green_estimate(const fields::PairCovariance& cov, const ScalarPotential& V,
                             const Vec& x, const Vec& x_prime, double mass_m,
                             const ProperTimeQuad& quad, const McBudget& budget,
                             const PhysParams& params, std::uint64_t seed, int workers = 0);

/// Gauge-invariant diagonal difference
///   int_0^inf dtau e^{-m^2 tau/2} [ <K^{(A,V)}(x,x)> - K^{(0,0)}(x,x) ],
/// finite for D <= 3. The small-tau tail is extrapolated from the measured
/// power law; an exponent <= -1 is reported as a detected divergence.
GreenEstimate green_diagonal_difference(const fields::PairCovariance& cov,
                                        const ScalarPotential& V, const Vec& x, double mass_m,
                                        const ProperTimeQuad& quad, const McBudget& budget,
                                        const PhysParams& params, std::uint64_t seed,
                                        int workers = 0);

}  // namespace mk::estimator
