#pragma once

#include <complex>

#include "magnetokernel/geometry.hpp"

namespace mk::exact {

/// Free heat kernel of exp(tau A) with A = -(hbar/2m) Laplacian / hbar:
///   (2 pi tau sigma^2)^{-D/2} exp(-|x - x'|^2 / (2 tau sigma^2)).
double free_kernel(const Vec& x, const Vec& x_prime, double tau, const PhysParams& params);

/// Just the prefactor (2 pi tau sigma^2)^{-D/2} times the Gaussian endpoint
/// factor; identical to free_kernel but named for use as the universal
/// prefactor of the Feynman-Kac representation.
double free_prefactor(const Vec& x, const Vec& x_prime, double tau, const PhysParams& params);

/// Trace of exp(-tau H)/hbar-evolution for a 1D oscillator whose eigenvalues
/// are hbar omega (n + 1/2):  sum_n exp(-tau omega (n + 1/2))
///   = (2 sinh(omega tau / 2))^{-1}.
/// Note the factor 2 in front of sinh; the eigenvalue sum fixes it, and the
/// (sinh)^{-1} form quoted in parts of the literature drops it.
double harmonic_trace(double omega, double tau);

/// Mehler kernel: 1D oscillator V = (1/2) m omega^2 x^2, kernel of the
/// imaginary-time evolution exp(tau A). Its diagonal integral reproduces
/// harmonic_trace.
double mehler_kernel(double x, double x_prime, double tau, double omega, const PhysParams& params);

/// Constant-magnetic-field kernel in D = 3, field B along z, symmetric gauge
/// A = (B/2)(-y, x, 0):
///   free 1D kernel in z  x  (B / (4 pi hbar sinh(theta)))
///     exp(-(B/(4 hbar)) coth(theta) ((x-x')^2 + (y-y')^2)
///         + i (B/(2 hbar)) (x y' - x' y)),   theta = B tau / (2 m).
/// The prefactor normalization (4 pi, not 2 pi) and the single power of B are
/// fixed by the B -> 0 limit against free_kernel and by Chapman-Kolmogorov;
/// both are checked in the test suite.
std::complex<double> landau_kernel(const Vec& x, const Vec& x_prime, double tau, double b_field,
                                   const PhysParams& params);

/// Transverse (2D) factor of the Landau kernel; used directly for D = 2
/// constant-field runs.
std::complex<double> landau_kernel_2d(const Vec& x, const Vec& x_prime, double tau, double b_field,
                                      const PhysParams& params);

/// Free Green function (-A + m^2/2)^{-1}(x, x') as the proper-time integral
/// of the free kernel. Closed forms:
///   D=1:  exp(-m r / sigma) / (m sigma)
///   D=2:  K_0(m r / sigma) / (pi sigma^2)
///   D=3:  exp(-m r / sigma) / (2 pi r sigma^2)
/// Coincident points are rejected for D >= 2 (the integral diverges).
double free_green(const Vec& x, const Vec& x_prime, double mass_m, const PhysParams& params);

}  // namespace mk::exact
