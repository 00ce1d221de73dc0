#include "magnetokernel/exact.hpp"

#include <cmath>
#include <stdexcept>

namespace mk::exact {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

double free_kernel(const Vec& x, const Vec& x_prime, double tau, const PhysParams& params) {
    if (tau <= 0.0) throw std::invalid_argument("free_kernel: tau must be positive");
    const double var = tau * params.sigma * params.sigma;
    const double r2 = norm2(x - x_prime);
    return std::pow(kTwoPi * var, -0.5 * params.dimension) * std::exp(-r2 / (2.0 * var));
}

double free_prefactor(const Vec& x, const Vec& x_prime, double tau, const PhysParams& params) {
    return free_kernel(x, x_prime, tau, params);
}

double harmonic_trace(double omega, double tau) {
    if (omega <= 0.0 || tau <= 0.0)
        throw std::invalid_argument("harmonic_trace: omega and tau must be positive");
    return 0.5 / std::sinh(0.5 * omega * tau);
}

double mehler_kernel(double x, double x_prime, double tau, double omega,
                     const PhysParams& params) {
    if (omega <= 0.0 || tau <= 0.0)
        throw std::invalid_argument("mehler_kernel: omega and tau must be positive");
    const double w = omega * tau;
    const double pref = params.mass * omega / (params.hbar * std::sinh(w));
    const double quad = (x * x + x_prime * x_prime) * std::cosh(w) - 2.0 * x * x_prime;
    return std::sqrt(pref / kTwoPi) * std::exp(-0.5 * pref * quad);
}

std::complex<double> landau_kernel_2d(const Vec& x, const Vec& x_prime, double tau, double b_field,
                                      const PhysParams& params) {
    if (b_field <= 0.0 || tau <= 0.0)
        throw std::invalid_argument("landau_kernel: B and tau must be positive");
    const double theta = b_field * tau / (2.0 * params.mass);
    const double pref = b_field / (2.0 * kTwoPi * params.hbar * std::sinh(theta));
    const double dx = x[0] - x_prime[0];
    const double dy = x[1] - x_prime[1];
    const double gauss = -(b_field / (4.0 * params.hbar)) * (std::cosh(theta) / std::sinh(theta)) *
                         (dx * dx + dy * dy);
    const double phase = (b_field / (2.0 * params.hbar)) * (x[0] * x_prime[1] - x_prime[0] * x[1]);
    return pref * std::exp(gauss) * std::complex<double>(std::cos(phase), std::sin(phase));
}

std::complex<double> landau_kernel(const Vec& x, const Vec& x_prime, double tau, double b_field,
                                   const PhysParams& params) {
    if (params.dimension != 3) throw std::invalid_argument("landau_kernel: requires D = 3");
    const double var = tau * params.sigma * params.sigma;
    const double dz = x[2] - x_prime[2];
    const double along = std::pow(kTwoPi * var, -0.5) * std::exp(-dz * dz / (2.0 * var));
    return along * landau_kernel_2d(x, x_prime, tau, b_field, params);
}

double free_green(const Vec& x, const Vec& x_prime, double mass_m, const PhysParams& params) {
    if (mass_m <= 0.0) throw std::invalid_argument("free_green: m must be positive");
    const double r = norm(x - x_prime);
    const double sigma = params.sigma;
    switch (params.dimension) {
        case 1:
            return std::exp(-mass_m * r / sigma) / (mass_m * sigma);
        case 2:
            if (r == 0.0) throw std::invalid_argument("free_green: diverges at x = x' for D = 2");
            return std::cyl_bessel_k(0.0, mass_m * r / sigma) / (0.5 * kTwoPi * sigma * sigma);
        case 3:
            if (r == 0.0) throw std::invalid_argument("free_green: diverges at x = x' for D = 3");
            return std::exp(-mass_m * r / sigma) / (kTwoPi * r * sigma * sigma);
        default:
            throw std::invalid_argument("free_green: unsupported dimension");
    }
}

}  // namespace mk::exact
