#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace mk {

/// A point in R^D, D <= 3. Unused components are kept at zero so that
/// dot products and norms can loop over all three slots unconditionally.
using Vec = std::array<double, 3>;

inline Vec vec(double x, double y = 0.0, double z = 0.0) { return Vec{x, y, z}; }

inline Vec operator+(const Vec& a, const Vec& b) {
    return Vec{a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}
inline Vec operator-(const Vec& a, const Vec& b) {
    return Vec{a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}
inline Vec operator*(double s, const Vec& a) { return Vec{s * a[0], s * a[1], s * a[2]}; }
inline Vec& operator+=(Vec& a, const Vec& b) {
    a[0] += b[0];
    a[1] += b[1];
    a[2] += b[2];
    return a;
}

inline double dot(const Vec& a, const Vec& b) {
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}
inline double norm2(const Vec& a) { return dot(a, a); }
inline double norm(const Vec& a) { return std::sqrt(norm2(a)); }

/// Row-major 3x3 matrix; covariance evaluations fill the upper-left DxD block
/// and leave the rest zero.
struct Mat {
    std::array<double, 9> m{};

    double& operator()(int i, int j) { return m[static_cast<std::size_t>(3 * i + j)]; }
    double operator()(int i, int j) const { return m[static_cast<std::size_t>(3 * i + j)]; }

    /// u . M . v
    double quad(const Vec& u, const Vec& v) const {
        double acc = 0.0;
        for (int i = 0; i < 3; ++i) {
            const double ui = u[static_cast<std::size_t>(i)];
            if (ui == 0.0) continue;
            acc += ui * (m[static_cast<std::size_t>(3 * i)] * v[0] +
                         m[static_cast<std::size_t>(3 * i + 1)] * v[1] +
                         m[static_cast<std::size_t>(3 * i + 2)] * v[2]);
        }
        return acc;
    }

    double trace() const { return m[0] + m[4] + m[8]; }

    static Mat diagonal(double value, int dim) {
        Mat g;
        for (int i = 0; i < dim; ++i) g(i, i) = value;
        return g;
    }
};

/// Shared physical constants: hbar, mass, spatial dimension and the derived
/// diffusion scale sigma = sqrt(hbar/mass) that multiplies every Brownian
/// bridge displacement.
struct PhysParams {
    double hbar = 1.0;
    double mass = 1.0;
    int dimension = 1;
    double sigma = 1.0;  // sqrt(hbar/mass)

    PhysParams() = default;
    PhysParams(double hbar_, double mass_, int dim) : hbar(hbar_), mass(mass_), dimension(dim) {
        if (hbar <= 0.0) throw std::invalid_argument("PhysParams: hbar must be positive");
        if (mass <= 0.0) throw std::invalid_argument("PhysParams: mass must be positive");
        if (dim < 1 || dim > 3)
            throw std::invalid_argument("PhysParams: dimension must be 1, 2 or 3");
        sigma = std::sqrt(hbar / mass);
    }

    static PhysParams natural(int dim) { return PhysParams(1.0, 1.0, dim); }
};

}  // namespace mk
