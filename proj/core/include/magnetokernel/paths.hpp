#pragma once

#include <cstdint>
#include <vector>

#include "magnetokernel/geometry.hpp"

namespace mk::paths {

/// Uniform grid s_k = k * tau / n on [0, tau].
struct TimeGrid {
    double tau;
    int n_steps;

    TimeGrid(double tau_, int n_steps_) : tau(tau_), n_steps(n_steps_) {
        if (tau <= 0.0) throw std::invalid_argument("TimeGrid: tau must be positive");
        if (n_steps < 2) throw std::invalid_argument("TimeGrid: n_steps must be >= 2");
    }

    double node(int k) const { return tau * static_cast<double>(k) / n_steps; }
    double dt() const { return tau / n_steps; }
};

/// Brownian bridge on the unit interval, pinned to zero at both ends.
/// values[k] = a(k/n) componentwise, values[0] = values[n] = 0 exactly.
struct BridgePath {
    int dim;
    std::vector<Vec> values;  // n+1 nodes

    int n_steps() const { return static_cast<int>(values.size()) - 1; }
};

/// Feynman-Kac path between fixed endpoints:
///   q_k = x + (x' - x) * s_k / tau + sigma * sqrt(tau) * a(s_k / tau).
/// Keeps the underlying bridge so the drift/bridge split stays available to
/// the stochastic-integral decompositions.
struct SpacePath {
    Vec x;
    Vec x_prime;
    double tau;
    double sigma;
    int dim;
    std::vector<Vec> points;  // n+1 nodes, points[0] = x, points[n] = x'
    std::vector<Vec> bridge;  // the unit-interval bridge that generated it

    int n_steps() const { return static_cast<int>(points.size()) - 1; }
    Vec increment(int k) const { return points[k + 1] - points[k]; }
};

/// Brownian motion b(s_k) on the grid, b(0) = 0; increments are independent
/// N(0, dt) per component.
std::vector<Vec> sample_brownian(const TimeGrid& grid, int dim, std::uint64_t seed,
                                 std::uint64_t stream_id);

/// Bridge via increment pinning a(s) = b(s) - s b(1) on the unit grid; the
/// covariance E[a_j(s) a_k(s')] = delta_jk s'(1-s), s' <= s, is exact on grid
/// nodes.
BridgePath sample_bridge(int n_steps, int dim, std::uint64_t seed, std::uint64_t stream_id);

/// Non-allocating variant for estimator inner loops; buf is resized to
/// n_steps + 1 values with buf[0] = buf[n] = 0 exactly.
void sample_bridge_into(std::vector<Vec>& buf, int n_steps, int dim, std::uint64_t seed,
                        std::uint64_t stream_id);

/// Affine map of a bridge onto the path between x and x' in imaginary time
/// tau. Endpoints are assigned exactly, not through the formula.
SpacePath make_space_path(const BridgePath& bridge, const Vec& x, const Vec& x_prime, double tau,
                          const PhysParams& params);

}  // namespace mk::paths
