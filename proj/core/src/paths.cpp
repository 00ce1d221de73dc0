#include "magnetokernel/paths.hpp"

#include <cmath>

#include "magnetokernel/rng.hpp"

namespace mk::paths {

std::vector<Vec> sample_brownian(const TimeGrid& grid, int dim, std::uint64_t seed,
                                 std::uint64_t stream_id) {
    if (dim < 1 || dim > 3) throw std::invalid_argument("sample_brownian: dim must be 1..3");
    rng::Stream stream(seed, stream_id);
    const int n = grid.n_steps;
    const double step_sd = std::sqrt(grid.dt());
    std::vector<Vec> b(n + 1, Vec{0.0, 0.0, 0.0});
    for (int k = 1; k <= n; ++k) {
        for (int d = 0; d < dim; ++d) b[k][d] = b[k - 1][d] + step_sd * stream.normal();
    }
    return b;
}

void sample_bridge_into(std::vector<Vec>& buf, int n_steps, int dim, std::uint64_t seed,
                        std::uint64_t stream_id) {
    if (n_steps < 2) throw std::invalid_argument("sample_bridge: n_steps must be >= 2");
    if (dim < 1 || dim > 3) throw std::invalid_argument("sample_bridge: dim must be 1..3");
    rng::Stream stream(seed, stream_id);
    const double step_sd = std::sqrt(1.0 / n_steps);
    buf.assign(static_cast<std::size_t>(n_steps) + 1, Vec{0.0, 0.0, 0.0});
    for (int k = 1; k <= n_steps; ++k) {
        for (int d = 0; d < dim; ++d) buf[k][d] = buf[k - 1][d] + step_sd * stream.normal();
    }
    const Vec end = buf[static_cast<std::size_t>(n_steps)];
    for (int k = 1; k < n_steps; ++k) {
        const double s = static_cast<double>(k) / n_steps;
        for (int d = 0; d < dim; ++d) buf[k][d] -= s * end[d];
    }
    buf[static_cast<std::size_t>(n_steps)] = Vec{0.0, 0.0, 0.0};
}

BridgePath sample_bridge(int n_steps, int dim, std::uint64_t seed, std::uint64_t stream_id) {
    BridgePath path;
    path.dim = dim;
    sample_bridge_into(path.values, n_steps, dim, seed, stream_id);
    return path;
}

SpacePath make_space_path(const BridgePath& bridge, const Vec& x, const Vec& x_prime, double tau,
                          const PhysParams& params) {
    if (bridge.dim != params.dimension)
        throw std::invalid_argument("make_space_path: bridge/params dimension mismatch");
    if (tau <= 0.0) throw std::invalid_argument("make_space_path: tau must be positive");
    const int n = bridge.n_steps();
    SpacePath path;
    path.x = x;
    path.x_prime = x_prime;
    path.tau = tau;
    path.sigma = params.sigma;
    path.dim = bridge.dim;
    path.bridge = bridge.values;
    path.points.assign(n + 1, Vec{0.0, 0.0, 0.0});
    const double scale = params.sigma * std::sqrt(tau);
    path.points[0] = x;
    path.points[n] = x_prime;
    for (int k = 1; k < n; ++k) {
        const double u = static_cast<double>(k) / n;
        for (int d = 0; d < bridge.dim; ++d)
            path.points[k][d] = x[d] + (x_prime[d] - x[d]) * u + scale * bridge.values[k][d];
    }
    return path;
}

}  // namespace mk::paths
