#include <doctest.h>

#include <cmath>
#include <vector>

#include "magnetokernel/paths.hpp"
#include "magnetokernel/rng.hpp"

using namespace mk;
using paths::BridgePath;
using paths::TimeGrid;

namespace {

struct MeanSe {
    double mean;
    double se;
};

/// Sample mean and standard error of f over `n` draws.
template <class Fn>
MeanSe monte_carlo(long n, Fn&& f) {
    double sum = 0.0, sq = 0.0;
    for (long i = 0; i < n; ++i) {
        const double v = f(i);
        sum += v;
        sq += v * v;
    }
    const double mean = sum / n;
    const double var = (sq - n * mean * mean) / (n - 1);
    return {mean, std::sqrt(var / n)};
}

}  // namespace

TEST_CASE("Brownian motion matches E[b_j(s) b_k(s')] = delta_jk min(s, s')") {
    const TimeGrid grid(1.0, 8);
    const long n_samples = 100000;

    SUBCASE("Var[b_j(tau)] = tau at tau = 1") {
        const auto stat = monte_carlo(n_samples, [&](long i) {
            const auto b = paths::sample_brownian(grid, 1, 9001, rng::substream(1, i));
            return b[8][0] * b[8][0];
        });
        CHECK(std::abs(stat.mean - 1.0) < 3.0 * stat.se);
    }
    SUBCASE("cross components are uncorrelated") {
        const auto stat = monte_carlo(n_samples, [&](long i) {
            const auto b = paths::sample_brownian(grid, 2, 9002, rng::substream(2, i));
            return b[8][0] * b[8][1];
        });
        CHECK(std::abs(stat.mean) < 3.0 * stat.se);
    }
    SUBCASE("E[b(0.25) b(0.75)] = 0.25") {
        const auto stat = monte_carlo(n_samples, [&](long i) {
            const auto b = paths::sample_brownian(grid, 1, 9003, rng::substream(3, i));
            return b[2][0] * b[6][0];
        });
        CHECK(std::abs(stat.mean - 0.25) < 3.0 * stat.se);
    }
}

TEST_CASE("Brownian sampling rejects bad grids") {
    CHECK_THROWS_AS(TimeGrid(0.0, 8), std::invalid_argument);
    CHECK_THROWS_AS(TimeGrid(-1.0, 8), std::invalid_argument);
    CHECK_THROWS_AS(TimeGrid(1.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(paths::sample_bridge(1, 1, 1, 1), std::invalid_argument);
}

TEST_CASE("bridge endpoints are pinned to zero exactly") {
    const BridgePath a = paths::sample_bridge(64, 3, 123, 5);
    for (int d = 0; d < 3; ++d) {
        CHECK(a.values.front()[d] == 0.0);
        CHECK(a.values.back()[d] == 0.0);
    }
}

TEST_CASE("bridge covariance matches s'(1-s)") {
    const long n_samples = 100000;
    SUBCASE("E[a(0.25) a(0.5)] = 0.125") {
        const auto stat = monte_carlo(n_samples, [&](long i) {
            const auto a = paths::sample_bridge(8, 1, 77, rng::substream(4, i));
            return a.values[2][0] * a.values[4][0];
        });
        CHECK(std::abs(stat.mean - 0.125) < 3.0 * stat.se);
    }
    SUBCASE("Var[a(0.5)] = 0.25") {
        const auto stat = monte_carlo(n_samples, [&](long i) {
            const auto a = paths::sample_bridge(8, 1, 78, rng::substream(5, i));
            return a.values[4][0] * a.values[4][0];
        });
        CHECK(std::abs(stat.mean - 0.25) < 3.0 * stat.se);
    }
}

TEST_CASE("identical seeds give bit-identical bridges") {
    const BridgePath a = paths::sample_bridge(32, 2, 555, 9);
    const BridgePath b = paths::sample_bridge(32, 2, 555, 9);
    REQUIRE(a.values.size() == b.values.size());
    for (std::size_t k = 0; k < a.values.size(); ++k)
        for (int d = 0; d < 2; ++d) CHECK(a.values[k][d] == b.values[k][d]);
}

TEST_CASE("space path construction") {
    const PhysParams params = PhysParams::natural(3);
    BridgePath zero_bridge;
    zero_bridge.dim = 3;
    zero_bridge.values.assign(9, Vec{0.0, 0.0, 0.0});

    SUBCASE("zero bridge gives the straight line") {
        const auto path =
            paths::make_space_path(zero_bridge, vec(0, 0, 0), vec(1, 0, 0), 1.0, params);
        for (int k = 0; k <= 8; ++k) {
            CHECK(path.points[k][0] == doctest::Approx(k / 8.0).epsilon(1e-15));
            CHECK(path.points[k][1] == 0.0);
        }
        CHECK(path.points[0][0] == 0.0);
        CHECK(path.points[8][0] == 1.0);
    }
    SUBCASE("x = x' with zero bridge is a constant path") {
        const auto path =
            paths::make_space_path(zero_bridge, vec(0.3, -1, 2), vec(0.3, -1, 2), 2.0, params);
        for (const auto& q : path.points) {
            CHECK(q[0] == doctest::Approx(0.3).epsilon(1e-15));
            CHECK(q[1] == doctest::Approx(-1.0).epsilon(1e-15));
            CHECK(q[2] == doctest::Approx(2.0).epsilon(1e-15));
        }
    }
    SUBCASE("sigma = 0 makes the path drift-only") {
        // hbar -> 0 at fixed mass gives sigma = 0 up to rounding
        const PhysParams frozen(1e-30, 1.0, 3);
        const auto bridge = paths::sample_bridge(8, 3, 42, 0);
        const auto path = paths::make_space_path(bridge, vec(0, 0, 0), vec(1, 2, 3), 1.0, frozen);
        for (int k = 0; k <= 8; ++k)
            for (int d = 0; d < 3; ++d)
                CHECK(path.points[k][d] ==
                      doctest::Approx((d + 1) * k / 8.0).epsilon(1e-7));
    }
    SUBCASE("linear in the bridge argument") {
        const auto bridge = paths::sample_bridge(8, 3, 42, 1);
        BridgePath doubled = bridge;
        for (auto& v : doubled.values) v = 2.0 * v;
        const Vec x = vec(0.5, 0, 0), xp = vec(-0.5, 1, 0);
        const auto p1 = paths::make_space_path(bridge, x, xp, 1.0, params);
        const auto p2 = paths::make_space_path(doubled, x, xp, 1.0, params);
        for (int k = 0; k <= 8; ++k) {
            const double u = k / 8.0;
            for (int d = 0; d < 3; ++d) {
                const double drift = x[d] + (xp[d] - x[d]) * u;
                CHECK(p2.points[k][d] - drift ==
                      doctest::Approx(2.0 * (p1.points[k][d] - drift)).epsilon(1e-12));
            }
        }
    }
    SUBCASE("dimension mismatch is rejected") {
        const auto bridge = paths::sample_bridge(8, 2, 42, 2);
        CHECK_THROWS_AS(paths::make_space_path(bridge, vec(0), vec(1), 1.0, params),
                        std::invalid_argument);
    }
}

TEST_CASE("PhysParams invariant sigma^2 m = hbar") {
    const PhysParams p(2.0, 8.0, 2);
    CHECK(std::abs(p.sigma * p.sigma * p.mass - p.hbar) <= 1e-14 * p.hbar);
    CHECK_THROWS_AS(PhysParams(-1.0, 1.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(PhysParams(1.0, 0.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(PhysParams(1.0, 1.0, 4), std::invalid_argument);
}
