#include <doctest.h>

#include <cmath>
#include <vector>

#include "magnetokernel/fields.hpp"
#include "magnetokernel/paths.hpp"
#include "magnetokernel/rng.hpp"
#include "magnetokernel/stochint.hpp"

using namespace mk;
using paths::BridgePath;
using paths::SpacePath;

namespace {

/// Keeps every 2nd node of a bridge; a dyadically consistent coarsening, so
/// refinement behavior can be read off one underlying path.
BridgePath coarsen(const BridgePath& fine) {
    BridgePath coarse;
    coarse.dim = fine.dim;
    for (std::size_t k = 0; k < fine.values.size(); k += 2) coarse.values.push_back(fine.values[k]);
    return coarse;
}

SpacePath closed_path(const BridgePath& bridge, const Vec& x, double tau) {
    return paths::make_space_path(bridge, x, x, tau, PhysParams::natural(bridge.dim));
}

}  // namespace

TEST_CASE("constant field integrates to c . (x' - x) exactly") {
    const PhysParams params = PhysParams::natural(2);
    const auto bridge = paths::sample_bridge(64, 2, 31, 0);
    const auto path = paths::make_space_path(bridge, vec(0.2, -1), vec(1.2, 0.5), 1.7, params);
    const Vec c = vec(0.7, -0.3);
    const auto field = [&](const Vec&) { return c; };
    const double expected = dot(c, vec(1.0, 1.5));
    CHECK(stochint::ito_integral(field, path) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(stochint::stratonovich_integral(field, path) ==
          doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("Ito isometry: Var[int 1 db] = tau") {
    const paths::TimeGrid grid(2.0, 32);
    const long n_samples = 60000;
    double sum = 0.0, sq = 0.0;
    for (long i = 0; i < n_samples; ++i) {
        const auto b = paths::sample_brownian(grid, 1, 404, rng::substream(11, i));
        const double v = b.back()[0];  // sum of increments = int 1 db
        sum += v;
        sq += v * v;
    }
    const double mean = sum / n_samples;
    const double var = (sq - n_samples * mean * mean) / (n_samples - 1);
    const double se = var * std::sqrt(2.0 / n_samples);
    CHECK(std::abs(var - 2.0) < 3.0 * se);
}

TEST_CASE("non-anticipating integrals have zero mean") {
    const paths::TimeGrid grid(1.0, 64);
    const long n_samples = 60000;
    double sum = 0.0, sq = 0.0;
    for (long i = 0; i < n_samples; ++i) {
        const auto b = paths::sample_brownian(grid, 1, 405, rng::substream(12, i));
        double acc = 0.0;
        for (int k = 0; k < 64; ++k) acc += std::sin(b[k][0]) * (b[k + 1][0] - b[k][0]);
        sum += acc;
        sq += acc * acc;
    }
    const double mean = sum / n_samples;
    const double se = std::sqrt((sq / n_samples - mean * mean) / n_samples);
    CHECK(std::abs(mean) < 3.0 * se);
}

TEST_CASE("gradient field over closed paths vanishes at O(1/n)") {
    // chi = sin(x) cos(y); A = grad chi
    const auto field = [](const Vec& q) {
        return vec(std::cos(q[0]) * std::cos(q[1]), -std::sin(q[0]) * std::sin(q[1]));
    };
    const int n_paths = 300;
    double err_coarse = 0.0, err_fine = 0.0;
    for (int i = 0; i < n_paths; ++i) {
        const auto fine = paths::sample_bridge(256, 2, 2024, rng::substream(13, i));
        const auto mid = coarsen(fine);
        const auto coarse = coarsen(mid);
        err_fine += std::abs(stochint::stratonovich_integral(field, closed_path(mid, vec(0.3, 0.1), 1.0)));
        err_coarse +=
            std::abs(stochint::stratonovich_integral(field, closed_path(coarse, vec(0.3, 0.1), 1.0)));
    }
    err_fine /= n_paths;
    err_coarse /= n_paths;
    CHECK(err_fine < 0.02);
    // halving under n-doubling, with slack for the random prefactor
    CHECK(err_coarse / err_fine > 1.4);
    CHECK(err_coarse / err_fine < 3.2);
}

TEST_CASE("Stratonovich and Ito coincide for divergence-free fields at O(1/n)") {
    // A = (-y, x) f(r^2) is divergence-free for any radial profile f
    const auto field = [](const Vec& q) {
        const double f = std::exp(-(q[0] * q[0] + q[1] * q[1]));
        return vec(-q[1] * f, q[0] * f);
    };
    // The pathwise gap has zero mean for divergence-free fields; what decays
    // at O(1/n) is its mean square (the Ito-isometry scale), so that is what
    // the refinement ratio asserts.
    const int n_paths = 400;
    double gap2_coarse = 0.0, gap2_fine = 0.0;
    for (int i = 0; i < n_paths; ++i) {
        const auto fine = paths::sample_bridge(256, 2, 99, rng::substream(14, i));
        const auto mid = coarsen(fine);
        const auto coarse = coarsen(mid);
        const auto path_f = closed_path(mid, vec(0.2, -0.4), 1.0);
        const auto path_c = closed_path(coarse, vec(0.2, -0.4), 1.0);
        const auto r_f = stochint::line_integrals(field, path_f);
        const auto r_c = stochint::line_integrals(field, path_c);
        CHECK(r_f.stratonovich == r_f.ito + r_f.correction);  // exact by construction
        gap2_fine += r_f.correction * r_f.correction;
        gap2_coarse += r_c.correction * r_c.correction;
    }
    gap2_fine /= n_paths;
    gap2_coarse /= n_paths;
    CHECK(std::sqrt(gap2_fine) < 0.05);
    CHECK(gap2_coarse / gap2_fine > 1.5);
    CHECK(gap2_coarse / gap2_fine < 2.9);
}

TEST_CASE("correction converges to (sigma^2/2) int div A ds") {
    // A = (x, 0): div A = 1, so the correction tends to sigma^2 tau / 2.
    const auto field = [](const Vec& q) { return vec(q[0], 0.0); };
    for (int i = 0; i < 4; ++i) {
        const auto bridge = paths::sample_bridge(4096, 2, 7, rng::substream(15, i));
        const auto path = closed_path(bridge, vec(0, 0), 1.0);
        const auto r = stochint::line_integrals(field, path);
        CHECK(r.correction == doctest::Approx(0.5).epsilon(0.12));
    }
}

TEST_CASE("variance decomposition") {
    const PhysParams params = PhysParams::natural(2);

    SUBCASE("constant path gives zero total") {
        BridgePath zero;
        zero.dim = 2;
        zero.values.assign(17, Vec{});
        const auto path = paths::make_space_path(zero, vec(0.5, 0.5), vec(0.5, 0.5), 1.0, params);
        const auto g = [](const Vec&, const Vec&) { return Mat::diagonal(2.0, 2); };
        const auto d = stochint::variance_decomposition(g, path);
        CHECK(d.total == 0.0);
        CHECK(d.six_term_sum() == doctest::Approx(0.0).epsilon(1e-15));
    }

    SUBCASE("constant covariance telescopes to g |x - x'|^2") {
        const auto bridge = paths::sample_bridge(128, 2, 808, 3);
        const auto path = paths::make_space_path(bridge, vec(0, 0), vec(1.5, -0.5), 0.8, params);
        const double g_val = 0.7;
        const auto g = [&](const Vec&, const Vec&) { return Mat::diagonal(g_val, 2); };
        const auto d = stochint::variance_decomposition(g, path);
        const double expected = g_val * (1.5 * 1.5 + 0.5 * 0.5);
        CHECK(d.total == doctest::Approx(expected).epsilon(1e-10));
        CHECK(d.six_term_sum() == doctest::Approx(d.total).epsilon(1e-9));
    }

    SUBCASE("six-term sum tracks the direct total under refinement, scale-invariant G") {
        const auto grid = fields::GridSpec::centered_box(2, 4.0, 0.125);
        const auto spec = fields::CovarianceSpec::scale_invariant(1.0, 0.3, 0.9, 12.0, true);
        const auto cov = fields::PairCovariance::for_spec(spec, &grid);
        const auto g = [&](const Vec& a, const Vec& b) { return cov(a, b); };

        const auto fine = paths::sample_bridge(2048, 2, 31337, 0);
        const auto n1024 = coarsen(fine);
        const auto n512 = coarsen(n1024);
        const auto n256 = coarsen(n512);
        const Vec x = vec(-0.4, 0.0), xp = vec(0.6, 0.3);

        double totals[3];
        int idx = 0;
        for (const auto* b : {&n256, &n512, &fine}) {
            const auto path = paths::make_space_path(*b, x, xp, 1.0, params);
            const auto d = stochint::variance_decomposition(g, path);
            CHECK(std::abs(d.six_term_sum() - d.total) <=
                  0.01 * std::max(std::abs(d.total), 1e-12));
            CHECK(d.total >= 0.0);
            totals[idx++] = d.total;
        }
        // mutual convergence of the direct sums toward the n = 2048 value
        CHECK(std::abs(totals[1] - totals[2]) <= std::abs(totals[0] - totals[2]) + 0.02 * std::abs(totals[2]));
        CHECK(totals[0] == doctest::Approx(totals[2]).epsilon(0.15));
    }

    SUBCASE("negative covariance is diagnosed") {
        const auto bridge = paths::sample_bridge(32, 2, 4, 4);
        const auto path = paths::make_space_path(bridge, vec(0, 0), vec(1, 0), 1.0, params);
        const auto g = [](const Vec&, const Vec&) { return Mat::diagonal(-1.0, 2); };
        CHECK_THROWS_AS(stochint::variance_decomposition(g, path), stochint::CovarianceError);
        CHECK_THROWS_AS(stochint::quadratic_form_total(g, path), stochint::CovarianceError);
    }
}
