#include <doctest.h>

#include <cmath>
#include <complex>

#include "magnetokernel/bounds.hpp"
#include "magnetokernel/estimator.hpp"
#include "magnetokernel/exact.hpp"
#include "magnetokernel/fields.hpp"
#include "magnetokernel/paths.hpp"
#include "magnetokernel/rng.hpp"
#include "magnetokernel/stochint.hpp"

using namespace mk;
using estimator::KernelEstimate;
using estimator::McBudget;
using estimator::ScalarPotential;
using fields::CovarianceSpec;
using fields::FieldSample;
using fields::GridSpec;
using fields::PairCovariance;

namespace {

FieldSample zero_field(const GridSpec& grid) {
    FieldSample f;
    f.grid = grid;
    f.components = grid.dim;
    f.transverse = true;
    f.values.assign(static_cast<std::size_t>(grid.num_nodes()) * grid.dim, 0.0);
    return f;
}

}  // namespace

TEST_CASE("fixed-field estimator with A = 0, V = 0 reproduces the free kernel") {
    const PhysParams params = PhysParams::natural(2);
    const GridSpec grid = GridSpec::centered_box(2, 8.0, 1.0);
    const FieldSample a = zero_field(grid);
    const Vec x = vec(0.0, 0.0), xp = vec(1.0, 0.5);
    const KernelEstimate est = estimator::kernel_fixed_field(
        a, ScalarPotential::zero(), x, xp, 0.8, {2000, 64}, params, 11);
    // all weights are exactly one
    CHECK(est.mean.real() ==
          doctest::Approx(exact::free_kernel(x, xp, 0.8, params)).epsilon(1e-12));
    CHECK(est.mean.imag() == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(est.se_real == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("fixed-field estimator matches the Landau kernel for constant B") {
    const PhysParams params = PhysParams::natural(3);
    const GridSpec grid = GridSpec::centered_box(3, 8.0, 1.0);
    const FieldSample a = fields::constant_b_field(1.0, grid);
    const Vec x = vec(0.6, 0.0, 0.0), xp = vec(0.0, 0.6, 0.3);
    const double tau = 1.0;
    const KernelEstimate est = estimator::kernel_fixed_field(
        a, ScalarPotential::zero(), x, xp, tau, {40000, 256}, params, 4041);
    const std::complex<double> expected = exact::landau_kernel(x, xp, tau, 1.0, params);
    CHECK(std::abs(est.mean.real() - expected.real()) < 3.0 * est.se_real + 2e-4);
    CHECK(std::abs(est.mean.imag() - expected.imag()) < 3.0 * est.se_imag + 2e-4);
    CHECK(est.mean.imag() != 0.0);  // the phase term is actually exercised
}

TEST_CASE("Kato bound: |K^(A,V)| <= K^(0,V) for sampled fields") {
    const PhysParams params = PhysParams::natural(2);
    const GridSpec grid = GridSpec::centered_box(2, 8.0, 0.25);
    const auto spec = CovarianceSpec::bounded_isotropic(1.0, 1.0, true);
    const auto v = ScalarPotential::custom([](const Vec& p) { return std::exp(-norm2(p)); }, 0.0,
                                           1.0, "bump");
    const Vec x = vec(-0.4, 0.0), xp = vec(0.7, 0.2);
    const double tau = 0.9;
    const McBudget budget{4000, 64};
    const KernelEstimate base =
        estimator::kernel_gaussian_average(PairCovariance::for_spec(CovarianceSpec::none()), v, x,
                                           xp, tau, budget, params, 5);
    for (int i = 0; i < 5; ++i) {
        const FieldSample a = fields::sample_field(spec, grid, 31337, i);
        const KernelEstimate est =
            estimator::kernel_fixed_field(a, v, x, xp, tau, budget, params, 5, i);
        const double mag = std::abs(est.mean);
        const double se = std::sqrt(est.se_real * est.se_real + est.se_imag * est.se_imag +
                                    base.se_real * base.se_real);
        CHECK(mag <= base.mean.real() + 3.0 * se);
    }
}

TEST_CASE("quenched average reduces to the free case at zero amplitude") {
    const PhysParams params = PhysParams::natural(2);
    const GridSpec grid = GridSpec::centered_box(2, 8.0, 0.5);
    const auto spec = CovarianceSpec::bounded_isotropic(0.0, 1.0, true);
    const Vec x = vec(0, 0), xp = vec(1, 0);
    const KernelEstimate est = estimator::kernel_quenched_average(
        spec, grid, ScalarPotential::zero(), x, xp, 1.0, 4, {500, 32}, params, 2);
    CHECK(est.mean.real() ==
          doctest::Approx(exact::free_kernel(x, xp, 1.0, params)).epsilon(1e-12));
}

// The two averaging routes estimate the same field-averaged kernel in the
// transverse gauge, where the Stratonovich phase of the quenched route and
// the Ito-form covariance double sum of the analytic route coincide.
TEST_CASE("quenched average is real and agrees with the analytic Gaussian average") {
    const PhysParams params = PhysParams::natural(2);
    const GridSpec grid = GridSpec::centered_box(2, 8.0, 0.25);
    const auto spec = CovarianceSpec::bounded_isotropic(0.5, 1.0, true);
    const Vec x = vec(0, 0), xp = vec(1.0, 0);
    const double tau = 1.0;

    const KernelEstimate quenched = estimator::kernel_quenched_average(
        spec, grid, ScalarPotential::zero(), x, xp, tau, 96, {600, 64}, params, 90);
    const KernelEstimate analytic = estimator::kernel_gaussian_average(
        PairCovariance::for_spec(spec, &grid), ScalarPotential::zero(), x, xp, tau, {4000, 64},
        params, 91);

    CHECK(std::abs(quenched.mean.imag()) < 3.0 * quenched.se_imag);
    const double se =
        std::sqrt(quenched.se_real * quenched.se_real + analytic.se_real * analytic.se_real);
    CHECK(std::abs(quenched.mean.real() - analytic.mean.real()) < 3.0 * se);
}

TEST_CASE("constant covariance: Gaussian average is exact and deterministic") {
    const PhysParams params = PhysParams::natural(2);
    const auto cov = PairCovariance::for_spec(CovarianceSpec::constant(0.8));
    const Vec x = vec(0, 0), xp = vec(1.5, 0);
    const double tau = 0.7;
    const KernelEstimate est = estimator::kernel_gaussian_average(
        cov, ScalarPotential::zero(), x, xp, tau, {200, 32}, params, 7);
    const double expected =
        std::exp(-0.8 * norm2(xp - x) / 2.0) * exact::free_kernel(x, xp, tau, params);
    CHECK(est.mean.real() == doctest::Approx(expected).epsilon(1e-12));
    CHECK(est.se_real < 1e-8);  // identical weights; residue is pure rounding
}

TEST_CASE("standard error scales as n_paths^{-1/2}") {
    const PhysParams params = PhysParams::natural(2);
    const auto cov = PairCovariance::for_spec(CovarianceSpec::bounded_isotropic(1.0, 1.0, false));
    const Vec x = vec(0, 0), xp = vec(0.5, 0);
    const KernelEstimate small = estimator::kernel_gaussian_average(
        cov, ScalarPotential::zero(), x, xp, 1.0, {2000, 32}, params, 21);
    const KernelEstimate large = estimator::kernel_gaussian_average(
        cov, ScalarPotential::zero(), x, xp, 1.0, {32000, 32}, params, 21);
    CHECK(small.se_real / large.se_real == doctest::Approx(4.0).epsilon(0.25));
}

TEST_CASE("results are independent of the worker count") {
    const PhysParams params = PhysParams::natural(2);
    const GridSpec grid = GridSpec::centered_box(2, 8.0, 0.25);
    const auto spec = CovarianceSpec::bounded_isotropic(1.0, 1.0, true);
    const FieldSample a = fields::sample_field(spec, grid, 17, 0);
    const auto v = ScalarPotential::quadratic(1.0);
    const Vec x = vec(0, 0), xp = vec(0.5, 0.5);
    const KernelEstimate one =
        estimator::kernel_fixed_field(a, v, x, xp, 1.0, {3000, 32}, params, 3, 1);
    const KernelEstimate four =
        estimator::kernel_fixed_field(a, v, x, xp, 1.0, {3000, 32}, params, 3, 4);
    CHECK(one.mean.real() == four.mean.real());
    CHECK(one.mean.imag() == four.mean.imag());
    CHECK(one.se_real == four.se_real);
}

TEST_CASE("paths leaving the grid are counted and abort past 0.1%") {
    const PhysParams params = PhysParams::natural(2);
    const GridSpec grid = GridSpec::centered_box(2, 1.0, 0.25);
    const FieldSample a = zero_field(grid);
    CHECK_THROWS_AS(estimator::kernel_fixed_field(a, ScalarPotential::zero(), vec(0.9, 0),
                                                  vec(-0.9, 0), 4.0, {2000, 32}, params, 1),
                    estimator::EstimatorError);
}

TEST_CASE("per-realization diagonal kernel is gauge invariant") {
    const PhysParams params = PhysParams::natural(2);
    const GridSpec grid = GridSpec::centered_box(2, 8.0, 0.25);
    const auto spec = CovarianceSpec::bounded_isotropic(1.0, 1.0, true);
    const FieldSample a = fields::sample_field(spec, grid, 2718, 0);
    const Vec x = vec(0.3, -0.2);

    SUBCASE("quadratic chi: the midpoint loop phase telescopes exactly") {
        // grad chi is linear, which multilinear interpolation reproduces
        // exactly, so the diagonal kernel must agree to rounding.
        FieldSample a_prime = a;
        for (int iy = 0; iy < grid.shape[1]; ++iy)
            for (int ix = 0; ix < grid.shape[0]; ++ix) {
                const double px = grid.origin[0] + grid.spacing * ix;
                const double py = grid.origin[1] + grid.spacing * iy;
                a_prime.at(ix, iy, 0, 0) += 0.3 * px + 0.1 * py - 0.2;  // grad of
                a_prime.at(ix, iy, 0, 1) += 0.1 * px - 0.4 * py + 0.5;  // a quadratic chi
            }
        const McBudget budget{4000, 64};
        const KernelEstimate k1 =
            estimator::kernel_fixed_field(a, ScalarPotential::zero(), x, x, 1.0, budget, params, 606);
        const KernelEstimate k2 = estimator::kernel_fixed_field(a_prime, ScalarPotential::zero(),
                                                                x, x, 1.0, budget, params, 606);
        CHECK(std::abs(k1.mean - k2.mean) <= 1e-10 * std::abs(k1.mean));
    }

    SUBCASE("smooth chi: the residual loop phase halves under step doubling") {
        // Evaluated with the analytic gradient so the O(1/n) midpoint error is
        // not masked by the O(h^2) interpolation floor of grid-sampled fields.
        const double two_pi = 6.283185307179586;
        const auto grad_chi = [&](const Vec& p) {
            const double c = 0.8 * two_pi / 16.0;
            return vec(c * std::cos(two_pi * p[0] / 16.0) * std::sin(two_pi * p[1] / 16.0),
                       c * std::sin(two_pi * p[0] / 16.0) * std::cos(two_pi * p[1] / 16.0));
        };
        auto mean_loop = [&](int n_steps) {
            double acc = 0.0;
            const int n_paths = 4000;
            for (int i = 0; i < n_paths; ++i) {
                const auto bridge = paths::sample_bridge(n_steps, 2, 606, rng::substream(77, i));
                const auto path = paths::make_space_path(bridge, x, x, 1.0, params);
                acc += std::abs(stochint::stratonovich_integral(grad_chi, path));
            }
            return acc / n_paths;
        };
        const double coarse = mean_loop(32);
        const double fine = mean_loop(64);
        CHECK(fine < 0.01);
        CHECK(coarse / fine > 1.4);
        CHECK(coarse / fine < 3.0);
    }

    SUBCASE("grid-backed gauge transform keeps the diagonal within the interpolation floor") {
        fields::GaugeFunction chi;
        chi.grid = grid;
        chi.values.assign(static_cast<std::size_t>(grid.num_nodes()), 0.0);
        const double two_pi = 6.283185307179586;
        for (int iy = 0; iy < grid.shape[1]; ++iy)
            for (int ix = 0; ix < grid.shape[0]; ++ix) {
                const double px = grid.origin[0] + grid.spacing * ix;
                const double py = grid.origin[1] + grid.spacing * iy;
                chi.values[static_cast<std::size_t>(iy * grid.shape[0] + ix)] =
                    0.8 * std::sin(two_pi * px / 16.0) * std::sin(two_pi * py / 16.0);
            }
        const FieldSample a_prime = fields::gauge_transform(a, chi);
        const McBudget budget{8000, 64};
        const KernelEstimate k1 =
            estimator::kernel_fixed_field(a, ScalarPotential::zero(), x, x, 1.0, budget, params, 606);
        const KernelEstimate k2 = estimator::kernel_fixed_field(a_prime, ScalarPotential::zero(),
                                                                x, x, 1.0, budget, params, 606);
        CHECK(std::abs(k1.mean - k2.mean) <= 0.01 * std::abs(k1.mean));
    }
}

TEST_CASE("trace estimate") {
    const PhysParams params = PhysParams::natural(1);
    const auto cov = PairCovariance::for_spec(CovarianceSpec::none());

    SUBCASE("harmonic potential matches the eigenvalue series within 5%") {
        const auto v = ScalarPotential::quadratic(1.0);
        estimator::TraceOptions options;
        options.box_halfwidth = 6.0;
        options.nodes_per_axis = 41;
        const auto trace = estimator::trace_estimate(cov, v, 1.0, options, {3000, 64}, params, 321);
        CHECK(trace.value == doctest::Approx(exact::harmonic_trace(1.0, 1.0)).epsilon(0.05));
        CHECK(trace.truncation_bound < 0.01 * trace.value);
    }
    SUBCASE("V = 0 is rejected as non-confining") {
        estimator::TraceOptions options;
        CHECK_THROWS_AS(estimator::trace_estimate(cov, ScalarPotential::zero(), 1.0, options,
                                                  {100, 16}, params, 1),
                        estimator::BoxTooSmallError);
    }
    SUBCASE("trace obeys the partition-integral upper bound") {
        const auto v = ScalarPotential::quadratic(1.0);
        estimator::TraceOptions options;
        options.box_halfwidth = 6.0;
        const auto trace = estimator::trace_estimate(cov, v, 1.0, options, {2000, 64}, params, 55);
        const double upper = std::pow(2.0 * 3.14159265358979323846 * 1.0, -0.5) *
                             bounds::potential_partition_integral(v, 1, 1.0, params);
        CHECK(trace.value <= upper + 3.0 * trace.std_error);
    }
    SUBCASE("box too small is diagnosed") {
        const auto v = ScalarPotential::quadratic(0.2);  // shallow: slow decay
        estimator::TraceOptions options;
        options.box_halfwidth = 2.0;
        CHECK_THROWS_AS(estimator::trace_estimate(cov, v, 1.0, options, {500, 32}, params, 9),
                        estimator::BoxTooSmallError);
    }
}

TEST_CASE("green estimate") {
    SUBCASE("free Green function in D=3 within 2%") {
        const PhysParams params = PhysParams::natural(3);
        const auto cov = PairCovariance::for_spec(CovarianceSpec::none());
        estimator::ProperTimeQuad quad{1e-4, 60.0, 97};
        const auto green = estimator::green_estimate(cov, ScalarPotential::zero(), vec(0, 0, 0),
                                                     vec(1, 0, 0), 1.0, quad, {64, 32}, params, 3);
        const double expected = exact::free_green(vec(0, 0, 0), vec(1, 0, 0), 1.0, params);
        CHECK(green.value == doctest::Approx(expected).epsilon(0.02));
        CHECK(green.quadrature_error < 0.02 * expected);
    }
    SUBCASE("monotone decreasing in m") {
        const PhysParams params = PhysParams::natural(2);
        const auto cov =
            PairCovariance::for_spec(CovarianceSpec::bounded_isotropic(0.5, 1.0, false));
        estimator::ProperTimeQuad quad{1e-3, 40.0, 49};
        const auto g1 = estimator::green_estimate(cov, ScalarPotential::zero(), vec(0, 0),
                                                  vec(1, 0), 1.0, quad, {400, 48}, params, 8);
        const auto g2 = estimator::green_estimate(cov, ScalarPotential::zero(), vec(0, 0),
                                                  vec(1, 0), 2.0, quad, {400, 48}, params, 8);
        CHECK(g2.value < g1.value);
    }
    SUBCASE("diamagnetic: averaged Green <= free-of-field Green") {
        const PhysParams params = PhysParams::natural(2);
        const auto v = ScalarPotential::quadratic(0.8);
        estimator::ProperTimeQuad quad{1e-3, 40.0, 49};
        const auto with_field = estimator::green_estimate(
            PairCovariance::for_spec(CovarianceSpec::bounded_isotropic(1.0, 1.0, false)), v,
            vec(0, 0), vec(1, 0), 1.0, quad, {500, 48}, params, 13);
        const auto without =
            estimator::green_estimate(PairCovariance::for_spec(CovarianceSpec::none()), v,
                                      vec(0, 0), vec(1, 0), 1.0, quad, {500, 48}, params, 13);
        CHECK(with_field.value <= without.value +
                                      3.0 * (with_field.mc_error + without.mc_error) +
                                      with_field.quadrature_error + without.quadrature_error);
    }
    SUBCASE("coincident points rejected for D >= 2") {
        const PhysParams params = PhysParams::natural(2);
        const auto cov = PairCovariance::for_spec(CovarianceSpec::none());
        estimator::ProperTimeQuad quad;
        CHECK_THROWS_AS(estimator::green_estimate(cov, ScalarPotential::zero(), vec(1, 1),
                                                  vec(1, 1), 1.0, quad, {100, 16}, params, 1),
                        std::invalid_argument);
    }
}

TEST_CASE("green diagonal difference") {
    SUBCASE("vanishes exactly for A = 0, V = 0") {
        const PhysParams params = PhysParams::natural(2);
        const auto cov = PairCovariance::for_spec(CovarianceSpec::none());
        estimator::ProperTimeQuad quad{1e-3, 30.0, 33};
        const auto diff = estimator::green_diagonal_difference(
            cov, ScalarPotential::zero(), vec(0.5, 0), 1.0, quad, {200, 32}, params, 2);
        CHECK(diff.value == 0.0);
        CHECK(diff.mc_error == 0.0);
    }
    SUBCASE("is negative and finite for a field plus potential") {
        const PhysParams params = PhysParams::natural(2);
        const auto cov =
            PairCovariance::for_spec(CovarianceSpec::bounded_isotropic(0.8, 1.0, false));
        estimator::ProperTimeQuad quad{1e-3, 30.0, 33};
        const auto diff = estimator::green_diagonal_difference(
            cov, ScalarPotential::power_law(0.5, 0.5), vec(0.5, 0), 1.0, quad, {600, 48}, params,
            14);
        CHECK(diff.value < 0.0);
        CHECK(std::isfinite(diff.value));
        CHECK(diff.quadrature_error < 0.2 * std::abs(diff.value));
    }
}

TEST_CASE("doubling n_steps moves estimates by less than the statistical error") {
    const PhysParams params = PhysParams::natural(2);
    const GridSpec grid = GridSpec::centered_box(2, 8.0, 0.125);
    const auto cov =
        PairCovariance::for_spec(CovarianceSpec::bounded_isotropic(1.0, 1.0, true), &grid);
    const Vec x = vec(0, 0), xp = vec(1, 0);
    const KernelEstimate coarse = estimator::kernel_gaussian_average(
        cov, ScalarPotential::zero(), x, xp, 1.0, {6000, 64}, params, 33, 0, 0);
    const KernelEstimate fine = estimator::kernel_gaussian_average(
        cov, ScalarPotential::zero(), x, xp, 1.0, {6000, 128}, params, 33, 0, 1);
    const double se = std::sqrt(coarse.se_real * coarse.se_real + fine.se_real * fine.se_real);
    CHECK(std::abs(coarse.mean.real() - fine.mean.real()) < 3.0 * se);
}

TEST_CASE("potential lower-bound declaration is enforced") {
    const PhysParams params = PhysParams::natural(1);
    const auto v = ScalarPotential::custom([](const Vec& p) { return p[0]; }, 0.5, 10.0, "bad");
    CHECK_THROWS_AS(v(vec(0.0), params), estimator::EstimatorError);
}
