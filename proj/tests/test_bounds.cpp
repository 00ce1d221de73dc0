#include <doctest.h>

#include <cmath>
#include <vector>

#include "magnetokernel/bounds.hpp"
#include "magnetokernel/estimator.hpp"
#include "magnetokernel/exact.hpp"
#include "magnetokernel/fields.hpp"

using namespace mk;
using bounds::BoundConstants;
using bounds::Verdict;
using estimator::McBudget;
using estimator::ScalarPotential;
using fields::CovarianceSpec;
using fields::GridSpec;
using fields::PairCovariance;

TEST_CASE("verdict logic") {
    const auto holds = bounds::make_report("t", vec(0), vec(1), 1.0, 0.5, 2.0, 1.0, 0.1);
    CHECK(holds.verdict == Verdict::Holds);
    CHECK(holds.margin_se == doctest::Approx(5.0));

    // mean + 3 SE still below the lower bound
    const auto violated = bounds::make_report("t", vec(0), vec(1), 1.0, 2.0, 3.0, 1.0, 0.1);
    CHECK(violated.verdict == Verdict::Violated);

    // within three standard errors of the lower bound counts as holding
    const auto edge = bounds::make_report("t", vec(0), vec(1), 1.0, 1.2, 3.0, 1.0, 0.1);
    CHECK(edge.verdict == Verdict::Holds);

    const auto bad = bounds::make_report("t", vec(0), vec(1), 1.0, 0.0, 1.0,
                                         std::numeric_limits<double>::quiet_NaN(), 0.1);
    CHECK(bad.verdict == Verdict::Inconclusive);

    // deterministic estimate: strict comparison
    const auto det = bounds::make_report("t", vec(0), vec(1), 1.0, 0.5, 2.0, 1.0, 0.0);
    CHECK(det.verdict == Verdict::Holds);
}

TEST_CASE("Jensen lower bound") {
    const PhysParams params = PhysParams::natural(2);
    const Vec x = vec(0, 0), xp = vec(1, 0);
    const double tau = 1.0;
    const McBudget budget{3000, 64};

    SUBCASE("G = 0, V = 0: equals the free kernel exactly") {
        const auto cov = PairCovariance::for_spec(CovarianceSpec::none());
        const auto j = bounds::jensen_lower_bound(cov, ScalarPotential::zero(), x, xp, tau,
                                                  budget, params, 1);
        CHECK(j.value == doctest::Approx(exact::free_kernel(x, xp, tau, params)).epsilon(1e-12));
        CHECK(j.std_error == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("constant G: deterministic exponent, exactly tight") {
        const auto cov = PairCovariance::for_spec(CovarianceSpec::constant(0.6));
        const auto j = bounds::jensen_lower_bound(cov, ScalarPotential::zero(), x, xp, tau,
                                                  budget, params, 2);
        const auto avg = estimator::kernel_gaussian_average(cov, ScalarPotential::zero(), x, xp,
                                                            tau, budget, params, 2);
        CHECK(j.value == doctest::Approx(avg.mean.real()).epsilon(1e-12));
        const double expected = std::exp(-0.6 * norm2(xp - x) / 2.0) *
                                exact::free_kernel(x, xp, tau, params);
        CHECK(j.value == doctest::Approx(expected).epsilon(1e-12));
    }
    SUBCASE("scale-invariant G: lower bounds the Gaussian-average estimator") {
        const GridSpec grid = GridSpec::centered_box(2, 8.0, 0.125);
        const auto spec = CovarianceSpec::scale_invariant(1.0, 0.3, 0.9, 16.0, true);
        const auto cov = PairCovariance::for_spec(spec, &grid);
        const auto j =
            bounds::jensen_lower_bound(cov, ScalarPotential::zero(), x, xp, tau, budget, params, 3);
        const auto avg = estimator::kernel_gaussian_average(cov, ScalarPotential::zero(), x, xp,
                                                            tau, budget, params, 4);
        CHECK(j.value <= avg.mean.real() +
                             3.0 * std::sqrt(avg.se_real * avg.se_real +
                                             j.std_error * j.std_error));
    }
}

TEST_CASE("Theorem 2 closed forms") {
    const PhysParams params = PhysParams::natural(2);
    BoundConstants constants;
    constants.C = 0.7;
    constants.a[0] = 0.4;
    constants.a[1] = 0.2;
    constants.a_pot = 0.3;
    constants.c_pot = 0.1;

    SUBCASE("x = x', small tau: lower/upper ratio approaches C") {
        const Vec x = vec(0.5, 0.5);
        for (const double tau : {1e-3, 1e-5}) {
            const auto [lo, hi] = bounds::theorem2_bounds(constants, x, x, tau, params);
            CHECK(lo / hi == doctest::Approx(constants.C *
                                             std::exp(-(constants.a_pot - constants.c_pot) * tau))
                                 .epsilon(1e-9));
        }
    }
    SUBCASE("V = 0 upper bound is the exact prefactor") {
        BoundConstants free_consts;
        const auto [lo, hi] =
            bounds::theorem2_bounds(free_consts, vec(0, 0), vec(1, 0), 0.8, params);
        CHECK(hi == doctest::Approx(exact::free_kernel(vec(0, 0), vec(1, 0), 0.8, params))
                        .epsilon(1e-12));
        CHECK(lo <= hi);
    }
}

TEST_CASE("fitted Theorem 2 sandwich holds on a disjoint test grid") {
    const PhysParams params = PhysParams::natural(2);
    const auto cov = PairCovariance::for_spec(CovarianceSpec::bounded_isotropic(1.0, 1.0, false));
    const McBudget budget{1500, 48};

    auto measure = [&](double dx, double tau, std::uint64_t seed) {
        const Vec x = vec(0, 0), xp = vec(dx, 0);
        const auto est = estimator::kernel_gaussian_average(cov, ScalarPotential::zero(), x, xp,
                                                            tau, budget, params, seed);
        bounds::TrainPoint pt;
        pt.x = x;
        pt.x_prime = xp;
        pt.tau = tau;
        pt.mean = est.mean.real();
        pt.std_error = est.se_real;
        return pt;
    };

    std::vector<bounds::TrainPoint> train;
    std::uint64_t seed = 100;
    for (const double dx : {0.0, 0.5, 1.0, 1.5, 2.0})
        for (const double tau : {0.25, 0.5, 1.0, 2.0}) train.push_back(measure(dx, tau, seed++));
    const BoundConstants fitted = bounds::fit_theorem2(train, 0.0, 0.0, params);
    CHECK(fitted.C > 0.0);
    CHECK(fitted.provenance.find("fitted") == 0);

    int checked = 0;
    for (const double dx : {0.25, 0.75, 1.25, 1.75})
        for (const double tau : {0.375, 0.75, 1.5}) {
            const auto pt = measure(dx, tau, seed++);
            const auto [lo, hi] = bounds::theorem2_bounds(fitted, pt.x, pt.x_prime, pt.tau, params);
            const auto report = bounds::make_report("thm2", pt.x, pt.x_prime, pt.tau, lo, hi,
                                                    pt.mean, pt.std_error);
            CHECK(report.verdict == Verdict::Holds);
            ++checked;
        }
    CHECK(checked == 12);
}

TEST_CASE("Theorem 3 lower-bound exponent") {
    const PhysParams params = PhysParams::natural(2);
    BoundConstants constants;
    for (int j = 0; j < 8; ++j) constants.a[static_cast<std::size_t>(j)] = 0.1 * (j + 1);
    constants.C = 0.5;
    constants.a_pot = 0.2;
    const double gamma = 0.3, beta = 0.5;

    SUBCASE("at x = x' = 0 only the three tau-only terms survive") {
        const double tau = 1.3;
        const double expected =
            constants.C * exact::free_kernel(vec(0, 0), vec(0, 0), tau, params) *
            std::exp(-constants.a[4] * std::pow(tau, 1.0 + gamma) -
                     constants.a[7] * std::pow(tau, 1.0 + beta) - constants.a_pot * tau);
        CHECK(bounds::theorem3_lower_bound(constants, gamma, beta, vec(0, 0), vec(0, 0), tau,
                                           params) == doctest::Approx(expected).epsilon(1e-12));
    }
    SUBCASE("gamma, beta -> 0 recovers the Theorem 2 shape") {
        const Vec x = vec(0.4, 0), xp = vec(1.0, 0.3);
        const double tau = 0.9;
        const double tiny = 1e-9;
        const double t3 =
            bounds::theorem3_lower_bound(constants, tiny, tiny, x, xp, tau, params);
        // same constants arranged in the Theorem 2 form, with the extra
        // tau-only and |x|^0-growth terms that survive the limit
        const double dx2 = norm2(x - xp);
        const double dx = std::sqrt(dx2);
        const double expected =
            constants.C * exact::free_kernel(x, xp, tau, params) *
            std::exp(-2.0 * constants.a[0] * dx2 - 2.0 * constants.a[1] * dx * std::sqrt(tau) -
                     2.0 * constants.a[2] * tau - constants.a[3] * std::sqrt(tau) * dx -
                     constants.a[4] * tau - constants.a[5] * dx2 - 2.0 * constants.a[6] * tau -
                     constants.a[7] * tau - constants.a_pot * tau);
        CHECK(t3 == doctest::Approx(expected).epsilon(1e-6));
    }
    SUBCASE("invalid indices are rejected") {
        CHECK_THROWS_AS(
            bounds::theorem3_lower_bound(constants, 1.5, beta, vec(0, 0), vec(0, 0), 1.0, params),
            std::invalid_argument);
        CHECK_THROWS_AS(
            bounds::theorem3_lower_bound(constants, gamma, -1.0, vec(0, 0), vec(0, 0), 1.0,
                                         params),
            std::invalid_argument);
    }
}

TEST_CASE("Theorem 3 upper bound quadrature") {
    const PhysParams params = PhysParams::natural(1);

    SUBCASE("V = 0 gives the prefactor exactly") {
        CHECK(bounds::theorem3_upper_bound(ScalarPotential::zero(), vec(0), vec(1), 0.7, params) ==
              doctest::Approx(exact::free_kernel(vec(0), vec(1), 0.7, params)).epsilon(1e-12));
    }
    SUBCASE("constant V factors out") {
        const auto v = ScalarPotential::custom([](const Vec&) { return 0.8; }, 0.8, 0.8, "const");
        const double got = bounds::theorem3_upper_bound(v, vec(0), vec(0.5), 1.2, params);
        const double expected =
            exact::free_kernel(vec(0), vec(0.5), 1.2, params) * std::exp(-1.2 * 0.8);
        CHECK(got == doctest::Approx(expected).epsilon(1e-9));
    }
    SUBCASE("stays below exp(-c tau) times the prefactor for V >= c") {
        const auto v = ScalarPotential::custom(
            [](const Vec& p) { return 0.3 + std::exp(-norm2(p)); }, 0.3, 1.3, "shifted bump");
        const double tau = 1.1;
        const double upper = bounds::theorem3_upper_bound(v, vec(0.2), vec(-0.4), tau, params);
        const double cap =
            std::exp(-0.3 * tau) * exact::free_kernel(vec(0.2), vec(-0.4), tau, params);
        CHECK(upper <= cap * (1.0 + 1e-9));
    }
    SUBCASE("power-law potential matches the brute-force oracle to 1e-6") {
        const auto v = ScalarPotential::power_law(1.0, 1.0);  // V = |x|^2
        const double tau = 1.0;
        const double got = bounds::theorem3_upper_bound(v, vec(0), vec(0), tau, params);

        // brute force: 10^4-point trapezoid in s times wide trapezoid in y
        const int ns = 10000, ny = 4001;
        double acc = 0.0;
        for (int is = 0; is <= ns; ++is) {
            const double s = static_cast<double>(is) / ns;
            const double ws = (is == 0 || is == ns) ? 0.5 : 1.0;
            const double smear = std::sqrt(tau) * s * (1.0 - s);
            double inner = 0.0;
            const double ylo = -10.0, yhi = 10.0;
            const double hy = (yhi - ylo) / (ny - 1);
            for (int iy = 0; iy < ny; ++iy) {
                const double y = ylo + hy * iy;
                const double wy = (iy == 0 || iy == ny - 1) ? 0.5 : 1.0;
                const double arg = smear * y;
                inner += wy * std::exp(-0.5 * y * y) * std::exp(-tau * arg * arg);
            }
            inner *= hy / std::sqrt(2.0 * 3.14159265358979323846);
            acc += ws * inner;
        }
        acc /= ns;
        const double oracle = exact::free_kernel(vec(0), vec(0), tau, params) * acc;
        CHECK(got == doctest::Approx(oracle).epsilon(1e-6));
    }
}

TEST_CASE("partition integral for the trace upper bound") {
    const PhysParams params = PhysParams::natural(1);
    SUBCASE("V = x^2 closed form sqrt(pi hbar / tau)") {
        const auto v = ScalarPotential::power_law(1.0, 1.0);
        const double tau = 0.8;
        const double closed = bounds::potential_partition_integral(v, 1, tau, params);
        CHECK(closed == doctest::Approx(std::sqrt(3.14159265358979323846 / tau)).epsilon(1e-12));
        const double quad = bounds::potential_partition_integral_quad(v, 1, tau, params);
        CHECK(quad == doctest::Approx(closed).epsilon(1e-8));
    }
    SUBCASE("non-confining potentials are rejected") {
        CHECK_THROWS_AS(
            bounds::potential_partition_integral(ScalarPotential::zero(), 1, 1.0, params),
            std::invalid_argument);
    }
}

TEST_CASE("Corollary 4") {
    const PhysParams params = PhysParams::natural(2);
    SUBCASE("nu arithmetic") {
        CHECK(bounds::corollary4_nu(0.5, 0.0, 2) == doctest::Approx(3.0));
        CHECK(bounds::corollary4_nu(0.4, 0.4, 2) == doctest::Approx(1.0 + 1.0 / 0.4).epsilon(1e-12));
        CHECK(bounds::corollary4_nu(0.3, 0.7, 3) == bounds::corollary4_nu(0.7, 0.3, 3));
    }
    SUBCASE("bounds are ordered for a fitted-scale C") {
        BoundConstants constants;
        constants.C = 1e-3;
        constants.a[4] = 0.2;
        constants.a[7] = 0.1;
        const auto v = ScalarPotential::quadratic(1.0);
        const auto [lo, hi] = bounds::corollary4_bounds(0.5, 1.0, 2, 1.0, v, constants, params);
        CHECK(lo > 0.0);
        CHECK(hi > lo);
    }
}

TEST_CASE("Green-function bounds") {
    const PhysParams params = PhysParams::natural(3);
    BoundConstants constants;
    constants.C = 0.5;
    constants.a[0] = 0.3;
    constants.a[1] = 0.2;

    SUBCASE("lower bound decreases when m doubles") {
        const auto [lo1, hi1] = bounds::green_bounds(1.0, vec(0, 0, 0), vec(1, 1, 0), constants,
                                                     params);
        const auto [lo2, hi2] = bounds::green_bounds(2.0, vec(0, 0, 0), vec(1, 1, 0), constants,
                                                     params);
        CHECK(lo2 < lo1);
        CHECK(std::isinf(hi1));
    }
    SUBCASE("B = 0 envelope reduces to pure m decay") {
        const auto [lo, hi] =
            bounds::green_bounds(1.5, vec(0, 0, 0), vec(1, 0, 1), constants, params, 0.0);
        const double r = std::sqrt(2.0);
        CHECK(hi == doctest::Approx(constants.C * std::exp(-1.5 * r)).epsilon(1e-12));
        CHECK(lo > 0.0);
    }
    SUBCASE("coincident points rejected") {
        CHECK_THROWS_AS(bounds::green_bounds(1.0, vec(1, 0, 0), vec(1, 0, 0), constants, params),
                        std::invalid_argument);
    }
}

TEST_CASE("scaling collapse") {
    const PhysParams params = PhysParams::natural(2);
    const std::vector<std::pair<Vec, Vec>> upairs{{vec(0.5, 0), vec(-0.5, 0)},
                                                  {vec(0.8, 0.2), vec(0, 0)}};
    const std::vector<double> taus{0.5, 1.0};

    SUBCASE("zero-amplitude field collapses to F = 0") {
        const auto cov = PairCovariance::for_spec(CovarianceSpec::none());
        const auto fn = [&](const Vec& x, const Vec& xp, double tau) {
            return estimator::kernel_gaussian_average(cov, ScalarPotential::zero(), x, xp, tau,
                                                      {500, 32}, params, 5);
        };
        const auto report = bounds::scaling_collapse(0.3, upairs, taus, fn, params);
        CHECK(report.conclusive);
        for (const auto& row : report.rows) {
            CHECK(row.valid);
            CHECK(std::abs(row.f_hat) <= 3.0 * row.f_se + 1e-12);
        }
    }
    SUBCASE("F is nonnegative: the averaged kernel never exceeds the free one") {
        const GridSpec grid = GridSpec::centered_box(2, 8.0, 0.125);
        const auto spec = CovarianceSpec::scale_invariant(1.0, 0.3, 0.9, 16.0, true);
        const auto cov = PairCovariance::for_spec(spec, &grid);
        const auto fn = [&](const Vec& x, const Vec& xp, double tau) {
            return estimator::kernel_gaussian_average(cov, ScalarPotential::zero(), x, xp, tau,
                                                      {1500, 48}, params, 6);
        };
        const auto report = bounds::scaling_collapse(0.3, upairs, taus, fn, params);
        for (const auto& row : report.rows) {
            REQUIRE(row.valid);
            CHECK(row.f_hat >= -3.0 * row.f_se);
        }
    }
}
