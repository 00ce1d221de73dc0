#include "magnetokernel/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "magnetokernel/exact.hpp"

namespace mk::bounds {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPi = 3.14159265358979323846;

/// Gauss-Hermite nodes/weights for int e^{-t^2} f(t) dt (physicists'
/// convention), by Newton iteration on the orthonormal recurrence.
void gauss_hermite(int n, std::vector<double>& nodes, std::vector<double>& weights) {
    nodes.assign(static_cast<std::size_t>(n), 0.0);
    weights.assign(static_cast<std::size_t>(n), 0.0);
    const int m = (n + 1) / 2;
    double z = 0.0, pp = 0.0;
    for (int i = 0; i < m; ++i) {
        if (i == 0) {
            z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -1.0 / 6.0);
        } else if (i == 1) {
            z -= 1.14 * std::pow(n, 0.426) / z;
        } else if (i == 2) {
            z = 1.86 * z - 0.86 * nodes[0];
        } else if (i == 3) {
            z = 1.91 * z - 0.91 * nodes[1];
        } else {
            z = 2.0 * z - nodes[static_cast<std::size_t>(i - 2)];
        }
        for (int iter = 0; iter < 100; ++iter) {
            double p1 = 0.7511255444649425;  // pi^{-1/4}
            double p2 = 0.0;
            for (int j = 0; j < n; ++j) {
                const double p3 = p2;
                p2 = p1;
                p1 = z * std::sqrt(2.0 / (j + 1)) * p2 - std::sqrt(static_cast<double>(j) / (j + 1)) * p3;
            }
            pp = std::sqrt(2.0 * n) * p2;
            const double z1 = z;
            z = z1 - p1 / pp;
            if (std::abs(z - z1) <= 1e-14 * (1.0 + std::abs(z))) break;
        }
        nodes[static_cast<std::size_t>(i)] = z;
        nodes[static_cast<std::size_t>(n - 1 - i)] = -z;
        weights[static_cast<std::size_t>(i)] = 2.0 / (pp * pp);
        weights[static_cast<std::size_t>(n - 1 - i)] = weights[static_cast<std::size_t>(i)];
    }
}

/// Slack-minimizing envelope fit: slopes a >= 0 by alternating least squares
/// (coordinate-descent NNLS), intercept log C dropped to the tightest value
/// every training point allows, backed off by one RMS residual.
struct EnvelopeFit {
    double log_c = 0.0;
    std::vector<double> slopes;
    double rms_residual = 0.0;
};

EnvelopeFit fit_envelope(const std::vector<std::vector<double>>& phi,
                         const std::vector<double>& z) {
    const std::size_t m = z.size();
    if (m == 0) throw std::invalid_argument("fit_envelope: no admissible training points");
    const std::size_t p = phi.empty() ? 0 : phi.front().size();
    std::vector<double> a(p, 0.0);
    double c0 = 0.0;

    for (int sweep = 0; sweep < 400; ++sweep) {
        double acc = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            double dotp = 0.0;
            for (std::size_t j = 0; j < p; ++j) dotp += a[j] * phi[i][j];
            acc += z[i] + dotp;
        }
        c0 = acc / static_cast<double>(m);
        double moved = 0.0;
        for (std::size_t j = 0; j < p; ++j) {
            double num = 0.0, den = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                double rest = c0 - z[i];
                for (std::size_t k = 0; k < p; ++k)
                    if (k != j) rest -= a[k] * phi[i][k];
                num += phi[i][j] * rest;
                den += phi[i][j] * phi[i][j];
            }
            const double next = den > 0.0 ? std::max(0.0, num / den) : 0.0;
            moved = std::max(moved, std::abs(next - a[j]));
            a[j] = next;
        }
        if (moved < 1e-12) break;
    }

    double rss = 0.0;
    double tightest = kInf;
    for (std::size_t i = 0; i < m; ++i) {
        double dotp = 0.0;
        for (std::size_t j = 0; j < p; ++j) dotp += a[j] * phi[i][j];
        const double resid = z[i] + dotp - c0;
        rss += resid * resid;
        tightest = std::min(tightest, z[i] + dotp);
    }
    EnvelopeFit fit;
    fit.rms_residual = std::sqrt(rss / static_cast<double>(m));
    fit.slopes = std::move(a);
    fit.log_c = tightest - fit.rms_residual;
    return fit;
}

double pow_sum(const Vec& x, const Vec& x_prime, double exponent) {
    return std::pow(norm2(x), exponent) + std::pow(norm2(x_prime), exponent);
}

std::vector<double> theorem2_features(const Vec& x, const Vec& x_prime, double tau,
                                      const PhysParams& params) {
    const double dx2 = norm2(x - x_prime);
    const double h = params.hbar;
    return {dx2 / (h * h), std::sqrt(dx2) * std::sqrt(tau) / std::pow(h, 1.5)};
}

std::vector<double> theorem3_features(double gamma, double beta, const Vec& x, const Vec& x_prime,
                                      double tau, const PhysParams& params) {
    const double h = params.hbar;
    const double dx2 = norm2(x - x_prime);
    const double dx = std::sqrt(dx2);
    const double grow_g = pow_sum(x, x_prime, gamma);   // |x|^{2 gamma} + |x'|^{2 gamma}
    const double grow_b = pow_sum(x, x_prime, beta);    // |x|^{2 beta} + |x'|^{2 beta}
    return {
        grow_g * dx2 / (h * h),
        grow_g * dx * std::sqrt(tau) / std::pow(h, 1.5),
        grow_g * tau / h,
        std::pow(h, -1.5 + gamma) * std::pow(tau, 0.5 + gamma) * dx,
        std::pow(h, -1.0 + gamma) * std::pow(tau, 1.0 + gamma),
        std::pow(h, -2.0 + gamma) * dx2 * std::pow(tau, gamma),
        grow_b * tau / h,
        std::pow(h, -1.0 + beta) * std::pow(tau, 1.0 + beta),
    };
}

}  // namespace

std::string to_string(Verdict v) {
    switch (v) {
        case Verdict::Holds:
            return "holds";
        case Verdict::Violated:
            return "violated";
        case Verdict::Inconclusive:
            return "inconclusive";
    }
    return "inconclusive";
}

BoundReport make_report(std::string name, const Vec& x, const Vec& x_prime, double tau_or_m,
                        double lower, double upper, double mean, double std_error) {
    BoundReport report;
    report.bound_name = std::move(name);
    report.x = x;
    report.x_prime = x_prime;
    report.tau_or_m = tau_or_m;
    report.lower = lower;
    report.upper = upper;
    report.mean = mean;
    report.std_error = std_error;
    if (!std::isfinite(mean) || std::isnan(lower)) {
        report.verdict = Verdict::Inconclusive;
        report.margin_se = std::numeric_limits<double>::quiet_NaN();
        return report;
    }
    double margin_lo, margin_hi;
    if (std_error > 0.0) {
        margin_lo = (mean - lower) / std_error;
        margin_hi = (upper - mean) / std_error;
    } else {
        margin_lo = mean >= lower ? kInf : -kInf;
        margin_hi = mean <= upper ? kInf : -kInf;
    }
    report.margin_se = std::min(margin_lo, margin_hi);
    report.verdict = report.margin_se >= -3.0 ? Verdict::Holds : Verdict::Violated;
    return report;
}

JensenBound jensen_lower_bound(const fields::PairCovariance& cov,
                               const estimator::ScalarPotential& V, const Vec& x,
                               const Vec& x_prime, double tau, const estimator::McBudget& budget,
                               const PhysParams& params, std::uint64_t seed, int workers) {
    const estimator::ExponentMoments m =
        estimator::exponent_moments(cov, V, x, x_prime, tau, budget, params, seed, workers);
    const double inv_2h2 = 0.5 / (params.hbar * params.hbar);
    const double inv_h = 1.0 / params.hbar;
    const double pref = exact::free_prefactor(x, x_prime, tau, params);
    JensenBound bound;
    bound.value = pref * std::exp(-m.sigma_mean * inv_2h2 - m.v_mean * inv_h);
    const double rel = std::sqrt(m.sigma_se * inv_2h2 * m.sigma_se * inv_2h2 +
                                 m.v_se * inv_h * m.v_se * inv_h);
    bound.std_error = bound.value * rel;
    return bound;
}

std::pair<double, double> theorem2_bounds(const BoundConstants& constants, const Vec& x,
                                          const Vec& x_prime, double tau,
                                          const PhysParams& params) {
    const double pref = exact::free_prefactor(x, x_prime, tau, params);
    const auto phi = theorem2_features(x, x_prime, tau, params);
    const double expo = constants.a[0] * phi[0] + constants.a[1] * phi[1] +
                        constants.a_pot * tau / params.hbar;
    const double lower = constants.C * pref * std::exp(-expo);
    const double upper = std::exp(-constants.c_pot * tau / params.hbar) * pref;
    return {lower, upper};
}

double theorem3_lower_bound(const BoundConstants& constants, double gamma, double beta,
                            const Vec& x, const Vec& x_prime, double tau,
                            const PhysParams& params) {
    if (!(gamma > 0.0 && gamma < 1.0))
        throw std::invalid_argument("theorem3_lower_bound: gamma must lie in (0,1)");
    if (beta <= 0.0) throw std::invalid_argument("theorem3_lower_bound: beta must be positive");
    const double pref = exact::free_prefactor(x, x_prime, tau, params);
    const auto phi = theorem3_features(gamma, beta, x, x_prime, tau, params);
    double expo = constants.a_pot * tau / params.hbar;
    for (std::size_t j = 0; j < phi.size(); ++j) expo += constants.a[j] * phi[j];
    return constants.C * pref * std::exp(-expo);
}

double theorem3_upper_bound(const estimator::ScalarPotential& V, const Vec& x, const Vec& x_prime,
                            double tau, const PhysParams& params, double rel_tol) {
    const double pref = exact::free_prefactor(x, x_prime, tau, params);
    if (V.is_zero()) return pref;
    const int dim = params.dimension;
    const double inv_h = 1.0 / params.hbar;
    const double root_tau_sigma = std::sqrt(tau) * params.sigma;

    // Inner integrand at fixed s, averaged over y with the given 1D rule.
    auto smeared = [&](int n_s, const std::vector<double>& t, const std::vector<double>& w) {
        const int n_y = static_cast<int>(t.size());
        double s_acc = 0.0;
        for (int is = 0; is < n_s; ++is) {
            const double s = static_cast<double>(is) / (n_s - 1);
            double w_s = (is == 0 || is == n_s - 1) ? 1.0 : (is % 2 == 1 ? 4.0 : 2.0);
            w_s /= 3.0 * (n_s - 1);
            const double smear = root_tau_sigma * s * (1.0 - s);
            Vec base = x;
            for (int d = 0; d < dim; ++d)
                base[static_cast<std::size_t>(d)] +=
                    (x_prime[static_cast<std::size_t>(d)] - x[static_cast<std::size_t>(d)]) * s;
            double y_acc = 0.0;
            if (dim == 1) {
                for (int i = 0; i < n_y; ++i)
                    y_acc += w[static_cast<std::size_t>(i)] *
                             std::exp(-tau * inv_h *
                                      V(base + smear * vec(t[static_cast<std::size_t>(i)]), params));
            } else if (dim == 2) {
                for (int i = 0; i < n_y; ++i)
                    for (int j = 0; j < n_y; ++j)
                        y_acc += w[static_cast<std::size_t>(i)] * w[static_cast<std::size_t>(j)] *
                                 std::exp(-tau * inv_h *
                                          V(base + smear * vec(t[static_cast<std::size_t>(i)],
                                                               t[static_cast<std::size_t>(j)]),
                                            params));
            } else {
                for (int i = 0; i < n_y; ++i)
                    for (int j = 0; j < n_y; ++j)
                        for (int k = 0; k < n_y; ++k)
                            y_acc += w[static_cast<std::size_t>(i)] * w[static_cast<std::size_t>(j)] *
                                     w[static_cast<std::size_t>(k)] *
                                     std::exp(-tau * inv_h *
                                              V(base + smear * vec(t[static_cast<std::size_t>(i)],
                                                                   t[static_cast<std::size_t>(j)],
                                                                   t[static_cast<std::size_t>(k)]),
                                                params));
            }
            s_acc += w_s * y_acc;
        }
        return s_acc;
    };

    auto gh_rule = [](int n, std::vector<double>& t, std::vector<double>& w) {
        gauss_hermite(n, t, w);
        for (int i = 0; i < n; ++i) {
            t[static_cast<std::size_t>(i)] *= std::sqrt(2.0);
            w[static_cast<std::size_t>(i)] /= std::sqrt(kPi);
        }
    };
    // Simpson against the explicit N(0,1) weight; robust for potentials with
    // kinks (|x|^{2 beta}, beta < 1), where Gauss-Hermite stalls.
    auto simpson_rule = [](int n, std::vector<double>& t, std::vector<double>& w) {
        const double span = 12.0;
        t.resize(static_cast<std::size_t>(n));
        w.resize(static_cast<std::size_t>(n));
        const double h = 2.0 * span / (n - 1);
        for (int i = 0; i < n; ++i) {
            t[static_cast<std::size_t>(i)] = -span + h * i;
            double wi = (i == 0 || i == n - 1) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
            w[static_cast<std::size_t>(i)] =
                wi * h / 3.0 *
                std::exp(-0.5 * t[static_cast<std::size_t>(i)] * t[static_cast<std::size_t>(i)]) /
                std::sqrt(2.0 * kPi);
        }
    };

    std::vector<double> t, w;
    int n_s = 17, n_h = 8;
    gh_rule(n_h, t, w);
    double value = smeared(n_s, t, w);
    bool converged = false;
    for (int round = 0; round < 4 && !converged; ++round) {
        n_s = 2 * (n_s - 1) + 1;
        n_h = std::min(2 * n_h, 64);
        gh_rule(n_h, t, w);
        const double refined = smeared(n_s, t, w);
        converged = std::abs(refined - value) <= rel_tol * std::max(std::abs(refined), 1e-300);
        value = refined;
    }
    if (!converged) {
        // fall back to the kink-tolerant rule
        n_s = 65;
        int n_y = dim == 1 ? 801 : (dim == 2 ? 201 : 81);
        const int cap = dim == 1 ? 25601 : (dim == 2 ? 1601 : 321);
        simpson_rule(n_y, t, w);
        value = smeared(n_s, t, w);
        for (int round = 0; round < 6 && !converged; ++round) {
            n_s = std::min(2 * (n_s - 1) + 1, 513);
            n_y = std::min(2 * (n_y - 1) + 1, cap);
            simpson_rule(n_y, t, w);
            const double refined = smeared(n_s, t, w);
            converged =
                std::abs(refined - value) <= rel_tol * std::max(std::abs(refined), 1e-300);
            value = refined;
        }
    }
    if (!converged)
        throw std::runtime_error("theorem3_upper_bound: quadrature failed to converge");
    return pref * value;
}

double potential_partition_integral(const estimator::ScalarPotential& V, int dim, double tau,
                                    const PhysParams& params) {
    using Kind = estimator::ScalarPotential::Kind;
    const double inv_h = 1.0 / params.hbar;
    switch (V.kind()) {
        case Kind::Zero:
            throw std::invalid_argument(
                "potential_partition_integral: V = 0 is not confining");
        case Kind::Quadratic: {
            if (V.axis() >= 0 && dim > 1)
                throw std::invalid_argument(
                    "potential_partition_integral: single-axis V does not confine in D > 1");
            const double c = 0.5 * tau * inv_h * params.mass * V.omega() * V.omega();
            return std::pow(kPi / c, 0.5 * dim);
        }
        case Kind::PowerLaw: {
            const double c = tau * inv_h * V.coeff();
            const double expo = dim / (2.0 * V.beta());
            const double surface = dim == 1 ? 2.0 : (dim == 2 ? 2.0 * kPi : 4.0 * kPi);
            return surface * std::tgamma(expo) / (2.0 * V.beta() * std::pow(c, expo)) *
                   std::exp(-tau * inv_h * V.lower_bound());
        }
        case Kind::Custom:
            throw std::invalid_argument(
                "potential_partition_integral: no closed form for custom V; use the quadrature");
    }
    return 0.0;
}

double potential_partition_integral_quad(const estimator::ScalarPotential& V, int dim, double tau,
                                         const PhysParams& params, double rel_tol) {
    if (V.is_zero())
        throw std::invalid_argument("potential_partition_integral_quad: V = 0 is not confining");
    const double inv_h = 1.0 / params.hbar;
    auto radial_weight = [&](double r) {
        return dim == 1 ? 1.0 : (dim == 2 ? 2.0 * kPi * r : 4.0 * kPi * r * r);
    };
    // find a radius where the integrand has decayed away
    double radius = 4.0;
    for (int i = 0; i < 24; ++i) {
        const double tail = radial_weight(radius) * std::exp(-tau * inv_h * V(vec(radius), params));
        if (tail < 1e-16) break;
        radius *= 2.0;
        if (i == 23)
            throw std::invalid_argument("potential_partition_integral_quad: V not confining");
    }
    auto simpson = [&](int n) {
        const double lo = dim == 1 ? -radius : 0.0;
        const double h = (radius - lo) / (n - 1);
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
            const double r = lo + h * i;
            double w = (i == 0 || i == n - 1) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
            acc += w * radial_weight(std::abs(r)) * std::exp(-tau * inv_h * V(vec(r), params));
        }
        return acc * h / 3.0;
    };
    int n = 129;
    double value = simpson(n);
    for (int round = 0; round < 8; ++round) {
        n = 2 * (n - 1) + 1;
        const double refined = simpson(n);
        const double change = std::abs(refined - value) / std::max(std::abs(refined), 1e-300);
        value = refined;
        if (change < rel_tol) break;
    }
    return value;
}

double corollary4_nu(double gamma, double beta, int dim) {
    const double rho = std::max(gamma, beta);
    if (rho <= 0.0) throw std::invalid_argument("corollary4_nu: need max(gamma, beta) > 0");
    return 0.5 * dim * (1.0 + 1.0 / rho);
}

std::pair<double, double> corollary4_bounds(double gamma, double beta, int dim, double tau,
                                            const estimator::ScalarPotential& V,
                                            const BoundConstants& constants,
                                            const PhysParams& params) {
    const double nu = corollary4_nu(gamma, beta, dim);
    const double h = params.hbar;
    const double expo = constants.a[4] * std::pow(h, -1.0 + gamma) * std::pow(tau, 1.0 + gamma) +
                        constants.a[7] * std::pow(h, -1.0 + beta) * std::pow(tau, 1.0 + beta) +
                        constants.a_pot * tau / h;
    const double lower = constants.C * std::pow(tau, -nu) * std::exp(-expo);
    double integral;
    try {
        integral = potential_partition_integral(V, dim, tau, params);
    } catch (const std::invalid_argument&) {
        integral = potential_partition_integral_quad(V, dim, tau, params);
    }
    const double upper =
        std::pow(2.0 * kPi * tau * params.sigma * params.sigma, -0.5 * dim) * integral;
    return {lower, upper};
}

std::pair<double, double> green_bounds(double mass_m, const Vec& x, const Vec& x_prime,
                                       const BoundConstants& constants, const PhysParams& params,
                                       std::optional<double> constant_b) {
    const double r = norm(x - x_prime);
    if (r <= 0.0) throw std::invalid_argument("green_bounds: coincident points");
    const double h = params.hbar;
    const double lower = constants.C * std::pow(r, 2.0 - params.dimension) *
                         std::exp(-constants.a[0] * r * r / (h * h) -
                                  (constants.a[1] / h + mass_m) * r);
    double upper = kInf;
    if (constant_b) {
        const double b = *constant_b;
        const double dx = x[0] - x_prime[0];
        const double dy = x[1] - x_prime[1];
        const double dz = x[2] - x_prime[2];
        upper = constants.C * std::exp(-0.25 * b * b * b * (dx * dx + dy * dy) -
                                       std::pow(b, 1.5) * std::abs(dz) - mass_m * r);
    }
    return {lower, upper};
}

CollapseReport scaling_collapse(double gamma, const std::vector<std::pair<Vec, Vec>>& u_pairs,
                                const std::vector<double>& taus, const KernelFn& estimate,
                                const PhysParams& params) {
    if (!(gamma > 0.0 && gamma < 1.0))
        throw std::invalid_argument("scaling_collapse: gamma must lie in (0,1)");
    CollapseReport report;
    report.conclusive = true;
    for (const auto& [u, u_prime] : u_pairs) {
        std::vector<double> fs, ses;
        for (const double tau : taus) {
            const double root = std::sqrt(tau);
            const Vec x = root * u;
            const Vec x_prime = root * u_prime;
            const estimator::KernelEstimate est = estimate(x, x_prime, tau);
            const double pref = exact::free_prefactor(x, x_prime, tau, params);
            CollapseRow row;
            row.u = u;
            row.u_prime = u_prime;
            row.tau = tau;
            const double ratio = est.mean.real() / pref;
            if (ratio > 0.0 && std::isfinite(ratio)) {
                row.f_hat = -std::log(ratio) / std::pow(tau, 1.0 + gamma);
                row.f_se = (est.se_real / est.mean.real()) / std::pow(tau, 1.0 + gamma);
                row.valid = true;
                fs.push_back(row.f_hat);
                ses.push_back(row.f_se);
            } else {
                row.valid = false;
                report.conclusive = false;
            }
            report.rows.push_back(row);
        }
        if (fs.size() >= 2) {
            const double hi = *std::max_element(fs.begin(), fs.end());
            const double lo = *std::min_element(fs.begin(), fs.end());
            const double mid = 0.5 * (hi + lo);
            if (mid != 0.0)
                report.max_rel_spread = std::max(report.max_rel_spread, (hi - lo) / std::abs(mid));
            double var = 0.0;
            for (const double se : ses) var += se * se;
            if (mid != 0.0)
                report.mc_rel_budget =
                    std::max(report.mc_rel_budget, 3.0 * std::sqrt(var) / std::abs(mid));
        } else {
            report.conclusive = false;
        }
    }
    return report;
}

BoundConstants fit_theorem2(const std::vector<TrainPoint>& train, double a_pot, double c_pot,
                            const PhysParams& params) {
    std::vector<std::vector<double>> phi;
    std::vector<double> z;
    for (const auto& pt : train) {
        if (!(pt.mean > 0.0)) continue;
        const double pref = exact::free_prefactor(pt.x, pt.x_prime, pt.tau, params);
        phi.push_back(theorem2_features(pt.x, pt.x_prime, pt.tau, params));
        z.push_back(std::log(pt.mean / pref) + a_pot * pt.tau / params.hbar);
    }
    const EnvelopeFit fit = fit_envelope(phi, z);
    BoundConstants constants;
    constants.C = std::exp(fit.log_c);
    constants.a[0] = fit.slopes[0];
    constants.a[1] = fit.slopes[1];
    constants.a_pot = a_pot;
    constants.c_pot = c_pot;
    std::ostringstream os;
    os << "fitted(theorem2;n=" << z.size() << ";rms=" << fit.rms_residual << ")";
    constants.provenance = os.str();
    return constants;
}

BoundConstants fit_theorem3(const std::vector<TrainPoint>& train, double gamma, double beta,
                            double a_pot, const PhysParams& params) {
    std::vector<std::vector<double>> phi;
    std::vector<double> z;
    for (const auto& pt : train) {
        if (!(pt.mean > 0.0)) continue;
        const double pref = exact::free_prefactor(pt.x, pt.x_prime, pt.tau, params);
        phi.push_back(theorem3_features(gamma, beta, pt.x, pt.x_prime, pt.tau, params));
        z.push_back(std::log(pt.mean / pref) + a_pot * pt.tau / params.hbar);
    }
    const EnvelopeFit fit = fit_envelope(phi, z);
    BoundConstants constants;
    constants.C = std::exp(fit.log_c);
    for (std::size_t j = 0; j < fit.slopes.size(); ++j) constants.a[j] = fit.slopes[j];
    constants.a_pot = a_pot;
    std::ostringstream os;
    os << "fitted(theorem3;gamma=" << gamma << ";beta=" << beta << ";n=" << z.size()
       << ";rms=" << fit.rms_residual << ")";
    constants.provenance = os.str();
    return constants;
}

BoundConstants fit_corollary4(const std::vector<std::pair<double, double>>& tau_trace,
                              double gamma, double beta, int dim, double a_pot,
                              const PhysParams& params) {
    const double nu = corollary4_nu(gamma, beta, dim);
    const double h = params.hbar;
    std::vector<std::vector<double>> phi;
    std::vector<double> z;
    for (const auto& [tau, trace] : tau_trace) {
        if (!(trace > 0.0)) continue;
        phi.push_back({std::pow(h, -1.0 + gamma) * std::pow(tau, 1.0 + gamma),
                       std::pow(h, -1.0 + beta) * std::pow(tau, 1.0 + beta)});
        z.push_back(std::log(trace * std::pow(tau, nu)) + a_pot * tau / h);
    }
    const EnvelopeFit fit = fit_envelope(phi, z);
    BoundConstants constants;
    constants.C = std::exp(fit.log_c);
    constants.a[4] = fit.slopes[0];
    constants.a[7] = fit.slopes[1];
    constants.a_pot = a_pot;
    std::ostringstream os;
    os << "fitted(corollary4;n=" << z.size() << ";rms=" << fit.rms_residual << ")";
    constants.provenance = os.str();
    return constants;
}

BoundConstants fit_green_lower(const std::vector<std::pair<double, double>>& radius_value,
                               double mass_m, int dim, const PhysParams& params) {
    const double h = params.hbar;
    std::vector<std::vector<double>> phi;
    std::vector<double> z;
    for (const auto& [r, value] : radius_value) {
        if (!(value > 0.0) || r <= 0.0) continue;
        phi.push_back({r * r / (h * h), r / h});
        z.push_back(std::log(value * std::pow(r, dim - 2.0)) + mass_m * r);
    }
    const EnvelopeFit fit = fit_envelope(phi, z);
    BoundConstants constants;
    constants.C = std::exp(fit.log_c);
    constants.a[0] = fit.slopes[0];
    constants.a[1] = fit.slopes[1];
    std::ostringstream os;
    os << "fitted(green-lower;m=" << mass_m << ";n=" << z.size() << ";rms=" << fit.rms_residual
       << ")";
    constants.provenance = os.str();
    return constants;
}

double fit_green_upper_constant(double measured, double std_error, double mass_m, const Vec& x,
                                const Vec& x_prime, double b_field) {
    const double dx = x[0] - x_prime[0];
    const double dy = x[1] - x_prime[1];
    const double dz = x[2] - x_prime[2];
    const double r = norm(x - x_prime);
    const double expo = 0.25 * b_field * b_field * b_field * (dx * dx + dy * dy) +
                        std::pow(b_field, 1.5) * std::abs(dz) + mass_m * r;
    return (measured + 3.0 * std_error) * std::exp(expo);
}

}  // namespace mk::bounds
