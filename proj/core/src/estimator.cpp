#include "magnetokernel/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "magnetokernel/exact.hpp"
#include "magnetokernel/parallel.hpp"
#include "magnetokernel/rng.hpp"
#include "magnetokernel/stochint.hpp"

namespace mk::estimator {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

struct ComplexMoments {
    double sum_re = 0.0, sum_im = 0.0;
    double sq_re = 0.0, sq_im = 0.0;
    long n = 0;
    long exited = 0;

    void add(double re, double im) {
        sum_re += re;
        sum_im += im;
        sq_re += re * re;
        sq_im += im * im;
        ++n;
    }
    void merge(const ComplexMoments& o) {
        sum_re += o.sum_re;
        sum_im += o.sum_im;
        sq_re += o.sq_re;
        sq_im += o.sq_im;
        n += o.n;
        exited += o.exited;
    }
};

double sample_se(double sum, double sq, long n) {
    if (n < 2) return 0.0;
    const double mean = sum / n;
    double var = (sq - n * mean * mean) / (n - 1);
    if (var < 0.0) var = 0.0;
    return std::sqrt(var / n);
}

/// Builds path node k+1 in place; the final node is pinned to x' exactly.
Vec path_node(const Vec& x, const Vec& x_prime, const std::vector<Vec>& bridge, int k, int n,
              double scale, int dim) {
    if (k == n) return x_prime;
    if (k == 0) return x;
    const double u = static_cast<double>(k) / n;
    Vec q = x;
    for (int d = 0; d < dim; ++d)
        q[static_cast<std::size_t>(d)] +=
            u * (x_prime[static_cast<std::size_t>(d)] - x[static_cast<std::size_t>(d)]) +
            scale * bridge[static_cast<std::size_t>(k)][static_cast<std::size_t>(d)];
    return q;
}

/// Trapezoidal int V(q_s) ds over the discretized path.
double potential_integral(const ScalarPotential& V, const std::vector<Vec>& pts, double tau,
                          const PhysParams& params) {
    if (V.is_zero()) return 0.0;
    const int n = static_cast<int>(pts.size()) - 1;
    const double dt = tau / n;
    double acc = 0.5 * (V(pts[0], params) + V(pts[static_cast<std::size_t>(n)], params));
    for (int k = 1; k < n; ++k) acc += V(pts[static_cast<std::size_t>(k)], params);
    return acc * dt;
}

/// Direct covariance double sum over increments. Tiny negative values from
/// table interpolation rounding are clamped; genuinely negative forms throw.
double quadratic_exponent(const fields::PairCovariance& cov, const std::vector<Vec>& pts,
                          const Vec& x, const Vec& x_prime) {
    if (cov.is_zero()) return 0.0;
    if (cov.is_constant()) return cov.constant_value() * norm2(x_prime - x);
    const int n = static_cast<int>(pts.size()) - 1;
    double total = 0.0;
    double scale = 0.0;
    for (int k = 0; k < n; ++k) {
        const Vec dq_k = pts[static_cast<std::size_t>(k) + 1] - pts[static_cast<std::size_t>(k)];
        const double diag = cov(pts[static_cast<std::size_t>(k)], pts[static_cast<std::size_t>(k)])
                                .quad(dq_k, dq_k);
        total += diag;
        scale += std::abs(diag);
        for (int l = 0; l < k; ++l) {
            const Vec dq_l =
                pts[static_cast<std::size_t>(l) + 1] - pts[static_cast<std::size_t>(l)];
            const double off =
                cov(pts[static_cast<std::size_t>(k)], pts[static_cast<std::size_t>(l)])
                    .quad(dq_k, dq_l);
            total += 2.0 * off;
            scale += 2.0 * std::abs(off);
        }
    }
    if (total < 0.0) {
        if (total < -1e-8 * (scale + 1e-30))
            throw stochint::CovarianceError(
                "kernel_gaussian_average: negative covariance quadratic form");
        total = 0.0;
    }
    return total;
}

void fill_points(std::vector<Vec>& pts, const std::vector<Vec>& bridge, const Vec& x,
                 const Vec& x_prime, double scale, int dim) {
    const int n = static_cast<int>(bridge.size()) - 1;
    pts.resize(bridge.size());
    for (int k = 0; k <= n; ++k)
        pts[static_cast<std::size_t>(k)] = path_node(x, x_prime, bridge, k, n, scale, dim);
}

}  // namespace

ScalarPotential ScalarPotential::zero() { return ScalarPotential{}; }

ScalarPotential ScalarPotential::quadratic(double omega, int axis) {
    if (omega <= 0.0) throw std::invalid_argument("ScalarPotential: omega must be positive");
    ScalarPotential v;
    v.kind_ = Kind::Quadratic;
    v.omega_ = omega;
    v.axis_ = axis;
    v.lower_c_ = 0.0;
    v.upper_a_ = std::numeric_limits<double>::infinity();
    std::ostringstream os;
    os << "quadratic(omega=" << omega << (axis >= 0 ? ";axis" : "") << ")";
    v.label_ = os.str();
    return v;
}

ScalarPotential ScalarPotential::power_law(double coeff, double beta, double shift) {
    if (beta <= 0.0) throw std::invalid_argument("ScalarPotential: beta must be positive");
    if (coeff < 0.0) throw std::invalid_argument("ScalarPotential: coefficient must be >= 0");
    ScalarPotential v;
    v.kind_ = Kind::PowerLaw;
    v.coeff_ = coeff;
    v.beta_ = beta;
    v.shift_ = shift;
    v.lower_c_ = shift;
    v.upper_a_ = std::numeric_limits<double>::infinity();
    std::ostringstream os;
    os << "power(B=" << coeff << ";beta=" << beta << ")";
    v.label_ = os.str();
    return v;
}

ScalarPotential ScalarPotential::custom(std::function<double(const Vec&)> fn, double lower_c,
                                        double upper_a, std::string label) {
    ScalarPotential v;
    v.kind_ = Kind::Custom;
    v.fn_ = std::move(fn);
    v.lower_c_ = lower_c;
    v.upper_a_ = upper_a;
    v.label_ = std::move(label);
    return v;
}

double ScalarPotential::operator()(const Vec& x, const PhysParams& params) const {
    switch (kind_) {
        case Kind::Zero:
            return 0.0;
        case Kind::Quadratic: {
            const double r2 = axis_ >= 0 ? x[static_cast<std::size_t>(axis_)] *
                                               x[static_cast<std::size_t>(axis_)]
                                         : norm2(x);
            return 0.5 * params.mass * omega_ * omega_ * r2;
        }
        case Kind::PowerLaw:
            return coeff_ * std::pow(norm2(x), beta_) + shift_;
        case Kind::Custom: {
            const double value = fn_(x);
            if (value < lower_c_ - 1e-9 * (1.0 + std::abs(lower_c_))) {
                std::ostringstream os;
                os << "ScalarPotential: declared lower bound " << lower_c_
                   << " violated: V = " << value;
                throw EstimatorError(os.str());
            }
            return value;
        }
    }
    return 0.0;
}

KernelEstimate kernel_fixed_field(const fields::FieldSample& field, const ScalarPotential& V,
                                  const Vec& x, const Vec& x_prime, double tau,
                                  const McBudget& budget, const PhysParams& params,
                                  std::uint64_t seed, int workers,
                                  std::uint64_t path_stream_ctx) {
    if (tau <= 0.0) throw std::invalid_argument("kernel_fixed_field: tau must be positive");
    if (budget.n_paths < 1 || budget.n_steps < 2)
        throw std::invalid_argument("kernel_fixed_field: invalid MC budget");
    const int n = budget.n_steps;
    const int dim = params.dimension;
    const double scale = params.sigma * std::sqrt(tau);
    const double inv_hbar = 1.0 / params.hbar;
    const double dt = tau / n;

    auto per_path = [&](long i, ComplexMoments& acc) {
        thread_local std::vector<Vec> bridge;
        paths::sample_bridge_into(bridge, n, dim, seed,
                                  rng::substream(rng::kTagBridge, path_stream_ctx,
                                                 static_cast<std::uint64_t>(i)));
        double phase = 0.0;
        double vint = 0.0;
        Vec prev = x;
        double v_prev = V.is_zero() ? 0.0 : V(prev, params);
        try {
            for (int k = 0; k < n; ++k) {
                const Vec next = path_node(x, x_prime, bridge, k + 1, n, scale, dim);
                const Vec mid = 0.5 * (prev + next);
                phase += dot(field.evaluate(mid), next - prev);
                if (!V.is_zero()) {
                    const double v_next = V(next, params);
                    vint += 0.5 * (v_prev + v_next) * dt;
                    v_prev = v_next;
                }
                prev = next;
            }
        } catch (const fields::OutOfExtentError&) {
            ++acc.exited;
            return;
        }
        const double weight = std::exp(-vint * inv_hbar);
        acc.add(weight * std::cos(phase * inv_hbar), weight * std::sin(phase * inv_hbar));
    };

    const ComplexMoments total = parallel::blocked_reduce<ComplexMoments>(
        budget.n_paths, workers, per_path,
        [](ComplexMoments& into, const ComplexMoments& from) { into.merge(from); });

    if (total.exited * 1000 > budget.n_paths) {
        std::ostringstream os;
        os << "kernel_fixed_field: " << total.exited << " of " << budget.n_paths
           << " paths left the field grid (limit 0.1%)";
        throw EstimatorError(os.str());
    }

    const double pref = exact::free_prefactor(x, x_prime, tau, params);
    KernelEstimate est;
    est.n_paths = budget.n_paths;
    est.n_steps = n;
    est.n_exited = total.exited;
    est.x = x;
    est.x_prime = x_prime;
    est.tau = tau;
    if (total.n > 0) {
        est.mean = std::complex<double>(pref * total.sum_re / total.n,
                                        pref * total.sum_im / total.n);
        est.se_real = pref * sample_se(total.sum_re, total.sq_re, total.n);
        est.se_imag = pref * sample_se(total.sum_im, total.sq_im, total.n);
    }
    return est;
}

KernelEstimate kernel_quenched_average(const fields::CovarianceSpec& spec,
                                       const fields::GridSpec& grid, const ScalarPotential& V,
                                       const Vec& x, const Vec& x_prime, double tau, int n_fields,
                                       const McBudget& budget, const PhysParams& params,
                                       std::uint64_t seed, int workers) {
    if (n_fields < 1)
        throw std::invalid_argument("kernel_quenched_average: n_fields must be >= 1");
    ComplexMoments fields_acc;
    double se_path_sq = 0.0;
    long exited = 0;
    KernelEstimate last;
    for (int f = 0; f < n_fields; ++f) {
        const fields::FieldSample field =
            fields::sample_field(spec, grid, seed, static_cast<std::uint64_t>(f));
        last = kernel_fixed_field(field, V, x, x_prime, tau, budget, params, seed, workers,
                                  static_cast<std::uint64_t>(f));
        fields_acc.add(last.mean.real(), last.mean.imag());
        se_path_sq += last.se_real * last.se_real;
        exited += last.n_exited;
    }
    KernelEstimate est;
    est.n_paths = static_cast<long>(n_fields) * budget.n_paths;
    est.n_steps = budget.n_steps;
    est.n_fields = n_fields;
    est.n_exited = exited;
    est.x = x;
    est.x_prime = x_prime;
    est.tau = tau;
    est.mean = std::complex<double>(fields_acc.sum_re / n_fields, fields_acc.sum_im / n_fields);
    if (n_fields >= 2) {
        est.se_real = sample_se(fields_acc.sum_re, fields_acc.sq_re, n_fields);
        est.se_imag = sample_se(fields_acc.sum_im, fields_acc.sq_im, n_fields);
    } else {
        est.se_real = last.se_real;
        est.se_imag = last.se_imag;
    }
    est.se_field_level = est.se_real;
    est.se_path_level = std::sqrt(se_path_sq) / n_fields;
    return est;
}

KernelEstimate kernel_gaussian_average(const fields::PairCovariance& cov,
                                       const ScalarPotential& V, const Vec& x, const Vec& x_prime,
                                       double tau, const McBudget& budget,
                                       const PhysParams& params, std::uint64_t seed, int workers,
                                       std::uint64_t path_stream_ctx) {
    if (tau <= 0.0) throw std::invalid_argument("kernel_gaussian_average: tau must be positive");
    if (budget.n_paths < 1 || budget.n_steps < 2)
        throw std::invalid_argument("kernel_gaussian_average: invalid MC budget");
    const int n = budget.n_steps;
    const int dim = params.dimension;
    const double scale = params.sigma * std::sqrt(tau);
    const double inv_hbar = 1.0 / params.hbar;
    const double inv_2h2 = 0.5 / (params.hbar * params.hbar);

    auto per_path = [&](long i, ComplexMoments& acc) {
        thread_local std::vector<Vec> bridge;
        thread_local std::vector<Vec> pts;
        paths::sample_bridge_into(bridge, n, dim, seed,
                                  rng::substream(rng::kTagBridge, path_stream_ctx,
                                                 static_cast<std::uint64_t>(i)));
        fill_points(pts, bridge, x, x_prime, scale, dim);
        const double sigma_q = quadratic_exponent(cov, pts, x, x_prime);
        const double vint = potential_integral(V, pts, tau, params);
        acc.add(std::exp(-sigma_q * inv_2h2 - vint * inv_hbar), 0.0);
    };

    const ComplexMoments total = parallel::blocked_reduce<ComplexMoments>(
        budget.n_paths, workers, per_path,
        [](ComplexMoments& into, const ComplexMoments& from) { into.merge(from); });

    const double pref = exact::free_prefactor(x, x_prime, tau, params);
    KernelEstimate est;
    est.n_paths = budget.n_paths;
    est.n_steps = n;
    est.x = x;
    est.x_prime = x_prime;
    est.tau = tau;
    est.mean = std::complex<double>(pref * total.sum_re / total.n, 0.0);
    est.se_real = pref * sample_se(total.sum_re, total.sq_re, total.n);
    return est;
}

ExponentMoments exponent_moments(const fields::PairCovariance& cov, const ScalarPotential& V,
                                 const Vec& x, const Vec& x_prime, double tau,
                                 const McBudget& budget, const PhysParams& params,
                                 std::uint64_t seed, int workers) {
    const int n = budget.n_steps;
    const int dim = params.dimension;
    const double scale = params.sigma * std::sqrt(tau);

    struct Acc {
        double s_sum = 0.0, s_sq = 0.0, v_sum = 0.0, v_sq = 0.0;
        long n = 0;
    };
    auto per_path = [&](long i, Acc& acc) {
        thread_local std::vector<Vec> bridge;
        thread_local std::vector<Vec> pts;
        paths::sample_bridge_into(
            bridge, n, dim, seed,
            rng::substream(rng::kTagBridge, 0, static_cast<std::uint64_t>(i)));
        fill_points(pts, bridge, x, x_prime, scale, dim);
        const double sigma_q = quadratic_exponent(cov, pts, x, x_prime);
        const double vint = potential_integral(V, pts, tau, params);
        acc.s_sum += sigma_q;
        acc.s_sq += sigma_q * sigma_q;
        acc.v_sum += vint;
        acc.v_sq += vint * vint;
        ++acc.n;
    };
    const Acc total = parallel::blocked_reduce<Acc>(
        budget.n_paths, workers, per_path, [](Acc& into, const Acc& from) {
            into.s_sum += from.s_sum;
            into.s_sq += from.s_sq;
            into.v_sum += from.v_sum;
            into.v_sq += from.v_sq;
            into.n += from.n;
        });

    ExponentMoments m;
    m.sigma_mean = total.s_sum / total.n;
    m.sigma_se = sample_se(total.s_sum, total.s_sq, total.n);
    m.v_mean = total.v_sum / total.n;
    m.v_se = sample_se(total.v_sum, total.v_sq, total.n);
    return m;
}

namespace {

struct DiagonalCurve {
    std::vector<double> positions;  // radius (radial) or coordinate (1D)
    std::vector<double> values;
    std::vector<double> errors;
};

}  // namespace

TraceEstimate trace_estimate(const fields::PairCovariance& cov, const ScalarPotential& V,
                             double tau, const TraceOptions& options, const McBudget& budget,
                             const PhysParams& params, std::uint64_t seed, int workers) {
    if (V.is_zero())
        throw BoxTooSmallError(
            "trace_estimate: V = 0 is not confining; the trace integral diverges");
    const int dim = params.dimension;
    int m = options.nodes_per_axis | 1;  // Simpson needs an odd count
    if (m < 5) m = 5;
    const double hw = options.box_halfwidth;
    const bool radial = options.radial && dim >= 2;

    DiagonalCurve curve;
    const int n_nodes = m;
    if (dim > 1 && !radial)
        throw std::invalid_argument(
            "trace_estimate: for D >= 2 only the radial quadrature is implemented; set radial");

    for (int i = 0; i < n_nodes; ++i) {
        const double pos = radial ? hw * i / (n_nodes - 1) : -hw + 2.0 * hw * i / (n_nodes - 1);
        const Vec p = vec(pos);
        const KernelEstimate diag = kernel_gaussian_average(
            cov, V, p, p, tau, budget, params, seed, workers,
            rng::substream(0x54524143u /*trace*/, static_cast<std::uint64_t>(i)));
        curve.positions.push_back(pos);
        curve.values.push_back(diag.mean.real());
        curve.errors.push_back(diag.se_real);
    }

    const double central =
        radial ? curve.values.front() : curve.values[static_cast<std::size_t>(n_nodes / 2)];
    const double boundary = radial ? curve.values.back()
                                   : std::max(curve.values.front(), curve.values.back());
    TraceEstimate out;
    out.tau = tau;
    out.boundary_ratio = boundary / central;
    if (!(out.boundary_ratio <= options.boundary_tol)) {
        std::ostringstream os;
        os << "trace_estimate: diagonal at the box edge is " << out.boundary_ratio
           << " of the central value (tolerance " << options.boundary_tol
           << "); enlarge the box or steepen V";
        throw BoxTooSmallError(os.str());
    }

    // Simpson weights over the sampled axis.
    const double h = (radial ? hw : 2.0 * hw) / (n_nodes - 1);
    double value = 0.0, var = 0.0;
    for (int i = 0; i < n_nodes; ++i) {
        double w = (i == 0 || i == n_nodes - 1) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
        w *= h / 3.0;
        if (radial) {
            const double r = curve.positions[static_cast<std::size_t>(i)];
            w *= (dim == 2) ? kTwoPi * r : 2.0 * kTwoPi * r * r;
        }
        value += w * curve.values[static_cast<std::size_t>(i)];
        var += w * w * curve.errors[static_cast<std::size_t>(i)] *
               curve.errors[static_cast<std::size_t>(i)];
    }

    // Exponential-tail truncation estimate from the outermost two nodes.
    const double d_last = std::max(boundary, 1e-300);
    const double d_prev = std::max(
        radial ? curve.values[static_cast<std::size_t>(n_nodes - 2)]
               : std::max(curve.values[1], curve.values[static_cast<std::size_t>(n_nodes - 2)]),
        1e-300);
    double lambda = std::log(d_prev / d_last) / h;
    if (!(lambda > 0.0))
        throw BoxTooSmallError("trace_estimate: diagonal is not decaying at the box edge");
    double tail = 0.0;
    switch (dim) {
        case 1:
            tail = 2.0 * d_last / lambda;
            break;
        case 2:
            tail = kTwoPi * d_last * (hw / lambda + 1.0 / (lambda * lambda));
            break;
        default:
            tail = 2.0 * kTwoPi * d_last *
                   (hw * hw / lambda + 2.0 * hw / (lambda * lambda) +
                    2.0 / (lambda * lambda * lambda));
    }

    out.value = value;
    out.std_error = std::sqrt(var);
    out.truncation_bound = tail;
    return out;
}

namespace {

std::vector<double> log_spaced(double lo, double hi, int n) {
    std::vector<double> nodes(static_cast<std::size_t>(n));
    const double step = std::log(hi / lo) / (n - 1);
    for (int i = 0; i < n; ++i) nodes[static_cast<std::size_t>(i)] = lo * std::exp(step * i);
    nodes.back() = hi;
    return nodes;
}

/// Trapezoid of integrand g(tau) over log-spaced nodes, in the ln tau
/// variable.
double log_trapezoid(const std::vector<double>& taus, const std::vector<double>& g) {
    double acc = 0.0;
    for (std::size_t j = 0; j + 1 < taus.size(); ++j) {
        const double dln = std::log(taus[j + 1] / taus[j]);
        acc += 0.5 * dln * (g[j] * taus[j] + g[j + 1] * taus[j + 1]);
    }
    return acc;
}

double log_trapezoid_coarse(const std::vector<double>& taus, const std::vector<double>& g) {
    std::vector<double> t2, g2;
    for (std::size_t j = 0; j < taus.size(); j += 2) {
        t2.push_back(taus[j]);
        g2.push_back(g[j]);
    }
    if (t2.back() != taus.back()) {
        t2.push_back(taus.back());
        g2.push_back(g.back());
    }
    return log_trapezoid(t2, g2);
}

}  // namespace

GreenEstimate green_estimate(const fields::PairCovariance& cov, const ScalarPotential& V,
                             const Vec& x, const Vec& x_prime, double mass_m,
                             const ProperTimeQuad& quad, const McBudget& budget,
                             const PhysParams& params, std::uint64_t seed, int workers) {
    if (mass_m <= 0.0) throw std::invalid_argument("green_estimate: m must be positive");
    if (params.dimension >= 2 && norm2(x - x_prime) == 0.0)
        throw std::invalid_argument("green_estimate: coincident points diverge for D >= 2");
    const int n_nodes = quad.n_nodes | 1;
    const std::vector<double> taus = log_spaced(quad.tau_min, quad.tau_max, n_nodes);

    std::vector<double> g(taus.size()), g_err(taus.size());
    for (std::size_t j = 0; j < taus.size(); ++j) {
        const KernelEstimate k = kernel_gaussian_average(
            cov, V, x, x_prime, taus[j], budget, params, seed, workers,
            rng::substream(0x4752454Eu /*green*/, static_cast<std::uint64_t>(j)));
        const double damp = std::exp(-0.5 * mass_m * mass_m * taus[j]);
        g[j] = damp * k.mean.real();
        g_err[j] = damp * k.se_real;
    }

    GreenEstimate out;
    out.mass_m = mass_m;
    out.x = x;
    out.x_prime = x_prime;
    const double fine = log_trapezoid(taus, g);
    const double coarse = log_trapezoid_coarse(taus, g);
    out.value = fine;
    out.quadrature_error = std::abs(fine - coarse);

    double mc_var = 0.0;
    for (std::size_t j = 0; j < taus.size(); ++j) {
        const double dln_left = j > 0 ? std::log(taus[j] / taus[j - 1]) : 0.0;
        const double dln_right = j + 1 < taus.size() ? std::log(taus[j + 1] / taus[j]) : 0.0;
        const double w = 0.5 * (dln_left + dln_right) * taus[j];
        mc_var += w * w * g_err[j] * g_err[j];
    }
    out.mc_error = std::sqrt(mc_var);

    // Small-tau piece: free-kernel factorization below tau_min. Exact when
    // both the field and the potential vanish; charged to the quadrature
    // error otherwise.
    {
        const std::vector<double> low = log_spaced(quad.tau_min * 1e-8, quad.tau_min, 65);
        std::vector<double> gl(low.size());
        for (std::size_t j = 0; j < low.size(); ++j)
            gl[j] = std::exp(-0.5 * mass_m * mass_m * low[j]) *
                    exact::free_kernel(x, x_prime, low[j], params);
        const double i_low = log_trapezoid(low, gl);
        out.value += i_low;
        if (!(cov.is_zero() && V.is_zero())) out.quadrature_error += std::abs(i_low);
    }

    // Large-tau exponential tail bound: K <= (2 pi tau sigma^2)^{-D/2}.
    const double pref_max =
        std::pow(kTwoPi * quad.tau_max * params.sigma * params.sigma, -0.5 * params.dimension);
    out.quadrature_error +=
        pref_max * (2.0 / (mass_m * mass_m)) * std::exp(-0.5 * mass_m * mass_m * quad.tau_max);
    return out;
}

GreenEstimate green_diagonal_difference(const fields::PairCovariance& cov,
                                        const ScalarPotential& V, const Vec& x, double mass_m,
                                        const ProperTimeQuad& quad, const McBudget& budget,
                                        const PhysParams& params, std::uint64_t seed,
                                        int workers) {
    if (mass_m <= 0.0)
        throw std::invalid_argument("green_diagonal_difference: m must be positive");
    const int n_nodes = quad.n_nodes | 1;
    const std::vector<double> taus = log_spaced(quad.tau_min, quad.tau_max, n_nodes);
    const int dim = params.dimension;
    const double inv_hbar = 1.0 / params.hbar;
    const double inv_2h2 = 0.5 / (params.hbar * params.hbar);

    std::vector<double> g(taus.size()), g_err(taus.size());
    for (std::size_t j = 0; j < taus.size(); ++j) {
        const double tau = taus[j];
        const double scale = params.sigma * std::sqrt(tau);
        auto per_path = [&](long i, ComplexMoments& acc) {
            thread_local std::vector<Vec> bridge;
            thread_local std::vector<Vec> pts;
            paths::sample_bridge_into(
                bridge, budget.n_steps, dim, seed,
                rng::substream(rng::kTagBridge, 0x44494147u + j, static_cast<std::uint64_t>(i)));
            fill_points(pts, bridge, x, x, scale, dim);
            const double sigma_q = quadratic_exponent(cov, pts, x, x);
            const double vint = potential_integral(V, pts, tau, params);
            acc.add(std::expm1(-sigma_q * inv_2h2 - vint * inv_hbar), 0.0);
        };
        const ComplexMoments total = parallel::blocked_reduce<ComplexMoments>(
            budget.n_paths, workers, per_path,
            [](ComplexMoments& into, const ComplexMoments& from) { into.merge(from); });
        const double pref = std::pow(kTwoPi * tau * params.sigma * params.sigma, -0.5 * dim);
        const double damp = std::exp(-0.5 * mass_m * mass_m * tau);
        g[j] = damp * pref * total.sum_re / total.n;
        g_err[j] = damp * pref * sample_se(total.sum_re, total.sq_re, total.n);
    }

    GreenEstimate out;
    out.mass_m = mass_m;
    out.x = x;
    out.x_prime = x;
    const double fine = log_trapezoid(taus, g);
    out.value = fine;
    out.quadrature_error = std::abs(fine - log_trapezoid_coarse(taus, g));
    double mc_var = 0.0;
    for (std::size_t j = 0; j < taus.size(); ++j) {
        const double dln_left = j > 0 ? std::log(taus[j] / taus[j - 1]) : 0.0;
        const double dln_right = j + 1 < taus.size() ? std::log(taus[j + 1] / taus[j]) : 0.0;
        const double w = 0.5 * (dln_left + dln_right) * taus[j];
        mc_var += w * w * g_err[j] * g_err[j];
    }
    out.mc_error = std::sqrt(mc_var);

    // Small-tau closure from the measured power law g ~ C tau^alpha.
    const double g0 = g[0], g1 = g[1];
    if (std::abs(g0) > 1e-30 && std::abs(g1) > 1e-30 && g0 * g1 > 0.0) {
        const double alpha = std::log(std::abs(g1) / std::abs(g0)) / std::log(taus[1] / taus[0]);
        if (alpha <= -1.0 + 1e-6)
            throw EstimatorError(
                "green_diagonal_difference: small-tau integrand diverges (alpha <= -1)");
        const double tail = g0 * taus[0] / (alpha + 1.0);
        out.value += tail;
        out.quadrature_error += std::abs(tail);
    }

    const double pref_max =
        std::pow(kTwoPi * quad.tau_max * params.sigma * params.sigma, -0.5 * dim);
    out.quadrature_error +=
        pref_max * (2.0 / (mass_m * mass_m)) * std::exp(-0.5 * mass_m * mass_m * quad.tau_max);
    return out;
}

}  // namespace mk::estimator
