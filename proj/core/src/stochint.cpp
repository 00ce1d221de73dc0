#include "magnetokernel/stochint.hpp"

#include <cmath>
#include <vector>

namespace mk::stochint {

double ito_integral(const VectorField& field, const paths::SpacePath& path) {
    const int n = path.n_steps();
    double acc = 0.0;
    for (int k = 0; k < n; ++k) acc += dot(field(path.points[k]), path.increment(k));
    return acc;
}

double stratonovich_integral(const VectorField& field, const paths::SpacePath& path) {
    const int n = path.n_steps();
    double acc = 0.0;
    for (int k = 0; k < n; ++k) {
        const Vec mid = 0.5 * (path.points[k] + path.points[k + 1]);
        acc += dot(field(mid), path.increment(k));
    }
    return acc;
}

LineIntegralResult line_integrals(const VectorField& field, const paths::SpacePath& path) {
    LineIntegralResult result;
    const int n = path.n_steps();
    for (int k = 0; k < n; ++k) {
        const Vec dq = path.increment(k);
        const Vec mid = 0.5 * (path.points[k] + path.points[k + 1]);
        result.ito += dot(field(path.points[k]), dq);
        result.stratonovich += dot(field(mid), dq);
    }
    // re-derive the midpoint sum from ito + correction so the identity holds
    // to the last bit
    result.correction = result.stratonovich - result.ito;
    result.stratonovich = result.ito + result.correction;
    return result;
}

namespace {

struct IncrementParts {
    std::vector<Vec> drift;      // d_k
    std::vector<Vec> position;   // M_k
    std::vector<Vec> stochastic; // S_k
    std::vector<Vec> whole;      // dq_k
};

IncrementParts split_increments(const paths::SpacePath& path) {
    const int n = path.n_steps();
    IncrementParts parts;
    parts.drift.resize(static_cast<std::size_t>(n));
    parts.position.resize(static_cast<std::size_t>(n));
    parts.stochastic.resize(static_cast<std::size_t>(n));
    parts.whole.resize(static_cast<std::size_t>(n));
    const double scale = path.sigma * std::sqrt(path.tau);
    const double du = 1.0 / n;
    const Vec drift_step = du * (path.x_prime - path.x);
    for (int k = 0; k < n; ++k) {
        const double u_k = static_cast<double>(k) / n;
        const Vec dq = path.increment(k);
        // b(v_k) of the time-changed Brownian motion, reconstructed from the
        // bridge: b(u/(1-u)) = a(u)/(1-u).
        const Vec b_at_k = (1.0 / (1.0 - u_k)) * path.bridge[static_cast<std::size_t>(k)];
        const Vec m_part = (-scale * du) * b_at_k;
        const Vec beta = scale * (path.bridge[static_cast<std::size_t>(k + 1)] -
                                  path.bridge[static_cast<std::size_t>(k)]);
        parts.whole[static_cast<std::size_t>(k)] = dq;
        parts.drift[static_cast<std::size_t>(k)] = drift_step;
        parts.position[static_cast<std::size_t>(k)] = m_part;
        parts.stochastic[static_cast<std::size_t>(k)] = beta - m_part;
    }
    return parts;
}

}  // namespace

VarianceDecomposition variance_decomposition(const PairCovarianceFn& covariance,
                                             const paths::SpacePath& path) {
    const int n = path.n_steps();
    const IncrementParts parts = split_increments(path);
    VarianceDecomposition out;
    double abs_scale = 0.0;
    for (int k = 0; k < n; ++k) {
        for (int l = 0; l < n; ++l) {
            const Mat g = covariance(path.points[static_cast<std::size_t>(k)],
                                     path.points[static_cast<std::size_t>(l)]);
            const Vec& d_k = parts.drift[static_cast<std::size_t>(k)];
            const Vec& m_k = parts.position[static_cast<std::size_t>(k)];
            const Vec& s_k = parts.stochastic[static_cast<std::size_t>(k)];
            const Vec& d_l = parts.drift[static_cast<std::size_t>(l)];
            const Vec& m_l = parts.position[static_cast<std::size_t>(l)];
            const Vec& s_l = parts.stochastic[static_cast<std::size_t>(l)];

            out.drift_drift += g.quad(d_k, d_l);
            out.bridge_bridge += g.quad(m_k, m_l);
            out.cross_drift_bridge_a += g.quad(d_k, m_l);
            out.cross_drift_bridge_b += g.quad(m_k, d_l);
            if (k == l) {
                out.equal_time_trace += g.quad(s_k, s_l);
            } else {
                out.stochastic_integral += g.quad(s_k, s_l);
            }
            out.stochastic_integral += g.quad(d_k, s_l) + g.quad(s_k, d_l) + g.quad(m_k, s_l) +
                                       g.quad(s_k, m_l);

            const double term = g.quad(parts.whole[static_cast<std::size_t>(k)],
                                       parts.whole[static_cast<std::size_t>(l)]);
            out.total += term;
            abs_scale += std::abs(term);
        }
    }
    if (out.total < -1e-10 * std::max(abs_scale, 1e-300))
        throw CovarianceError("variance_decomposition: negative quadratic form; covariance is "
                              "not positive semidefinite on the sampled points");
    return out;
}

double quadratic_form_total(const PairCovarianceFn& covariance, const paths::SpacePath& path) {
    const int n = path.n_steps();
    double total = 0.0;
    double abs_scale = 0.0;
    std::vector<Vec> dq(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) dq[static_cast<std::size_t>(k)] = path.increment(k);
    for (int k = 0; k < n; ++k) {
        const double diag = covariance(path.points[static_cast<std::size_t>(k)],
                                       path.points[static_cast<std::size_t>(k)])
                                .quad(dq[static_cast<std::size_t>(k)], dq[static_cast<std::size_t>(k)]);
        total += diag;
        abs_scale += std::abs(diag);
        for (int l = 0; l < k; ++l) {
            const double off = covariance(path.points[static_cast<std::size_t>(k)],
                                          path.points[static_cast<std::size_t>(l)])
                                   .quad(dq[static_cast<std::size_t>(k)], dq[static_cast<std::size_t>(l)]);
            total += 2.0 * off;
            abs_scale += 2.0 * std::abs(off);
        }
    }
    if (total < -1e-10 * std::max(abs_scale, 1e-300))
        throw CovarianceError("quadratic_form_total: negative quadratic form; covariance is not "
                              "positive semidefinite on the sampled points");
    return total;
}

}  // namespace mk::stochint
