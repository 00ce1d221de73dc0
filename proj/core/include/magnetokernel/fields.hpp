#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "magnetokernel/geometry.hpp"

namespace mk::fields {

/// Uniform periodic grid. Nodes sit at origin + h * (i, j, k); the box length
/// per active axis is h * shape, and the stored values repeat periodically
/// beyond it. Inactive axes have shape 1.
struct GridSpec {
    Vec origin{};
    double spacing = 1.0;
    std::array<int, 3> shape{1, 1, 1};
    int dim = 1;

    long num_nodes() const {
        return static_cast<long>(shape[0]) * shape[1] * shape[2];
    }
    double extent(int axis) const { return spacing * shape[static_cast<std::size_t>(axis)]; }

    bool contains(const Vec& p) const {
        for (int a = 0; a < dim; ++a) {
            const double lo = origin[static_cast<std::size_t>(a)];
            if (p[static_cast<std::size_t>(a)] < lo - 1e-12 ||
                p[static_cast<std::size_t>(a)] > lo + extent(a) + 1e-12)
                return false;
        }
        return true;
    }

    bool operator==(const GridSpec& other) const {
        return origin == other.origin && spacing == other.spacing && shape == other.shape &&
               dim == other.dim;
    }

    /// Box centered on the origin with side 2 * half_extent; the node count
    /// per axis is rounded up so the spacing is honored exactly.
    static GridSpec centered_box(int dim, double half_extent, double spacing);
};

enum class CovarianceKind { None, Constant, BoundedIsotropic, ScaleInvariant, TranslationInvariant };

/// Declarative covariance of the Gaussian vector potential. The per-component
/// continuum spectral densities:
///   Constant(g):           g (2 pi)^D delta(k)   (a single global Gaussian
///                          vector; handled outside the FFT path)
///   BoundedIsotropic(g,l): g (pi l^2)^{D/2} exp(-l^2 |k|^2 / 4)
///                          <=> G_jk(x,x') = delta_jk g exp(-|x-x'|^2/l^2)
///   ScaleInvariant:        amplitude (|k|^2)^{-D/2-gamma} on the band
///                          kappa_ir <= |k| <= kappa_uv, zero outside
///   TranslationInvariant:  user-supplied density S(k) >= 0
/// With transverse = true the projector delta_jk - k_j k_k/|k|^2 is applied
/// in spectral space (identity at k = 0; a constant mode is divergence-free).
struct CovarianceSpec {
    CovarianceKind kind = CovarianceKind::None;
    bool transverse = false;
    double amplitude = 0.0;
    double length = 1.0;      // BoundedIsotropic; +inf degenerates to Constant
    double gamma = 0.0;       // ScaleInvariant index, in (0,1)
    double kappa_ir = 0.0;
    double kappa_uv = 0.0;
    std::function<double(const Vec&)> spectral_density;  // TranslationInvariant

    static CovarianceSpec none();
    static CovarianceSpec constant(double g, bool transverse = false);
    static CovarianceSpec bounded_isotropic(double g, double corr_length, bool transverse = false);
    static CovarianceSpec scale_invariant(double amplitude, double gamma, double kappa_ir,
                                          double kappa_uv, bool transverse = true);
    static CovarianceSpec translation_invariant(std::function<double(const Vec&)> density,
                                                bool transverse = false);

    bool is_zero() const { return kind == CovarianceKind::None || amplitude == 0.0; }

    /// Per-component continuum spectral density at wavevector k (before the
    /// transverse projection). Not meaningful for Constant.
    double density(const Vec& k, int dim) const;

    /// Short tag for CSV/report output, e.g. "scale(gamma=0.3)".
    std::string label() const;
};

struct OutOfExtentError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// One realization of the vector potential on a grid. Values are node-major
/// with the component index fastest. evaluate() interpolates multilinearly,
/// wrapping the upper neighbor periodically.
struct FieldSample {
    GridSpec grid;
    int components = 0;
    bool transverse = false;
    std::vector<double> values;

    double& at(int ix, int iy, int iz, int c) {
        return values[static_cast<std::size_t>(
            ((static_cast<long>(iz) * grid.shape[1] + iy) * grid.shape[0] + ix) * components + c)];
    }
    double at(int ix, int iy, int iz, int c) const {
        return values[static_cast<std::size_t>(
            ((static_cast<long>(iz) * grid.shape[1] + iy) * grid.shape[0] + ix) * components + c)];
    }

    Vec evaluate(const Vec& point) const;
};

/// Scalar gauge function chi on the same grid, plus an optional affine part
/// linear . x for exact handling of non-periodic linear gauges.
struct GaugeFunction {
    GridSpec grid;
    std::vector<double> values;
    Vec linear{};
};

/// Draws one mean-zero Gaussian realization with the requested covariance.
/// Deterministic in (seed, realization_index); realizations with different
/// indices are independent.
FieldSample sample_field(const CovarianceSpec& spec, const GridSpec& grid, std::uint64_t seed,
                         std::uint64_t realization_index = 0);

/// Deterministic symmetric-gauge constant-field sample A = (B/2)(-y, x, 0);
/// exactly transverse and exactly reproduced by multilinear interpolation.
FieldSample constant_b_field(double b_field, const GridSpec& grid);

/// A' = A + grad chi, with the gradient taken spectrally (plus the affine
/// part of chi, whose gradient is exact).
FieldSample gauge_transform(const FieldSample& sample, const GaugeFunction& chi);

/// Spectral transverse projection (idempotent).
FieldSample project_transverse(const FieldSample& sample);

/// Helmholtz split A = A_T + grad chi on the grid. The returned chi is
/// periodic (zero affine part) with zero mean.
std::pair<FieldSample, GaugeFunction> to_transverse(const FieldSample& sample);

/// max over modes of |k . A_hat(k)| / |A_hat(k)|; zero for transverse fields
/// up to FFT rounding.
double max_divergence_ratio(const FieldSample& sample);

void save_binary(const FieldSample& sample, const std::string& path);
FieldSample load_binary(const std::string& path);
void write_csv(const FieldSample& sample, std::ostream& os);

/// Covariance of the *sampled* lattice field: C_jk(r) = (1/V) sum_k S(k)
/// P_jk(k) e^{ik.r}, tabulated on grid separations and interpolated
/// multilinearly with periodic wrap. This is the quantity empirical
/// two-point functions of sample_field converge to.
class CovarianceTable {
  public:
    static CovarianceTable build(const CovarianceSpec& spec, const GridSpec& grid);

    Mat evaluate(const Vec& separation) const;
    const GridSpec& grid() const { return grid_; }

  private:
    GridSpec grid_;
    int n_comps_ = 0;  // dim*(dim+1)/2 upper-triangle entries per node
    std::vector<double> table_;
};

/// Pairwise covariance G(x, y) with the cheapest faithful evaluation:
/// closed form for None/Constant/unprojected BoundedIsotropic, lattice table
/// otherwise.
class PairCovariance {
  public:
    static PairCovariance for_spec(const CovarianceSpec& spec, const GridSpec* grid = nullptr);

    Mat operator()(const Vec& x, const Vec& y) const;
    bool is_zero() const { return mode_ == Mode::Zero; }
    bool is_constant() const { return mode_ == Mode::Diagonal; }
    double constant_value() const { return g_; }

  private:
    enum class Mode { Zero, Diagonal, BoundedClosed, Table };
    Mode mode_ = Mode::Zero;
    int dim_ = 1;
    double g_ = 0.0;
    double inv_l2_ = 0.0;
    std::shared_ptr<CovarianceTable> table_;
};

}  // namespace mk::fields
