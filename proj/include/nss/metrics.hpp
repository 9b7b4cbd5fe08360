#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "nss/hadamard.hpp"
#include "nss/scalespace.hpp"
#include "nss/tensorio.hpp"

namespace nss::metrics {

using Mat8 = std::array<std::array<double, hadamard::kOrder>, hadamard::kOrder>;

/// Sum that does not depend on the order of `values`: sorted ascending, then
/// Neumaier-compensated.
double order_independent_sum(std::vector<double> values);

/// Population variance of every pixel of every image, pooled.
double pooled_variance(const Batch& batch);

struct CurvePoint {
    int t;
    double variance;
};

struct VarianceCurve {
    FilterKind kind;
    std::vector<CurvePoint> points;
};

/// Filters a fresh copy of `batch` at each t (noise from base.derive(t)) and
/// records its pooled variance. t_values must be ascending and non-negative.
VarianceCurve variance_curve(const Batch& batch, FilterKind kind, double sigma, std::span<const int> t_values,
                             const RngStream& base, unsigned threads = 1);

struct CoeffStats {
    hadamard::Coeffs mean{};
    hadamard::Coeffs std{};
    Mat8 covariance{};  ///< population covariance
    double mean_residual = 0.0;
    std::size_t count = 0;
};

/// Fits every image and aggregates the moments of the coefficients. The
/// result is bitwise invariant to the order of the images.
CoeffStats coeff_stats(const Batch& batch);

/// Principal square root of a symmetric PSD matrix by cyclic Jacobi
/// (off-diagonal norm < 1e-12 relative, at most 100 sweeps). Negative
/// eigenvalues are clamped to zero. Throws DomainError if |M - M^T| > 1e-8.
Mat8 sym_psd_sqrt(const Mat8& m);

/// Frechet distance between the Gaussians N(mu_a, Sigma_a), N(mu_b, Sigma_b).
double coeff_frechet(const CoeffStats& a, const CoeffStats& b);

/// CSV writers: "kind,t,variance" and "basis,mean,std".
void write_curves_csv(std::span<const VarianceCurve> curves, const std::filesystem::path& path);
void write_coeff_stats_csv(const CoeffStats& stats, const std::filesystem::path& path);

}  // namespace nss::metrics
