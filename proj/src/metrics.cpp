#include "nss/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "nss/parallel.hpp"

namespace nss::metrics {
namespace {

constexpr std::size_t N = hadamard::kOrder;

Mat8 multiply(const Mat8& a, const Mat8& b) {
    Mat8 out{};
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t k = 0; k < N; ++k)
            for (std::size_t j = 0; j < N; ++j) out[i][j] += a[i][k] * b[k][j];
    return out;
}

Mat8 symmetrize(const Mat8& m) {
    Mat8 out{};
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j) out[i][j] = 0.5 * (m[i][j] + m[j][i]);
    return out;
}

double off_diagonal_norm(const Mat8& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j)
            if (i != j) s += a[i][j] * a[i][j];
    return std::sqrt(s);
}

double frobenius(const Mat8& a) {
    double s = 0.0;
    for (const auto& row : a)
        for (double v : row) s += v * v;
    return std::sqrt(s);
}

/// Eigen-decomposition a = V diag(d) V^T; a is destroyed.
void jacobi_eigen(Mat8& a, hadamard::Coeffs& eigenvalues, Mat8& vectors) {
    vectors = Mat8{};
    for (std::size_t i = 0; i < N; ++i) vectors[i][i] = 1.0;

    const double scale = std::max(frobenius(a), 1e-300);
    for (int sweep = 0; sweep < 100 && off_diagonal_norm(a) > 1e-12 * scale; ++sweep) {
        for (std::size_t p = 0; p + 1 < N; ++p) {
            for (std::size_t q = p + 1; q < N; ++q) {
                if (a[p][q] == 0.0) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < N; ++k) {
                    const double akp = a[k][p];
                    const double akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < N; ++k) {
                    const double apk = a[p][k];
                    const double aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < N; ++k) {
                    const double vkp = vectors[k][p];
                    const double vkq = vectors[k][q];
                    vectors[k][p] = c * vkp - s * vkq;
                    vectors[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    for (std::size_t i = 0; i < N; ++i) eigenvalues[i] = a[i][i];
}

}  // namespace

double order_independent_sum(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    double sum = 0.0;
    double compensation = 0.0;
    for (double v : values) {
        const double t = sum + v;
        if (std::abs(sum) >= std::abs(v))
            compensation += (sum - t) + v;
        else
            compensation += (v - t) + sum;
        sum = t;
    }
    return sum + compensation;
}

double pooled_variance(const Batch& batch) {
    std::vector<double> values;
    values.reserve(batch.size() * batch.height() * batch.width());
    for (const auto& img : batch)
        for (float v : img.data()) values.push_back(static_cast<double>(v));
    const double n = static_cast<double>(values.size());
    const double mean = order_independent_sum(values) / n;
    for (auto& v : values) v = (v - mean) * (v - mean);
    return order_independent_sum(std::move(values)) / n;
}

VarianceCurve variance_curve(const Batch& batch, FilterKind kind, double sigma, std::span<const int> t_values,
                             const RngStream& base, unsigned threads) {
    if (!std::is_sorted(t_values.begin(), t_values.end())) throw DomainError("t values must be ascending");
    VarianceCurve curve{kind, {}};
    curve.points.reserve(t_values.size());
    for (int t : t_values) {
        if (t < 0) throw DomainError("t values must be non-negative");
        const FilterSpec spec{kind, t, sigma, gaussian_kernel3()};
        const Batch filtered = apply_filter(batch, spec, base.derive(static_cast<std::uint64_t>(t)), threads);
        curve.points.push_back({t, pooled_variance(filtered)});
    }
    return curve;
}

CoeffStats coeff_stats(const Batch& batch) {
    if (batch.height() != N || batch.width() != N) throw ShapeError("coeff_stats expects 8x8 images");
    const std::size_t count = batch.size();
    std::vector<hadamard::CoeffVector> fits(count);
    for (std::size_t n = 0; n < count; ++n) fits[n] = hadamard::fit(batch[n]);

    CoeffStats stats;
    stats.count = count;
    const double inv = 1.0 / static_cast<double>(count);
    std::vector<double> column(count);
    for (std::size_t i = 0; i < N; ++i) {
        for (std::size_t n = 0; n < count; ++n) column[n] = fits[n].alpha[i];
        stats.mean[i] = order_independent_sum(column) * inv;
    }
    for (std::size_t i = 0; i < N; ++i) {
        for (std::size_t j = i; j < N; ++j) {
            for (std::size_t n = 0; n < count; ++n)
                column[n] = (fits[n].alpha[i] - stats.mean[i]) * (fits[n].alpha[j] - stats.mean[j]);
            stats.covariance[i][j] = stats.covariance[j][i] = order_independent_sum(column) * inv;
        }
        stats.std[i] = std::sqrt(std::max(0.0, stats.covariance[i][i]));
    }
    for (std::size_t n = 0; n < count; ++n) column[n] = fits[n].residual_norm;
    stats.mean_residual = order_independent_sum(column) * inv;
    return stats;
}

Mat8 sym_psd_sqrt(const Mat8& m) {
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = i + 1; j < N; ++j)
            if (!(std::abs(m[i][j] - m[j][i]) <= 1e-8)) throw DomainError("sym_psd_sqrt: matrix is not symmetric");

    Mat8 work = symmetrize(m);
    hadamard::Coeffs eigenvalues{};
    Mat8 vectors{};
    jacobi_eigen(work, eigenvalues, vectors);

    Mat8 out{};
    for (std::size_t i = 0; i < N; ++i) {
        for (std::size_t j = 0; j < N; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < N; ++k) s += vectors[i][k] * std::sqrt(std::max(0.0, eigenvalues[k])) * vectors[j][k];
            out[i][j] = s;
        }
    }
    return symmetrize(out);
}

double coeff_frechet(const CoeffStats& a, const CoeffStats& b) {
    double mean_term = 0.0;
    for (std::size_t i = 0; i < N; ++i) mean_term += (a.mean[i] - b.mean[i]) * (a.mean[i] - b.mean[i]);

    const Mat8 root_a = sym_psd_sqrt(a.covariance);
    const Mat8 cross = sym_psd_sqrt(symmetrize(multiply(multiply(root_a, b.covariance), root_a)));
    double trace_term = 0.0;
    for (std::size_t i = 0; i < N; ++i) trace_term += a.covariance[i][i] + b.covariance[i][i] - 2.0 * cross[i][i];
    return std::max(0.0, mean_term + trace_term);
}

void write_curves_csv(std::span<const VarianceCurve> curves, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << "kind,t,variance\n";
    char line[96];
    for (const auto& curve : curves)
        for (const auto& p : curve.points) {
            std::snprintf(line, sizeof line, "%s,%d,%.17g\n", std::string(to_string(curve.kind)).c_str(), p.t, p.variance);
            out << line;
        }
    if (!out) throw IoError("write failure: " + path.string());
}

void write_coeff_stats_csv(const CoeffStats& stats, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << "basis,mean,std\n";
    char line[96];
    for (std::size_t i = 0; i < N; ++i) {
        std::snprintf(line, sizeof line, "%zu,%.17g,%.17g\n", i + 1, stats.mean[i], stats.std[i]);
        out << line;
    }
    if (!out) throw IoError("write failure: " + path.string());
}

}  // namespace nss::metrics
