#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "nss/hadamard.hpp"
#include "nss/metrics.hpp"
#include "nss/scalespace.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace nss;
using nss::testing::random_image;

namespace {

oracle::Grid to_grid(const Image& img) {
    oracle::Grid g = oracle::zeros(img.height(), img.width());
    for (std::size_t p = 0; p < img.size(); ++p) g.v[p] = img.data()[p];
    return g;
}

std::vector<double> as_doubles(const Image& img) { return {img.data().begin(), img.data().end()}; }

Image mirrored(const Image& img, bool horizontal) {
    Image out(img.height(), img.width());
    for (std::size_t r = 0; r < img.height(); ++r)
        for (std::size_t c = 0; c < img.width(); ++c)
            out.at(r, c) = horizontal ? img.at(r, img.width() - 1 - c) : img.at(img.height() - 1 - r, c);
    return out;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

TEST_CASE("binomial kernel weights") {
    const Kernel k = gaussian_kernel3();
    double sum = 0.0;
    for (double w : k.weights()) sum += w;
    CHECK(sum == 1.0);
    CHECK(k.at(0, 0) == 0.25);
    CHECK(k.at(0, 1) == 0.125);
    CHECK(k.at(-1, -1) == 0.0625);

    CHECK_THROWS_AS(Kernel({0, 0, 0, 0, 0.5, 0, 0, 0, 0}), DomainError);
    CHECK_THROWS_AS(Kernel({0, 0, 0, 0.5, 0.25, 0.25, 0, 0, 0}), DomainError);
    CHECK_NOTHROW(Kernel({0, 0, 0, 0.25, 0.5, 0.25, 0, 0, 0}));
}

TEST_CASE("convolve: constants, 1x1 images and impulses") {
    const Image constant(5, 7, std::vector<float>(35, 0.3f));
    CHECK(convolve(constant, gaussian_kernel3()) == constant);
    CHECK(scale_space(constant, 9) == constant);

    const Image single(1, 1, {0.7f});
    CHECK(convolve(single, gaussian_kernel3()) == single);

    Image impulse(5, 5);
    impulse.at(2, 2) = 1.0f;
    const Image out = convolve(impulse, gaussian_kernel3());
    CHECK(out.at(2, 2) == 0.25f);
    CHECK(out.at(1, 2) == 0.125f);
    CHECK(out.at(2, 3) == 0.125f);
    CHECK(out.at(1, 1) == 0.0625f);
    CHECK(out.at(3, 3) == 0.0625f);
    CHECK(out.at(0, 0) == 0.0f);
}

TEST_CASE("convolve matches the padded separable oracle") {
    std::mt19937_64 gen(17);
    for (auto [h, w] : {std::pair<std::size_t, std::size_t>{1, 1}, {1, 6}, {6, 1}, {2, 2}, {8, 8}, {5, 11}}) {
        const Image img = random_image(gen, h, w);
        const auto expected = oracle::blur_times(to_grid(img), 3).v;
        CHECK(oracle::max_relative_error(as_doubles(scale_space(img, 3)), expected) < 1e-6);
    }
}

TEST_CASE("convolve is linear and commutes with flips") {
    std::mt19937_64 gen(3);
    const Kernel k = gaussian_kernel3();
    for (int trial = 0; trial < 20; ++trial) {
        const Image x = random_image(gen, 6, 9), y = random_image(gen, 6, 9);
        const float a = 0.75f, b = -1.5f;
        std::vector<float> comb(x.size());
        for (std::size_t p = 0; p < comb.size(); ++p) comb[p] = a * x.data()[p] + b * y.data()[p];
        const Image lhs = convolve(Image(6, 9, comb), k);
        const Image kx = convolve(x, k), ky = convolve(y, k);
        for (std::size_t p = 0; p < comb.size(); ++p)
            CHECK(std::abs(lhs.data()[p] - (a * kx.data()[p] + b * ky.data()[p])) < 1e-5);

        for (bool horizontal : {true, false}) {
            const Image m1 = mirrored(convolve(x, k), horizontal);
            const Image m2 = convolve(mirrored(x, horizontal), k);
            for (std::size_t p = 0; p < x.size(); ++p) CHECK(std::abs(m1.data()[p] - m2.data()[p]) < 1e-6);
        }
    }
}

TEST_CASE("t = 0 and sigma = 0 edge cases") {
    std::mt19937_64 gen(8);
    const Image x = random_image(gen, 8, 8);
    RngStream s(1, 1);
    CHECK(scale_space(x, 0) == x);
    CHECK(noise_space(x, 0, 0.15, s) == x);
    CHECK(noisy_scale_space(x, 0, 0.15, s) == x);
    CHECK(scale_space(x, 1) == convolve(x, gaussian_kernel3()));

    RngStream before = s;
    CHECK(noisy_scale_space(x, 5, 0.0, s) == scale_space(x, 5));
    // No draws consumed when sigma is zero.
    CHECK(s.next_u64() == before.next_u64());

    CHECK_THROWS_AS(scale_space(x, -1), DomainError);
    CHECK_THROWS_AS(noise_space(x, -1, 0.1, s), DomainError);
    CHECK_THROWS_AS(noise_space(x, 2, -0.1, s), DomainError);
    CHECK_THROWS_AS(noisy_scale_space(x, 2, -0.1, s), DomainError);
}

TEST_CASE("NSS and NS recursions equal their closed forms with replayed noise") {
    std::mt19937_64 gen(21);
    std::uniform_int_distribution<int> tdist(0, 32);
    std::uniform_int_distribution<std::size_t> dim(1, 10);
    for (int trial = 0; trial < 60; ++trial) {
        const double sigma = std::array{0.0, 0.15, 0.5}[static_cast<std::size_t>(trial % 3)];
        const int t = tdist(gen);
        const Image y = random_image(gen, dim(gen), dim(gen));
        const RngStream stream(555, static_cast<std::uint64_t>(trial));

        const auto eps = oracle::replay_noise(stream, y.height(), y.width(), t, sigma);
        RngStream s1 = stream, s2 = stream;
        const Image nss_out = noisy_scale_space(y, t, sigma, s1);
        const Image ns_out = noise_space(y, t, sigma, s2);
        CHECK(oracle::max_relative_error(as_doubles(nss_out), oracle::closed_form_nss(to_grid(y), eps).v, 1e-3) <
              1e-5);
        CHECK(oracle::max_relative_error(as_doubles(ns_out), oracle::closed_form_ns(to_grid(y), eps).v, 1e-3) < 1e-6);
    }
}

TEST_CASE("noise-space pixel variance grows as t sigma^2") {
    const Image zero(100, 1000);
    RngStream s(77, 0);
    const Image out = noise_space(zero, 4, 0.15, s);
    const double var = metrics::pooled_variance(Batch({out}));
    CHECK(var == doctest::Approx(4 * 0.15 * 0.15).epsilon(0.05));
}

TEST_CASE("batch filtering is keyed by sample index, not by thread or order") {
    const Batch data = hadamard::gen_dataset(37, 5);
    const RngStream base(9, streams::kFilter);
    for (FilterKind kind : {FilterKind::ScaleSpace, FilterKind::NoiseSpace, FilterKind::NoisyScaleSpace}) {
        FilterSpec spec;
        spec.kind = kind;
        spec.t = 6;
        const Batch one = apply_filter(data, spec, base, 1);
        const Batch many = apply_filter(data, spec, base, 4);
        CHECK(one == many);
        for (std::size_t i : {std::size_t{0}, std::size_t{17}, std::size_t{36}}) {
            RngStream si = base.derive(i);
            CHECK(apply_filter(data[i], spec, si) == one[i]);
        }
    }
    FilterSpec none;
    CHECK(apply_filter(data, none, base, 2) == data);
}

TEST_CASE("smoothing lowers pooled variance, noise raises it") {
    const Batch data = hadamard::gen_dataset(128, 11);
    FilterSpec ss{FilterKind::ScaleSpace, 4}, ss16{FilterKind::ScaleSpace, 16};
    const RngStream base(1, 2);
    const double v0 = metrics::pooled_variance(data);
    const double v4 = metrics::pooled_variance(apply_filter(data, ss, base));
    const double v16 = metrics::pooled_variance(apply_filter(data, ss16, base));
    CHECK(v16 <= v4);
    CHECK(v4 <= v0);
}

TEST_CASE("anneal_t endpoints, sample points and domain") {
    const AnnealSchedule sched;  // T = 256, beta = 20
    CHECK(anneal_t(0.0, sched) == 256);
    CHECK(anneal_t(1.0, sched) == 0);
    CHECK(anneal_t(0.1, sched) == 35);  // 256 e^-2 = 34.65
    CHECK(anneal_t(0.5, AnnealSchedule{0, 20.0}) == 0);
    CHECK_THROWS_AS(anneal_t(0.7, AnnealSchedule{256, 0.0}), DomainError);

    CHECK_THROWS_AS(anneal_t(-0.01, sched), DomainError);
    CHECK_THROWS_AS(anneal_t(1.01, sched), DomainError);
    CHECK_THROWS_AS(anneal_t(std::numeric_limits<double>::quiet_NaN(), sched), DomainError);
    CHECK_THROWS_AS(anneal_t(0.5, AnnealSchedule{-1, 20.0}), DomainError);
    CHECK_THROWS_AS(anneal_t(0.5, AnnealSchedule{256, -1.0}), DomainError);
}

TEST_CASE("anneal_t is non-increasing and hits zero where T e^(-beta i) < 1/2") {
    for (auto sched : {AnnealSchedule{256, 20.0}, AnnealSchedule{64, 5.0}, AnnealSchedule{1000, 50.0}}) {
        const int n = 1000;
        int prev = anneal_t(0.0, sched);
        double first_zero = -1.0;
        for (int k = 1; k <= n; ++k) {
            const double i = static_cast<double>(k) / n;
            const int t = anneal_t(i, sched);
            CHECK(t <= prev);
            if (t == 0 && first_zero < 0) first_zero = i;
            prev = t;
        }
        const double crossing = std::log(2.0 * sched.initial_t) / sched.beta;
        if (crossing < 1.0) {
            CHECK(first_zero >= crossing);
            CHECK(first_zero < crossing + 1.0 / n + 1e-12);
        }
    }
}

TEST_CASE("plane adjoints pass the dot-product test") {
    std::mt19937_64 gen(4);
    std::normal_distribution<double> nd;
    const Kernel k = gaussian_kernel3();
    for (auto [h, w] : {std::pair<std::size_t, std::size_t>{1, 1}, {1, 5}, {3, 3}, {8, 8}, {6, 11}}) {
        std::vector<double> x(h * w), y(h * w), ax(h * w), aty(h * w);
        for (auto& v : x) v = nd(gen);
        for (auto& v : y) v = nd(gen);
        convolve_plane(x, ax, h, w, k);
        convolve_plane_adjoint(y, aty, h, w, k);
        CHECK(dot(ax, y) == doctest::Approx(dot(x, aty)).epsilon(1e-12));

        for (FilterKind kind : {FilterKind::ScaleSpace, FilterKind::NoisyScaleSpace, FilterKind::NoiseSpace}) {
            FilterSpec spec{kind, 5, 0.0};
            std::vector<double> fx = x, fty = y;
            RngStream s(1, 1);
            filter_plane(fx, h, w, spec, s);
            filter_plane_adjoint(fty, h, w, spec);
            CHECK(dot(fx, y) == doctest::Approx(dot(x, fty)).epsilon(1e-12));
        }
    }
}

TEST_CASE("filter kind names") {
    CHECK(parse_filter_kind("none") == FilterKind::None);
    CHECK(parse_filter_kind("ss") == FilterKind::ScaleSpace);
    CHECK(parse_filter_kind("ns") == FilterKind::NoiseSpace);
    CHECK(parse_filter_kind("nss") == FilterKind::NoisyScaleSpace);
    CHECK_THROWS_AS(parse_filter_kind("gauss"), DomainError);
    for (auto kind : {FilterKind::None, FilterKind::ScaleSpace, FilterKind::NoiseSpace, FilterKind::NoisyScaleSpace})
        CHECK(parse_filter_kind(to_string(kind)) == kind);
}
