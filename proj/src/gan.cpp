#include "nss/gan.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <string>

#include "nss/parallel.hpp"

namespace nss::gan {
namespace {

double softplus(double x) noexcept { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

nn::Matrix column(std::span<const double> values) {
    nn::Matrix m(static_cast<Eigen::Index>(values.size()), 1);
    for (std::size_t i = 0; i < values.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = values[i];
    return m;
}

std::span<const double> as_span(const nn::Matrix& logits) {
    return {logits.data(), static_cast<std::size_t>(logits.size())};
}

std::size_t image_side(std::size_t pixels) {
    const auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(pixels))));
    if (side * side != pixels) throw FormatError("generator output " + std::to_string(pixels) + " is not a square image");
    return side;
}

nn::Matrix gather_rows(const Batch& dataset, std::span<const std::size_t> order, std::size_t first, std::size_t count) {
    const std::size_t pixels = dataset.height() * dataset.width();
    nn::Matrix rows(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(pixels));
    for (std::size_t b = 0; b < count; ++b) {
        const auto data = dataset[order[first + b]].data();
        for (std::size_t p = 0; p < pixels; ++p)
            rows(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(p)) = static_cast<double>(data[p]);
    }
    return rows;
}

void shuffle(std::vector<std::size_t>& order, RngStream stream) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[stream.next_below(i)]);
}

[[noreturn]] void non_finite(const char* what, std::uint64_t step, int t) {
    throw NumericalError(std::string("non-finite ") + what + " at step " + std::to_string(step) + " (t=" +
                         std::to_string(t) + ")");
}

}  // namespace

double sigmoid(double x) noexcept {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double log_sigmoid(double x) noexcept { return -softplus(-x); }

DiscriminatorObjective d_objective(std::span<const double> real_logits, std::span<const double> fake_logits) {
    if (real_logits.empty() || fake_logits.empty()) throw ValidationError("d_objective needs logits");
    DiscriminatorObjective out{0.0, std::vector<double>(real_logits.size()), std::vector<double>(fake_logits.size())};
    double real_sum = 0.0;
    for (std::size_t b = 0; b < real_logits.size(); ++b) {
        real_sum += log_sigmoid(real_logits[b]);
        out.grad_real[b] = sigmoid(-real_logits[b]);
    }
    double fake_sum = 0.0;
    for (std::size_t b = 0; b < fake_logits.size(); ++b) {
        fake_sum += log_sigmoid(-fake_logits[b]);  // log(1 - sigma(x)) = log sigma(-x)
        out.grad_fake[b] = -sigmoid(fake_logits[b]);
    }
    out.value = real_sum / static_cast<double>(real_logits.size()) + fake_sum / static_cast<double>(fake_logits.size());
    return out;
}

GeneratorObjective g_objective_nonsat(std::span<const double> fake_logits) {
    if (fake_logits.empty()) throw ValidationError("g_objective_nonsat needs logits");
    GeneratorObjective out{0.0, std::vector<double>(fake_logits.size())};
    double sum = 0.0;
    for (std::size_t b = 0; b < fake_logits.size(); ++b) {
        sum -= log_sigmoid(fake_logits[b]);
        out.grad[b] = sigmoid(fake_logits[b]) - 1.0;
    }
    out.value = sum / static_cast<double>(fake_logits.size());
    return out;
}

void TrainConfig::validate() const {
    if (latent_dim == 0) throw ValidationError("latent_dim must be positive");
    if (batch_size == 0) throw ValidationError("batch_size must be positive");
    if (half_batch && batch_size < 2) throw ValidationError("half-batch filtering needs batch_size >= 2");
    if (!(optimizer.eta > 0.0)) throw DomainError("learning rate must be positive");
    if (!(optimizer.b1 >= 0.0 && optimizer.b1 < 1.0)) throw DomainError("b1 must lie in [0, 1)");
    if (!(optimizer.b2 >= 0.0 && optimizer.b2 < 1.0)) throw DomainError("b2 must lie in [0, 1)");
    if (!(optimizer.epsilon > 0.0)) throw DomainError("epsilon must be positive");
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw DomainError("sigma must be finite and non-negative");
    if (fixed_t && *fixed_t < 0) throw DomainError("fixed t must be non-negative");
    if (schedule.initial_t < 0) throw DomainError("T must be non-negative");
    if (!(schedule.beta > 0.0)) throw DomainError("beta must be positive");
}

int TrainConfig::time_at(double i) const { return fixed_t ? *fixed_t : anneal_t(i, schedule); }

nn::Matrix project_rows(const nn::Matrix& rows, const Projection& projection) {
    nn::Matrix out = rows;
    if (projection.spec.is_identity() || projection.count == 0) return out;
    const std::size_t pixels = projection.height * projection.width;
    if (static_cast<std::size_t>(rows.cols()) != pixels) throw ShapeError("projection: row width is not height*width");
    const std::size_t count = std::min<std::size_t>(projection.count, static_cast<std::size_t>(rows.rows()));
    parallel_for(count, projection.threads, [&](std::size_t k) {
        auto stream = projection.noise.derive(k);
        filter_plane({out.row(static_cast<Eigen::Index>(k)).data(), pixels}, projection.height, projection.width,
                     projection.spec, stream);
    });
    return out;
}

nn::Matrix project_rows_adjoint(const nn::Matrix& grad, const Projection& projection) {
    nn::Matrix out = grad;
    if (projection.spec.is_identity() || projection.count == 0) return out;
    const std::size_t pixels = projection.height * projection.width;
    if (static_cast<std::size_t>(grad.cols()) != pixels) throw ShapeError("projection: row width is not height*width");
    const std::size_t count = std::min<std::size_t>(projection.count, static_cast<std::size_t>(grad.rows()));
    parallel_for(count, projection.threads, [&](std::size_t k) {
        filter_plane_adjoint({out.row(static_cast<Eigen::Index>(k)).data(), pixels}, projection.height,
                             projection.width, projection.spec);
    });
    return out;
}

DiscriminatorGradient discriminator_gradient(const nn::DenseNet& discriminator, const nn::Matrix& real_projected,
                                             const nn::Matrix& fake_projected) {
    nn::ForwardCache real_cache;
    nn::ForwardCache fake_cache;
    const nn::Matrix real_logits = nn::forward(discriminator, real_projected, &real_cache);
    const nn::Matrix fake_logits = nn::forward(discriminator, fake_projected, &fake_cache);
    const auto objective = d_objective(as_span(real_logits), as_span(fake_logits));

    // D ascends the objective; descend its negation. Each mean carries its
    // own 1/B, which nn::backward applies.
    nn::Matrix real_up = -column(objective.grad_real);
    nn::Matrix fake_up = -column(objective.grad_fake);
    auto grads = nn::backward(discriminator, real_cache, real_up);
    grads += nn::backward(discriminator, fake_cache, fake_up);
    return {objective.value, std::move(grads)};
}

GeneratorGradient generator_gradient(const nn::DenseNet& generator, const nn::DenseNet& discriminator,
                                     const nn::Matrix& latent, const Projection& projection) {
    nn::ForwardCache g_cache;
    const nn::Matrix fakes = nn::forward(generator, latent, &g_cache);
    return generator_gradient(generator, g_cache, discriminator, project_rows(fakes, projection), projection);
}

GeneratorGradient generator_gradient(const nn::DenseNet& generator, const nn::ForwardCache& generator_cache,
                                     const nn::DenseNet& discriminator, const nn::Matrix& fake_projected,
                                     const Projection& projection) {
    nn::ForwardCache d_cache;
    const nn::Matrix logits = nn::forward(discriminator, fake_projected, &d_cache);
    const auto objective = g_objective_nonsat(as_span(logits));

    const auto d_grads = nn::backward(discriminator, d_cache, column(objective.grad));
    const nn::Matrix through_filter = project_rows_adjoint(d_grads.input, projection);
    return {objective.value, nn::backward(generator, generator_cache, through_filter)};
}

nn::Matrix draw_latent(std::size_t count, std::size_t latent_dim, const RngStream& base) {
    nn::Matrix z(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(latent_dim));
    for (std::size_t k = 0; k < count; ++k) {
        auto stream = base.derive(k);
        for (std::size_t j = 0; j < latent_dim; ++j)
            z(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = gaussian_draw(stream);
    }
    return z;
}

Checkpoint initial_checkpoint(const TrainConfig& cfg, std::size_t pixels) {
    RngStream g_stream(cfg.seed, streams::kInitG);
    RngStream d_stream(cfg.seed, streams::kInitD);
    const auto g_spec = nn::generator_layers(cfg.latent_dim, pixels);
    const auto d_spec = nn::discriminator_layers(pixels);
    return {nn::init_net(g_spec, g_stream), nn::init_net(d_spec, d_stream), 0};
}

TrainResult train(const TrainConfig& cfg, const Batch& dataset) {
    cfg.validate();
    const std::size_t height = dataset.height();
    const std::size_t width = dataset.width();
    const std::size_t pixels = height * width;
    if (dataset.size() < cfg.batch_size)
        throw ValidationError("dataset (" + std::to_string(dataset.size()) + " images) is smaller than one batch");

    Checkpoint state = initial_checkpoint(cfg, pixels);
    auto& generator = state.generator;
    auto& discriminator = state.discriminator;
    auto g_adam = nn::AdamState::for_net(generator);
    auto d_adam = nn::AdamState::for_net(discriminator);

    const std::size_t steps_per_epoch = dataset.size() / cfg.batch_size;
    const std::uint64_t total_steps = cfg.epochs * steps_per_epoch;
    const std::size_t filtered = cfg.half_batch ? cfg.batch_size / 2 : cfg.batch_size;

    const RngStream shuffle_base(cfg.seed, streams::kShuffle);
    const RngStream latent_base(cfg.seed, streams::kLatent);
    const RngStream real_noise_base(cfg.seed, streams::kFilterReal);
    const RngStream fake_noise_base(cfg.seed, streams::kFilterFake);

    std::vector<StepRecord> history;
    history.reserve(total_steps);
    std::vector<std::size_t> order(dataset.size());

    std::uint64_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        shuffle(order, shuffle_base.derive(epoch));

        for (std::size_t s = 0; s < steps_per_epoch; ++s, ++step) {
            const double i = static_cast<double>(step) / static_cast<double>(total_steps);
            // With no filter there is no time; record 0 so the history
            // matches an NSS run at t = 0.
            const int t = cfg.filter == FilterKind::None ? 0 : cfg.time_at(i);
            const FilterSpec spec{cfg.filter, t, cfg.sigma, gaussian_kernel3()};
            const Projection real_proj{spec, filtered, height, width, real_noise_base.derive(step), cfg.threads};
            const Projection fake_proj{spec, filtered, height, width, fake_noise_base.derive(step), cfg.threads};

            const nn::Matrix real = gather_rows(dataset, order, s * cfg.batch_size, cfg.batch_size);
            const nn::Matrix latent = draw_latent(cfg.batch_size, cfg.latent_dim, latent_base.derive(step));

            // D step on detached fakes.
            nn::ForwardCache g_cache;
            const nn::Matrix fakes = nn::forward(generator, latent, &g_cache);
            const nn::Matrix fake_projected = project_rows(fakes, fake_proj);
            const auto d_pass =
                discriminator_gradient(discriminator, project_rows(real, real_proj), fake_projected);
            if (!std::isfinite(d_pass.objective)) non_finite("discriminator objective", step, t);
            nn::adam_step(discriminator, d_pass.descent, d_adam, cfg.optimizer);

            // G step through the updated D; same latent and filter noise.
            const auto g_pass = generator_gradient(generator, g_cache, discriminator, fake_projected, fake_proj);
            if (!std::isfinite(g_pass.objective)) non_finite("generator objective", step, t);
            nn::adam_step(generator, g_pass.descent, g_adam, cfg.optimizer);

            history.push_back({step, i, t, d_pass.objective, g_pass.objective});
        }
    }

    return {Checkpoint{nn::round_to_float(generator), nn::round_to_float(discriminator), step}, std::move(history)};
}

Batch generate(const Checkpoint& checkpoint, std::size_t n, std::uint64_t seed) {
    if (n == 0) throw ValidationError("cannot generate an empty batch");
    const std::size_t pixels = checkpoint.generator.output_dim();
    if (checkpoint.discriminator.input_dim() != pixels)
        throw FormatError("checkpoint generator output does not match discriminator input");
    const std::size_t side = image_side(pixels);

    const nn::Matrix latent = draw_latent(n, checkpoint.generator.input_dim(), RngStream(seed, streams::kSample));
    const nn::Matrix fakes = nn::forward(checkpoint.generator, latent);
    std::vector<Image> images;
    images.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::vector<float> data(pixels);
        for (std::size_t p = 0; p < pixels; ++p)
            data[p] = static_cast<float>(fakes(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(p)));
        images.emplace_back(side, side, std::move(data));
    }
    return Batch(std::move(images), seed);
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
    const nn::DenseNet nets[] = {checkpoint.generator, checkpoint.discriminator};
    nn::write_checkpoint(path, nets, checkpoint.step);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    auto loaded = nn::read_checkpoint(path);
    if (loaded.nets.size() != 2) throw FormatError("GAN checkpoint must hold exactly two nets: " + path.string());
    Checkpoint out{std::move(loaded.nets[0]), std::move(loaded.nets[1]), loaded.step};
    if (out.generator.output_dim() != out.discriminator.input_dim() || out.discriminator.output_dim() != 1)
        throw FormatError("GAN checkpoint nets do not fit together: " + path.string());
    return out;
}

void write_history_csv(std::span<const StepRecord> history, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << "step,i,t,d_obj,g_obj\n";
    char line[160];
    for (const auto& r : history) {
        std::snprintf(line, sizeof line, "%llu,%.17g,%d,%.17g,%.17g\n", static_cast<unsigned long long>(r.step), r.i,
                      r.t, r.d_obj, r.g_obj);
        out << line;
    }
    if (!out) throw IoError("write failure: " + path.string());
}

}  // namespace nss::gan
