#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "nss/nn.hpp"
#include "nss/scalespace.hpp"
#include "nss/tensorio.hpp"

namespace nss::gan {

inline constexpr std::uint64_t kDefaultSeed = 20200101;

// Objectives. Gradients are per-sample: entry b is the derivative of the
// b-th summand of the mean, which is the upstream convention nn::backward
// expects.

/// log sigma(x) without overflow for large |x|.
double log_sigmoid(double x) noexcept;
double sigmoid(double x) noexcept;

struct DiscriminatorObjective {
    double value;                    ///< mean log D(x) + mean log(1 - D(G(z))); D maximizes it
    std::vector<double> grad_real;   ///< d/d real_logit_b
    std::vector<double> grad_fake;   ///< d/d fake_logit_b
};

DiscriminatorObjective d_objective(std::span<const double> real_logits, std::span<const double> fake_logits);

struct GeneratorObjective {
    double value;  ///< mean -log D(G(z)); G minimizes it
    std::vector<double> grad;
};

/// Non-saturating generator objective.
GeneratorObjective g_objective_nonsat(std::span<const double> fake_logits);

struct TrainConfig {
    std::size_t latent_dim = 16;
    std::size_t batch_size = 128;
    std::size_t epochs = 30;
    nn::OptimizerConfig optimizer{};
    FilterKind filter = FilterKind::NoisyScaleSpace;
    double sigma = 0.15;
    AnnealSchedule schedule{};
    std::optional<int> fixed_t;  ///< overrides the schedule when set
    std::uint64_t seed = kDefaultSeed;
    bool half_batch = true;
    unsigned threads = 1;

    /// Throws DomainError/ValidationError on an unusable configuration.
    void validate() const;

    /// Filter time for relative iteration i.
    int time_at(double i) const;
};

struct Checkpoint {
    nn::DenseNet generator;
    nn::DenseNet discriminator;
    std::uint64_t step = 0;
};

struct StepRecord {
    std::uint64_t step;
    double i;
    int t;  ///< filter time applied at this step; 0 when the filter kind is None
    double d_obj;
    double g_obj;
};

struct TrainResult {
    Checkpoint checkpoint;  ///< parameters rounded to float, as persisted
    std::vector<StepRecord> history;
};

/// Where the filter Phi_t goes in one mini-batch: the first `count` rows,
/// each row reshaped to height x width, row k filtered with noise.derive(k).
struct Projection {
    FilterSpec spec;
    std::size_t count = 0;
    std::size_t height = 8;
    std::size_t width = 8;
    RngStream noise{0, 0};
    unsigned threads = 1;
};

nn::Matrix project_rows(const nn::Matrix& rows, const Projection& projection);

/// Jacobian-transpose of project_rows.
nn::Matrix project_rows_adjoint(const nn::Matrix& grad, const Projection& projection);

struct DiscriminatorGradient {
    double objective;        ///< d_objective value, before the update
    nn::Gradients descent;   ///< gradient of -objective w.r.t. D parameters
};

/// D's gradient on already-projected reals and fakes. Fakes are plain data
/// here, so nothing flows back into G.
DiscriminatorGradient discriminator_gradient(const nn::DenseNet& discriminator, const nn::Matrix& real_projected,
                                             const nn::Matrix& fake_projected);

struct GeneratorGradient {
    double objective;       ///< g_objective_nonsat value
    nn::Gradients descent;  ///< gradient w.r.t. G parameters, through D and Phi
};

GeneratorGradient generator_gradient(const nn::DenseNet& generator, const nn::DenseNet& discriminator,
                                     const nn::Matrix& latent, const Projection& projection);

/// Same, reusing a generator forward pass and its already-projected output
/// (which must have been produced with `projection`).
GeneratorGradient generator_gradient(const nn::DenseNet& generator, const nn::ForwardCache& generator_cache,
                                     const nn::DenseNet& discriminator, const nn::Matrix& fake_projected,
                                     const Projection& projection);

/// Alternating D/G training on `dataset` (images flattened row-major).
/// Per step: t from the schedule (or the fixed override), the filter applied
/// to the first floor(B/2) reals and fakes (all of them with half_batch off)
/// using fresh per-step noise, one D update on detached fakes, then one G
/// update through the updated D. Deterministic given cfg.seed.
/// Throws NumericalError if an objective becomes non-finite.
TrainResult train(const TrainConfig& cfg, const Batch& dataset);

/// Generator and discriminator at initialization for `cfg` and `pixels`.
Checkpoint initial_checkpoint(const TrainConfig& cfg, std::size_t pixels);

/// Latent rows for `count` samples; row k is drawn from base.derive(k).
nn::Matrix draw_latent(std::size_t count, std::size_t latent_dim, const RngStream& base);

/// n fake images G(z), z ~ N(0, I). Images are square with side
/// sqrt(G output); a checkpoint whose nets do not fit together raises FormatError.
Batch generate(const Checkpoint& checkpoint, std::size_t n, std::uint64_t seed);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// CSV with header step,i,t,d_obj,g_obj.
void write_history_csv(std::span<const StepRecord> history, const std::filesystem::path& path);

}  // namespace nss::gan
