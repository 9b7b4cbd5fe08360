#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "nss/error.hpp"
#include "nss/rng.hpp"

namespace nss::nn {

/// Row-major so that one sample is one contiguous row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class Activation : std::uint8_t { Identity = 0, LeakyRelu = 1, Tanh = 2 };

inline constexpr double kLeakySlope = 0.2;
inline constexpr double kInitWeightStd = 0.02;

struct LayerSpec {
    std::size_t inputs;
    std::size_t outputs;
    Activation activation;

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct DenseLayer {
    Matrix weight;  ///< outputs x inputs
    Vector bias;    ///< outputs
    Activation activation;
};

/// Chain of affine + activation layers.
///
/// Every mutation through mutable_layers() bumps revision(); forward caches
/// remember the revision they were taken at so backward() can reject them
/// once the parameters have moved.
class DenseNet {
public:
    explicit DenseNet(std::vector<DenseLayer> layers);

    std::size_t input_dim() const noexcept { return layers_.front().weight.cols(); }
    std::size_t output_dim() const noexcept { return layers_.back().weight.rows(); }
    std::size_t depth() const noexcept { return layers_.size(); }
    std::size_t parameter_count() const noexcept;

    const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
    std::vector<DenseLayer>& mutable_layers() noexcept {
        ++revision_;
        return layers_;
    }

    std::vector<LayerSpec> spec() const;
    std::uint64_t revision() const noexcept { return revision_; }

    /// True when shapes, activations and every parameter bit match.
    bool identical_to(const DenseNet& other) const noexcept;

private:
    std::vector<DenseLayer> layers_;
    std::uint64_t revision_ = 0;
};

/// Weights ~ N(0, weight_std^2) drawn layer by layer in row-major order; biases 0.
DenseNet init_net(std::span<const LayerSpec> spec, RngStream& stream, double weight_std = kInitWeightStd);

/// latent -> 64 -> 64 -> pixels, leaky ReLU hidden, tanh head.
std::vector<LayerSpec> generator_layers(std::size_t latent_dim = 16, std::size_t pixels = 64);

/// pixels -> 64 -> 64 -> 1, leaky ReLU hidden, identity head (a logit).
std::vector<LayerSpec> discriminator_layers(std::size_t pixels = 64);

struct ForwardCache {
    const DenseNet* net = nullptr;
    std::uint64_t revision = 0;
    std::vector<Matrix> activations;     ///< depth + 1 entries; [0] is the input
    std::vector<Matrix> preactivations;  ///< depth entries
};

/// batch is B x input_dim; returns B x output_dim. When `cache` is given it is
/// filled for a later backward().
Matrix forward(const DenseNet& net, const Matrix& batch, ForwardCache* cache = nullptr);

struct Gradients {
    std::vector<Matrix> weight;
    std::vector<Vector> bias;
    Matrix input;  ///< B x input_dim, per-sample

    static Gradients zeros_like(const DenseNet& net);
    Gradients& operator+=(const Gradients& other);
};

/// Reverse-mode pass. `upstream` row b is d(loss_b)/d(output_b); parameter
/// gradients are averaged over the B rows, the input gradient stays per-sample.
/// Throws ContractError if the cache does not belong to the net's current
/// parameters.
Gradients backward(const DenseNet& net, const ForwardCache& cache, const Matrix& upstream);

struct OptimizerConfig {
    double eta = 2e-5;
    double b1 = 0.5;
    double b2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    std::vector<Matrix> m_weight;
    std::vector<Matrix> v_weight;
    std::vector<Vector> m_bias;
    std::vector<Vector> v_bias;
    std::uint64_t step = 0;

    static AdamState for_net(const DenseNet& net);
};

/// Bias-corrected Adam descent step on every parameter of `net`. A non-finite
/// gradient raises NumericalError and leaves net and state untouched.
void adam_step(DenseNet& net, const Gradients& grads, AdamState& state, const OptimizerConfig& cfg);

/// Returns a copy whose parameters are rounded to the nearest float.
DenseNet round_to_float(const DenseNet& net);

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Container for one or more nets:
///   "NSSC" | u32 version | u64 step | u8 net count
///   per net: u8 layer count, per layer u32 inputs | u32 outputs | u8 activation
///   payload: per net, per layer, weights (row-major) then biases as f32
/// All integers and floats little-endian.
void write_checkpoint(const std::filesystem::path& path, std::span<const DenseNet> nets, std::uint64_t step);

struct LoadedNets {
    std::vector<DenseNet> nets;
    std::uint64_t step = 0;
};

LoadedNets read_checkpoint(const std::filesystem::path& path);

}  // namespace nss::nn
