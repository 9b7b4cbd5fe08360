#include "nss/nn.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

namespace nss::nn {
namespace {

void activate(const Matrix& pre, Matrix& out, Activation act) {
    switch (act) {
        case Activation::Identity: out = pre; break;
        case Activation::LeakyRelu: out = pre.unaryExpr([](double v) { return v > 0.0 ? v : kLeakySlope * v; }); break;
        case Activation::Tanh: out = pre.array().tanh().matrix(); break;
    }
}

/// Multiplies `grad` in place by the activation derivative.
void activation_backward(const Matrix& pre, const Matrix& post, Matrix& grad, Activation act) {
    switch (act) {
        case Activation::Identity: break;
        case Activation::LeakyRelu:
            grad.array() *= pre.array().unaryExpr([](double v) { return v > 0.0 ? 1.0 : kLeakySlope; });
            break;
        case Activation::Tanh: grad.array() *= (1.0 - post.array().square()); break;
    }
}

bool finite(const Gradients& g) {
    for (const auto& w : g.weight)
        if (!w.allFinite()) return false;
    for (const auto& b : g.bias)
        if (!b.allFinite()) return false;
    return true;
}

template <typename Derived>
void adam_update(Eigen::MatrixBase<Derived>& param, const Eigen::MatrixBase<Derived>& grad,
                 Eigen::MatrixBase<Derived>& m, Eigen::MatrixBase<Derived>& v, const OptimizerConfig& cfg,
                 double correction1, double correction2) {
    m = cfg.b1 * m + (1.0 - cfg.b1) * grad;
    v = cfg.b2 * v + (1.0 - cfg.b2) * grad.cwiseProduct(grad);
    param.array() -= cfg.eta * (m.array() / correction1) / ((v.array() / correction2).sqrt() + cfg.epsilon);
}

// Little-endian byte helpers for the checkpoint container.
template <typename T>
void put(std::vector<char>& out, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

template <typename T>
T get(const std::vector<char>& in, std::size_t& offset, const std::string& path) {
    if (offset + sizeof(T) > in.size()) throw CorruptionError("checkpoint truncated: " + path);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
        v |= static_cast<T>(static_cast<T>(static_cast<unsigned char>(in[offset + i])) << (8 * i));
    offset += sizeof(T);
    return v;
}

}  // namespace

DenseNet::DenseNet(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw ShapeError("a net needs at least one layer");
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& layer = layers_[l];
        if (layer.weight.rows() == 0 || layer.weight.cols() == 0) throw ShapeError("empty layer");
        if (layer.bias.size() != layer.weight.rows())
            throw ShapeError("bias length does not match layer " + std::to_string(l) + " outputs");
        if (l > 0 && layer.weight.cols() != layers_[l - 1].weight.rows())
            throw ShapeError("layer " + std::to_string(l) + " input does not chain to previous output");
        if (!layer.weight.allFinite() || !layer.bias.allFinite())
            throw ValidationError("layer " + std::to_string(l) + " has non-finite parameters");
    }
}

std::size_t DenseNet::parameter_count() const noexcept {
    std::size_t n = 0;
    for (const auto& layer : layers_) n += layer.weight.size() + layer.bias.size();
    return n;
}

std::vector<LayerSpec> DenseNet::spec() const {
    std::vector<LayerSpec> out;
    out.reserve(layers_.size());
    for (const auto& layer : layers_)
        out.push_back({static_cast<std::size_t>(layer.weight.cols()), static_cast<std::size_t>(layer.weight.rows()),
                       layer.activation});
    return out;
}

bool DenseNet::identical_to(const DenseNet& other) const noexcept {
    if (spec() != other.spec()) return false;
    auto same_bits = [](double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); };
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& a = layers_[l];
        const auto& b = other.layers_[l];
        for (Eigen::Index i = 0; i < a.weight.size(); ++i)
            if (!same_bits(a.weight.data()[i], b.weight.data()[i])) return false;
        for (Eigen::Index i = 0; i < a.bias.size(); ++i)
            if (!same_bits(a.bias[i], b.bias[i])) return false;
    }
    return true;
}

DenseNet init_net(std::span<const LayerSpec> spec, RngStream& stream, double weight_std) {
    if (spec.empty()) throw ShapeError("empty layer spec");
    std::vector<DenseLayer> layers;
    layers.reserve(spec.size());
    for (const auto& s : spec) {
        DenseLayer layer{Matrix(s.outputs, s.inputs), Vector::Zero(static_cast<Eigen::Index>(s.outputs)), s.activation};
        for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = weight_std * gaussian_draw(stream);
        layers.push_back(std::move(layer));
    }
    return DenseNet(std::move(layers));
}

std::vector<LayerSpec> generator_layers(std::size_t latent_dim, std::size_t pixels) {
    return {{latent_dim, 64, Activation::LeakyRelu}, {64, 64, Activation::LeakyRelu}, {64, pixels, Activation::Tanh}};
}

std::vector<LayerSpec> discriminator_layers(std::size_t pixels) {
    return {{pixels, 64, Activation::LeakyRelu}, {64, 64, Activation::LeakyRelu}, {64, 1, Activation::Identity}};
}

Matrix forward(const DenseNet& net, const Matrix& batch, ForwardCache* cache) {
    if (static_cast<std::size_t>(batch.cols()) != net.input_dim())
        throw ShapeError("forward: input width " + std::to_string(batch.cols()) + " != net input " +
                         std::to_string(net.input_dim()));
    if (!batch.allFinite()) throw ValidationError("forward: non-finite input");

    if (cache) {
        cache->net = &net;
        cache->revision = net.revision();
        cache->activations.assign(1, batch);
        cache->preactivations.clear();
    }
    Matrix current = batch;
    for (const auto& layer : net.layers()) {
        Matrix pre = current * layer.weight.transpose();
        pre.rowwise() += layer.bias.transpose();
        Matrix post;
        activate(pre, post, layer.activation);
        if (cache) {
            cache->preactivations.push_back(std::move(pre));
            cache->activations.push_back(post);
        }
        current = std::move(post);
    }
    return current;
}

Gradients Gradients::zeros_like(const DenseNet& net) {
    Gradients g;
    for (const auto& layer : net.layers()) {
        g.weight.push_back(Matrix::Zero(layer.weight.rows(), layer.weight.cols()));
        g.bias.push_back(Vector::Zero(layer.bias.size()));
    }
    return g;
}

Gradients& Gradients::operator+=(const Gradients& other) {
    if (weight.size() != other.weight.size()) throw ShapeError("gradient sets have different depth");
    for (std::size_t l = 0; l < weight.size(); ++l) {
        weight[l] += other.weight[l];
        bias[l] += other.bias[l];
    }
    return *this;
}

Gradients backward(const DenseNet& net, const ForwardCache& cache, const Matrix& upstream) {
    if (cache.net != &net || cache.revision != net.revision() || cache.preactivations.size() != net.depth())
        throw ContractError("backward: forward cache is stale or belongs to another net");
    const auto rows = cache.activations.front().rows();
    if (upstream.rows() != rows || static_cast<std::size_t>(upstream.cols()) != net.output_dim())
        throw ShapeError("backward: upstream gradient shape does not match forward output");

    const double inv_batch = 1.0 / static_cast<double>(rows);
    Gradients g;
    g.weight.resize(net.depth());
    g.bias.resize(net.depth());
    Matrix delta = upstream;
    for (std::size_t l = net.depth(); l-- > 0;) {
        const auto& layer = net.layers()[l];
        activation_backward(cache.preactivations[l], cache.activations[l + 1], delta, layer.activation);
        g.weight[l] = inv_batch * (delta.transpose() * cache.activations[l]);
        g.bias[l] = inv_batch * delta.colwise().sum().transpose();
        delta = delta * layer.weight;
    }
    g.input = std::move(delta);
    return g;
}

AdamState AdamState::for_net(const DenseNet& net) {
    AdamState s;
    for (const auto& layer : net.layers()) {
        s.m_weight.push_back(Matrix::Zero(layer.weight.rows(), layer.weight.cols()));
        s.v_weight.push_back(Matrix::Zero(layer.weight.rows(), layer.weight.cols()));
        s.m_bias.push_back(Vector::Zero(layer.bias.size()));
        s.v_bias.push_back(Vector::Zero(layer.bias.size()));
    }
    return s;
}

void adam_step(DenseNet& net, const Gradients& grads, AdamState& state, const OptimizerConfig& cfg) {
    if (grads.weight.size() != net.depth() || grads.bias.size() != net.depth() || state.m_weight.size() != net.depth())
        throw ShapeError("adam_step: gradient/state depth does not match net");
    for (std::size_t l = 0; l < net.depth(); ++l) {
        const auto& layer = net.layers()[l];
        if (grads.weight[l].rows() != layer.weight.rows() || grads.weight[l].cols() != layer.weight.cols() ||
            grads.bias[l].size() != layer.bias.size())
            throw ShapeError("adam_step: gradient shape mismatch at layer " + std::to_string(l));
    }
    if (!finite(grads)) throw NumericalError("adam_step: non-finite gradient");

    ++state.step;
    const double correction1 = 1.0 - std::pow(cfg.b1, static_cast<double>(state.step));
    const double correction2 = 1.0 - std::pow(cfg.b2, static_cast<double>(state.step));
    auto& layers = net.mutable_layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        adam_update(layers[l].weight, grads.weight[l], state.m_weight[l], state.v_weight[l], cfg, correction1,
                    correction2);
        adam_update(layers[l].bias, grads.bias[l], state.m_bias[l], state.v_bias[l], cfg, correction1, correction2);
    }
}

DenseNet round_to_float(const DenseNet& net) {
    auto layers = net.layers();
    for (auto& layer : layers) {
        layer.weight = layer.weight.cast<float>().cast<double>();
        layer.bias = layer.bias.cast<float>().cast<double>();
    }
    return DenseNet(std::move(layers));
}

void write_checkpoint(const std::filesystem::path& path, std::span<const DenseNet> nets, std::uint64_t step) {
    if (nets.empty() || nets.size() > 255) throw ValidationError("checkpoint must hold 1..255 nets");
    std::vector<char> bytes{'N', 'S', 'S', 'C'};
    put<std::uint32_t>(bytes, kCheckpointVersion);
    put<std::uint64_t>(bytes, step);
    put<std::uint8_t>(bytes, static_cast<std::uint8_t>(nets.size()));
    for (const auto& net : nets) {
        if (net.depth() > 255) throw ValidationError("checkpoint nets are limited to 255 layers");
        put<std::uint8_t>(bytes, static_cast<std::uint8_t>(net.depth()));
        for (const auto& s : net.spec()) {
            put<std::uint32_t>(bytes, static_cast<std::uint32_t>(s.inputs));
            put<std::uint32_t>(bytes, static_cast<std::uint32_t>(s.outputs));
            put<std::uint8_t>(bytes, static_cast<std::uint8_t>(s.activation));
        }
    }
    auto put_f32 = [&](double v) { put<std::uint32_t>(bytes, std::bit_cast<std::uint32_t>(static_cast<float>(v))); };
    for (const auto& net : nets) {
        for (const auto& layer : net.layers()) {
            for (Eigen::Index i = 0; i < layer.weight.size(); ++i) put_f32(layer.weight.data()[i]);
            for (Eigen::Index i = 0; i < layer.bias.size(); ++i) put_f32(layer.bias[i]);
        }
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("write failure: " + path.string());
}

LoadedNets read_checkpoint(const std::filesystem::path& path) {
    const std::string name = path.string();
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + name);
    const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (bytes.size() < 4 || std::string(bytes.begin(), bytes.begin() + 4) != "NSSC")
        throw FormatError("not a checkpoint file (bad magic): " + name);
    std::size_t offset = 4;
    if (const auto version = get<std::uint32_t>(bytes, offset, name); version != kCheckpointVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version) + ": " + name);
    LoadedNets loaded;
    loaded.step = get<std::uint64_t>(bytes, offset, name);
    const auto net_count = get<std::uint8_t>(bytes, offset, name);
    if (net_count == 0) throw FormatError("checkpoint holds no nets: " + name);

    std::vector<std::vector<LayerSpec>> specs(net_count);
    for (auto& spec : specs) {
        const auto depth = get<std::uint8_t>(bytes, offset, name);
        if (depth == 0) throw FormatError("checkpoint net without layers: " + name);
        for (std::uint8_t l = 0; l < depth; ++l) {
            LayerSpec s{};
            s.inputs = get<std::uint32_t>(bytes, offset, name);
            s.outputs = get<std::uint32_t>(bytes, offset, name);
            const auto act = get<std::uint8_t>(bytes, offset, name);
            if (act > static_cast<std::uint8_t>(Activation::Tanh))
                throw FormatError("unknown activation tag " + std::to_string(act) + ": " + name);
            s.activation = static_cast<Activation>(act);
            spec.push_back(s);
        }
    }

    auto get_f32 = [&] { return static_cast<double>(std::bit_cast<float>(get<std::uint32_t>(bytes, offset, name))); };
    for (const auto& spec : specs) {
        std::vector<DenseLayer> layers;
        for (const auto& s : spec) {
            DenseLayer layer{Matrix(s.outputs, s.inputs), Vector(static_cast<Eigen::Index>(s.outputs)), s.activation};
            for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = get_f32();
            for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = get_f32();
            layers.push_back(std::move(layer));
        }
        loaded.nets.emplace_back(std::move(layers));
    }
    if (offset != bytes.size()) throw CorruptionError("checkpoint has trailing bytes: " + name);
    return loaded;
}

}  // namespace nss::nn
