#include "dipmatte/unet.hpp"

#include "dipmatte/ops.hpp"
#include "dipmatte/rng.hpp"

#include <cmath>

namespace dipmatte {

void UNetConfig::validate() const {
    if (depth < 1) throw ConfigError("unet: depth must be at least 1");
    if (channels.size() != depth)
        throw ConfigError("unet: channels lists " + std::to_string(channels.size()) + " levels for depth " +
                          std::to_string(depth));
    for (auto c : channels)
        if (c == 0) throw ConfigError("unet: every level needs at least one channel");
    if (input_noise_channels == 0) throw ConfigError("unet: noise input needs at least one channel");
    if (kernel_size % 2 == 0) throw ConfigError("unet: kernel size must be odd");
    if (output_heads.empty()) throw ConfigError("unet: at least one output head is required");
    for (const auto& h : output_heads)
        if (h.channels == 0) throw ConfigError("unet: head '" + h.name + "' has no channels");
    if (!(leaky_slope > 0 && leaky_slope < 1)) throw ConfigError("unet: leaky slope must lie in (0, 1)");
}

std::size_t unet_parameter_count(const UNetConfig& c) {
    c.validate();
    const std::size_t k2 = c.kernel_size * c.kernel_size;
    std::size_t total = 0;
    std::size_t in = c.input_noise_channels;
    for (std::size_t l = 0; l < c.depth; ++l) {
        const std::size_t ch = c.channels[l];
        const std::size_t deeper = c.channels[std::min(l + 1, c.depth - 1)];
        total += in * c.skip_channels;          // 1x1 skip
        total += in * ch * k2 + ch * ch * k2;   // stride-2 down + refine
        total += (c.skip_channels + deeper) * ch * k2 + ch * ch; // decoder 3x3 + 1x1
        in = ch;
    }
    for (const auto& h : c.output_heads) total += c.channels[0] * h.channels + h.channels;
    return total;
}

std::uint64_t fnv1a64(const void* data, std::size_t bytes, std::uint64_t hash) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
        hash ^= p[i];
        hash *= 0x100000001b3ull;
    }
    return hash;
}

template <typename T>
std::vector<Tensor<T>> Network<T>::parameter_tensors() const {
    std::vector<Tensor<T>> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p.value);
    return out;
}

template <typename T>
std::size_t Network<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.numel();
    return n;
}

template <typename T>
void Network<T>::zero_grad() const {
    for (const auto& p : params_) p.value.clear_grad();
}

template <typename T>
std::uint64_t Network<T>::params_checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& p : params_) h = fnv1a64(p.value.data().data(), p.value.numel() * sizeof(T), h);
    return h;
}

template <typename T>
std::uint64_t Network<T>::noise_checksum() const {
    return fnv1a64(noise_.data().data(), noise_.numel() * sizeof(T));
}

template <typename T>
void Network<T>::set_noise(const Tensor<T>& noise) {
    if (noise.shape() != noise_.shape())
        throw ShapeError("unet: noise shape " + shape_str(noise.shape()) + " does not match " +
                         shape_str(noise_.shape()));
    noise_ = noise.detach();
}

template <typename T>
std::map<std::string, Tensor<T>> Network<T>::forward(Tape<T>& tape) const {
    const T slope = T(config_.leaky_slope);
    const auto block = [&](const Tensor<T>& x, std::size_t param, int stride) {
        auto y = ops::conv2d(tape, x, params_[param].value, stride);
        return ops::leaky_relu(tape, ops::instance_norm(tape, y), slope);
    };

    std::vector<Tensor<T>> skips(config_.depth);
    Tensor<T> x = noise_;
    for (std::size_t l = 0; l < config_.depth; ++l) {
        const auto& lp = levels_[l];
        if (config_.skip_channels > 0) skips[l] = block(x, lp.skip, 1);
        x = block(block(x, lp.down, 2), lp.conv, 1);
    }
    for (std::size_t l = config_.depth; l-- > 0;) {
        const auto& lp = levels_[l];
        auto up = ops::upsample_nearest(tape, x, 2);
        if (config_.skip_channels > 0) up = ops::concat_channels(tape, skips[l], up);
        x = block(block(up, lp.up3, 1), lp.up1, 1);
    }

    std::map<std::string, Tensor<T>> out;
    for (std::size_t i = 0; i < heads_.size(); ++i) {
        auto y = ops::conv2d(tape, x, params_[heads_[i].weight].value, 1);
        y = ops::bias_add(tape, y, params_[heads_[i].bias].value);
        y = ops::sigmoid(tape, y);
        if (y.dim(1) != height_ || y.dim(2) != width_) y = ops::crop(tape, y, height_, width_);
        out.emplace(config_.output_heads[i].name, y);
    }
    return out;
}

template <typename T>
Network<T> build_unet(const UNetConfig& config, std::size_t height, std::size_t width, std::uint64_t seed) {
    config.validate();
    const std::size_t unit = std::size_t{1} << config.depth;
    if (height < unit || width < unit)
        throw ConfigError("unet: image " + std::to_string(height) + "x" + std::to_string(width) +
                          " is smaller than 2^depth = " + std::to_string(unit) + "; reduce the network depth");

    Network<T> net;
    net.config_ = config;
    net.height_ = height;
    net.width_ = width;

    Rng rng(seed);
    const std::size_t ph = (height + unit - 1) / unit * unit, pw = (width + unit - 1) / unit * unit;
    std::vector<T> noise(config.input_noise_channels * ph * pw);
    for (auto& v : noise) v = T(config.noise_scale * rng.uniform());
    net.noise_ = Tensor<T>(Shape{config.input_noise_channels, ph, pw}, std::move(noise));

    // Centered uniform, bound 1/sqrt(fan_in).
    const auto add_param = [&](std::string name, Shape shape, std::size_t fan_in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::vector<T> data(shape_numel(shape));
        for (auto& v : data) v = T(rng.uniform(-bound, bound));
        net.params_.push_back({std::move(name), Tensor<T>(std::move(shape), std::move(data), true)});
        return net.params_.size() - 1;
    };

    const std::size_t k = config.kernel_size;
    std::size_t in = config.input_noise_channels;
    net.levels_.resize(config.depth);
    for (std::size_t l = 0; l < config.depth; ++l) {
        const std::size_t ch = config.channels[l];
        const std::string p = "enc" + std::to_string(l) + ".";
        auto& lp = net.levels_[l];
        if (config.skip_channels > 0) lp.skip = add_param(p + "skip", Shape{config.skip_channels, in, 1, 1}, in);
        lp.down = add_param(p + "down", Shape{ch, in, k, k}, in * k * k);
        lp.conv = add_param(p + "conv", Shape{ch, ch, k, k}, ch * k * k);
        in = ch;
    }
    for (std::size_t l = config.depth; l-- > 0;) {
        const std::size_t ch = config.channels[l];
        const std::size_t deeper = config.channels[std::min(l + 1, config.depth - 1)];
        const std::size_t cat = config.skip_channels + deeper;
        const std::string p = "dec" + std::to_string(l) + ".";
        auto& lp = net.levels_[l];
        lp.up3 = add_param(p + "conv3", Shape{ch, cat, k, k}, cat * k * k);
        lp.up1 = add_param(p + "conv1", Shape{ch, ch, 1, 1}, ch);
    }
    for (const auto& h : config.output_heads) {
        const std::size_t c0 = config.channels[0];
        typename Network<T>::HeadParams hp;
        hp.weight = add_param("head." + h.name + ".weight", Shape{h.channels, c0, 1, 1}, c0);
        hp.bias = add_param("head." + h.name + ".bias", Shape{h.channels}, c0);
        net.heads_.push_back(hp);
    }
    return net;
}

template <typename T>
void copy_weights(const Network<T>& src, Network<T>& dst) {
    if (!(src.config() == dst.config())) throw ConfigError("copy_weights: network configs differ");
    const auto& from = src.parameters();
    auto to = dst.parameter_tensors();
    for (std::size_t i = 0; i < from.size(); ++i) {
        auto d = to[i].mutable_data();
        const auto s = from[i].value.data();
        std::copy(s.begin(), s.end(), d.begin());
    }
}

template class Network<float>;
template class Network<double>;
template Network<float> build_unet<float>(const UNetConfig&, std::size_t, std::size_t, std::uint64_t);
template Network<double> build_unet<double>(const UNetConfig&, std::size_t, std::size_t, std::uint64_t);
template void copy_weights<float>(const Network<float>&, Network<float>&);
template void copy_weights<double>(const Network<double>&, Network<double>&);

} // namespace dipmatte
