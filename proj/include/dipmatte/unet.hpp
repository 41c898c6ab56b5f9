#pragma once

#include "dipmatte/tensor.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace dipmatte {

enum class HeadActivation { sigmoid };

struct HeadSpec {
    std::string name;
    std::size_t channels = 1;
    HeadActivation activation = HeadActivation::sigmoid;

    bool operator==(const HeadSpec&) const = default;
};

/// Encoder/decoder U-net description. Level l downsamples with a stride-2
/// 3x3 conv to channels[l], refines with a second 3x3 conv, and (when
/// skip_channels > 0) contributes a 1x1 skip branch taken at its input
/// resolution. Every conv is followed by instance norm and leaky ReLU; each
/// head is a 1x1 conv with bias followed by its activation.
struct UNetConfig {
    std::size_t depth = 4;
    std::vector<std::size_t> channels{16, 32, 64, 128};
    std::size_t skip_channels = 4;
    std::size_t input_noise_channels = 32;
    std::vector<HeadSpec> output_heads;
    std::size_t kernel_size = 3;
    double leaky_slope = 0.1;
    /// Noise input is uniform in [0, noise_scale).
    double noise_scale = 0.1;

    void validate() const;
    bool operator==(const UNetConfig&) const = default;
};

/// Closed-form number of scalar parameters for a config (independent of image size).
std::size_t unet_parameter_count(const UNetConfig& config);

template <typename T>
struct NamedTensor {
    std::string name;
    Tensor<T> value;
};

/// A U-net bound to an image size, with its fixed noise input.
template <typename T>
class Network {
  public:
    const UNetConfig& config() const { return config_; }
    std::size_t height() const { return height_; }
    std::size_t width() const { return width_; }
    /// Working resolution: image size rounded up to a multiple of 2^depth.
    std::size_t padded_height() const { return noise_.dim(1); }
    std::size_t padded_width() const { return noise_.dim(2); }

    const Tensor<T>& noise() const { return noise_; }
    const std::vector<NamedTensor<T>>& parameters() const { return params_; }
    /// Parameter handles for the optimizer.
    std::vector<Tensor<T>> parameter_tensors() const;
    std::size_t parameter_count() const;

    /// Output per head at the image resolution.
    std::map<std::string, Tensor<T>> forward(Tape<T>& tape) const;

    void zero_grad() const;
    std::uint64_t params_checksum() const;
    std::uint64_t noise_checksum() const;

    /// Replaces the noise input (used when restoring a snapshot).
    void set_noise(const Tensor<T>& noise);

  private:
    template <typename U>
    friend Network<U> build_unet(const UNetConfig&, std::size_t, std::size_t, std::uint64_t);

    struct LevelParams {
        std::size_t skip = 0, down = 0, conv = 0, up3 = 0, up1 = 0;
    };
    struct HeadParams {
        std::size_t weight = 0, bias = 0;
    };

    UNetConfig config_;
    std::size_t height_ = 0, width_ = 0;
    Tensor<T> noise_;
    std::vector<NamedTensor<T>> params_;
    std::vector<LevelParams> levels_;
    std::vector<HeadParams> heads_;
};

/// Deterministic in (config, image size, seed). Image sizes that are not a
/// multiple of 2^depth run at the rounded-up size and the heads are cropped.
template <typename T>
Network<T> build_unet(const UNetConfig& config, std::size_t height, std::size_t width, std::uint64_t seed);

/// Copies parameter values; the destination keeps its own noise input.
template <typename T>
void copy_weights(const Network<T>& src, Network<T>& dst);

std::uint64_t fnv1a64(const void* data, std::size_t bytes, std::uint64_t hash = 0xcbf29ce484222325ull);

extern template class Network<float>;
extern template class Network<double>;

} // namespace dipmatte
