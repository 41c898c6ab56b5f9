#pragma once

#include "dipmatte/unet.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace dipmatte {

struct NamedArray {
    std::string name;
    Shape shape;
    std::vector<float> data;
};

/// Flat container of named float arrays.
///
/// On disk (all integers little-endian):
///   magic "DIPMWTS1" | u32 version | u32 count |
///   count x { u32 name_len | name bytes | u32 ndim | u32 dims[ndim] | f32 data[prod(dims)] }
struct WeightSnapshot {
    static constexpr std::uint32_t kVersion = 1;

    std::vector<NamedArray> arrays;

    const NamedArray* find(std::string_view name) const;
};

void write_snapshot(const std::string& path, const WeightSnapshot& snapshot);
WeightSnapshot read_snapshot(const std::string& path);

std::vector<std::uint8_t> encode_snapshot(const WeightSnapshot& snapshot);
WeightSnapshot decode_snapshot(const std::vector<std::uint8_t>& bytes, const std::string& origin = "<memory>");

/// Appends "<prefix>noise" and "<prefix><param name>" arrays for a network.
void append_network(WeightSnapshot& snapshot, const Network<float>& net, const std::string& prefix);
/// Restores parameters (and noise, when present) for a network built with the
/// same config. Missing or misshapen arrays are a ConfigError.
void restore_network(const WeightSnapshot& snapshot, Network<float>& net, const std::string& prefix);

} // namespace dipmatte
