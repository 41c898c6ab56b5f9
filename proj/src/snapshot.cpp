#include "dipmatte/snapshot.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace dipmatte {
namespace {

constexpr char kMagic[8] = {'D', 'I', 'P', 'M', 'W', 'T', 'S', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
  public:
    Reader(const std::vector<std::uint8_t>& bytes, const std::string& origin) : bytes_(bytes), origin_(origin) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == bytes_.size(); }
    [[noreturn]] void fail(const std::string& what) const { throw IoError(origin_, "weight snapshot: " + what); }

  private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) fail("truncated file");
    }

    const std::vector<std::uint8_t>& bytes_;
    const std::string& origin_;
    std::size_t pos_ = 0;
};

} // namespace

const NamedArray* WeightSnapshot::find(std::string_view name) const {
    for (const auto& a : arrays)
        if (a.name == name) return &a;
    return nullptr;
}

std::vector<std::uint8_t> encode_snapshot(const WeightSnapshot& snapshot) {
    std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
    put_u32(out, WeightSnapshot::kVersion);
    put_u32(out, static_cast<std::uint32_t>(snapshot.arrays.size()));
    for (const auto& a : snapshot.arrays) {
        if (shape_numel(a.shape) != a.data.size())
            throw ShapeError("snapshot array '" + a.name + "' has inconsistent shape");
        put_u32(out, static_cast<std::uint32_t>(a.name.size()));
        out.insert(out.end(), a.name.begin(), a.name.end());
        put_u32(out, static_cast<std::uint32_t>(a.shape.size()));
        for (auto d : a.shape) put_u32(out, static_cast<std::uint32_t>(d));
        for (float v : a.data) put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
    return out;
}

WeightSnapshot decode_snapshot(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
    Reader in(bytes, origin);
    if (in.str(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) in.fail("bad magic");
    const auto version = in.u32();
    if (version != WeightSnapshot::kVersion) in.fail("unsupported format version " + std::to_string(version));
    WeightSnapshot snapshot;
    const auto count = in.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedArray a;
        a.name = in.str(in.u32());
        const auto ndim = in.u32();
        if (ndim > 8) in.fail("array '" + a.name + "' has too many dimensions");
        for (std::uint32_t d = 0; d < ndim; ++d) a.shape.push_back(in.u32());
        const auto n = shape_numel(a.shape);
        if (n > bytes.size()) in.fail("array '" + a.name + "' is larger than the file");
        a.data.resize(n);
        for (auto& v : a.data) v = std::bit_cast<float>(in.u32());
        snapshot.arrays.push_back(std::move(a));
    }
    if (!in.done()) in.fail("trailing bytes");
    return snapshot;
}

void write_snapshot(const std::string& path, const WeightSnapshot& snapshot) {
    const auto bytes = encode_snapshot(snapshot);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError(path, "cannot open for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError(path, "write failed");
}

WeightSnapshot read_snapshot(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError(path, "cannot open for reading");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_snapshot(bytes, path);
}

void append_network(WeightSnapshot& snapshot, const Network<float>& net, const std::string& prefix) {
    const auto add = [&](const std::string& name, const Tensor<float>& t) {
        snapshot.arrays.push_back({prefix + name, t.shape(), std::vector<float>(t.data().begin(), t.data().end())});
    };
    add("noise", net.noise());
    for (const auto& p : net.parameters()) add(p.name, p.value);
}

void restore_network(const WeightSnapshot& snapshot, Network<float>& net, const std::string& prefix) {
    auto params = net.parameter_tensors();
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& name = net.parameters()[i].name;
        const auto* a = snapshot.find(prefix + name);
        if (!a) throw ConfigError("snapshot lacks parameter '" + prefix + name + "'");
        if (a->shape != params[i].shape())
            throw ConfigError("snapshot parameter '" + prefix + name + "' has shape " + shape_str(a->shape) +
                              ", network expects " + shape_str(params[i].shape()));
        std::copy(a->data.begin(), a->data.end(), params[i].mutable_data().begin());
    }
    if (const auto* noise = snapshot.find(prefix + "noise")) {
        if (noise->shape != net.noise().shape())
            throw ConfigError("snapshot noise '" + prefix + "noise' has shape " + shape_str(noise->shape) +
                              ", network expects " + shape_str(net.noise().shape()));
        net.set_noise(Tensor<float>(noise->shape, noise->data));
    }
}

} // namespace dipmatte
