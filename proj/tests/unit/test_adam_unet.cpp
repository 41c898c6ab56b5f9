#include "oracles.hpp"

#include "dipmatte/adam.hpp"
#include "dipmatte/ops.hpp"
#include "dipmatte/snapshot.hpp"
#include "dipmatte/unet.hpp"

#include <doctest.h>

#include <cstdio>
#include <filesystem>

using namespace dipmatte;

namespace {

UNetConfig small_config(std::vector<HeadSpec> heads = {{"rgb", 3}}) {
    UNetConfig c;
    c.depth = 1;
    c.channels = {8};
    c.skip_channels = 2;
    c.input_noise_channels = 4;
    c.output_heads = std::move(heads);
    return c;
}

template <typename T>
std::vector<T> flat(const Tensor<T>& t) {
    const auto d = t.data();
    return {d.begin(), d.end()};
}

} // namespace

TEST_CASE("adam: first step with unit gradient moves by lr / (1 + eps)") {
    Tensor<double> x({1}, {0.5}, true);
    x.grad_buffer()[0] = 1.0;
    AdamState<double> state;
    std::vector<Tensor<double>> params{x};
    adam_step<double>(params, state, {});
    CHECK(x.item() - 0.5 == doctest::Approx(-0.001 / (1 + 1e-8)).epsilon(1e-12));
    CHECK(x.item() - 0.5 == doctest::Approx(-0.000999999).epsilon(1e-6));
    CHECK(state.t == 1);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
    Tensor<float> a({3}, {1.0f, -2.0f, 3.5f}, true);
    Tensor<float> b({2}, {0.25f, 0.75f}, true); // no grad buffer at all
    a.grad_buffer();
    AdamState<float> state;
    std::vector<Tensor<float>> params{a, b};
    for (int i = 0; i < 5; ++i) adam_step<float>(params, state, {});
    CHECK(flat(a) == std::vector<float>{1.0f, -2.0f, 3.5f});
    CHECK(flat(b) == std::vector<float>{0.25f, 0.75f});
    CHECK(state.t == 5);
}

TEST_CASE("adam: ten steps on x^2 match the scalar reference") {
    Tensor<double> x({1}, {1.0}, true);
    AdamState<double> state;
    std::vector<Tensor<double>> params{x};
    oracle::ScalarAdam ref;
    double rx = 1.0;
    for (int i = 0; i < 10; ++i) {
        Tape<double> tape;
        tape.backward(ops::sum(tape, ops::square(tape, x)));
        adam_step<double>(params, state, {});
        x.clear_grad();
        rx = ref.step(rx, 2 * rx);
        CHECK(std::abs(x.item() - rx) <= 1e-12);
    }
}

TEST_CASE("adam: state that does not mirror the parameters is rejected") {
    Tensor<float> a({3}, {1, 2, 3}, true);
    AdamState<float> state;
    std::vector<Tensor<float>> one{a};
    adam_step<float>(one, state, {});
    std::vector<Tensor<float>> two{a, a};
    CHECK_THROWS_AS(adam_step<float>(two, state, {}), ShapeError);
    std::vector<Tensor<float>> other{Tensor<float>({4}, {1, 2, 3, 4}, true)};
    CHECK_THROWS_AS(adam_step<float>(other, state, {}), ShapeError);
    CHECK_THROWS_AS(adam_step<float>(one, state, {.lr = 0}), ConfigError);
}

TEST_CASE("unet: same seed gives bit-identical parameters and noise") {
    const auto a = build_unet<float>(small_config(), 16, 16, 42);
    const auto b = build_unet<float>(small_config(), 16, 16, 42);
    const auto c = build_unet<float>(small_config(), 16, 16, 43);
    CHECK(a.params_checksum() == b.params_checksum());
    CHECK(a.noise_checksum() == b.noise_checksum());
    CHECK(a.params_checksum() != c.params_checksum());
    CHECK(a.noise_checksum() != c.noise_checksum());
}

TEST_CASE("unet: depth 1, channels [8], rgb head on 16x16 gives 3x16x16 in (0,1)") {
    const auto net = build_unet<float>(small_config(), 16, 16, 1);
    Tape<float> tape;
    const auto out = net.forward(tape);
    REQUIRE(out.size() == 1);
    const auto& rgb = out.at("rgb");
    CHECK(rgb.shape() == Shape{3, 16, 16});
    for (float v : rgb.data()) CHECK((v > 0.0f && v < 1.0f));
}

TEST_CASE("unet: two-head network returns exactly image and alpha at full resolution") {
    UNetConfig c;
    c.output_heads = {{"image", 3}, {"alpha", 1}};
    for (auto [h, w] : {std::pair<std::size_t, std::size_t>{32, 32}, {37, 50}}) {
        const auto net = build_unet<float>(c, h, w, 3);
        CHECK(net.padded_height() % 16 == 0);
        CHECK(net.padded_width() % 16 == 0);
        Tape<float> tape(Tape<float>::Mode::inference);
        const auto out = net.forward(tape);
        REQUIRE(out.size() == 2);
        CHECK(out.at("image").shape() == Shape{3, h, w});
        CHECK(out.at("alpha").shape() == Shape{1, h, w});
        for (float v : out.at("alpha").data()) CHECK((v > 0.0f && v < 1.0f));
    }
}

TEST_CASE("unet: parameter count matches the layer-by-layer sum") {
    UNetConfig c;
    c.depth = 2;
    c.channels = {4, 8};
    c.skip_channels = 2;
    c.input_noise_channels = 3;
    c.output_heads = {{"rgb", 3}, {"a", 1}};
    // enc0: skip 1x1 3->2, down 3x3 3->4, conv 3x3 4->4
    // enc1: skip 1x1 4->2, down 3x3 4->8, conv 3x3 8->8
    // dec1: 3x3 (2+8)->8, 1x1 8->8; dec0: 3x3 (2+8)->4, 1x1 4->4
    // heads: 1x1 4->3 + 3 bias, 1x1 4->1 + 1 bias
    const std::size_t expected = 3 * 2 + 3 * 4 * 9 + 4 * 4 * 9 +  //
                                 4 * 2 + 4 * 8 * 9 + 8 * 8 * 9 +  //
                                 10 * 8 * 9 + 8 * 8 + 10 * 4 * 9 + 4 * 4 + //
                                 4 * 3 + 3 + 4 * 1 + 1;
    CHECK(expected == 2310);
    CHECK(unet_parameter_count(c) == expected);
    CHECK(build_unet<float>(c, 8, 8, 0).parameter_count() == expected);
}

TEST_CASE("unet: perturbing any parameter tensor changes the output") {
    const auto net = build_unet<double>(small_config(), 8, 8, 5);
    Tape<double> tape(Tape<double>::Mode::inference);
    const auto base = flat(net.forward(tape).at("rgb"));
    const auto handles = net.parameter_tensors();
    for (std::size_t k = 0; k < handles.size(); ++k) {
        Tensor<double> p = handles[k];
        auto d = p.mutable_data();
        const double saved = d[d.size() / 2];
        d[d.size() / 2] = saved + 0.05;
        Tape<double> probe(Tape<double>::Mode::inference);
        const auto moved = flat(net.forward(probe).at("rgb"));
        d[d.size() / 2] = saved;
        double diff = 0;
        for (std::size_t i = 0; i < base.size(); ++i) diff = std::max(diff, std::abs(moved[i] - base[i]));
        CHECK_MESSAGE(diff > 1e-9, net.parameters()[k].name);
    }
}

TEST_CASE("unet: copy_weights gives identical outputs and a stable checksum chain") {
    const auto src = build_unet<float>(small_config(), 16, 16, 7);
    auto mid = build_unet<float>(small_config(), 16, 16, 8);
    auto dst = build_unet<float>(small_config(), 16, 16, 9);
    copy_weights(src, mid);
    copy_weights(mid, dst);
    CHECK(mid.params_checksum() == src.params_checksum());
    CHECK(dst.params_checksum() == src.params_checksum());

    dst.set_noise(src.noise());
    Tape<float> t1(Tape<float>::Mode::inference), t2(Tape<float>::Mode::inference);
    CHECK(flat(src.forward(t1).at("rgb")) == flat(dst.forward(t2).at("rgb")));

    auto other = build_unet<float>(small_config({{"rgb", 1}}), 16, 16, 7);
    CHECK_THROWS_AS(copy_weights(src, other), ConfigError);
}

TEST_CASE("unet: invalid configs and images smaller than 2^depth are rejected") {
    UNetConfig c = small_config();
    c.channels = {8, 16};
    CHECK_THROWS_AS(build_unet<float>(c, 16, 16, 0), ConfigError);
    c = small_config({});
    CHECK_THROWS_AS(build_unet<float>(c, 16, 16, 0), ConfigError);
    c = small_config({{"rgb", 0}});
    CHECK_THROWS_AS(build_unet<float>(c, 16, 16, 0), ConfigError);

    UNetConfig deep;
    deep.output_heads = {{"rgb", 3}};
    try {
        build_unet<float>(deep, 8, 32, 0);
        FAIL("expected an error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("reduce the network depth") != std::string::npos);
    }
}

TEST_CASE("snapshot: encode/decode and file round trips restore a network exactly") {
    const auto net = build_unet<float>(small_config(), 16, 16, 11);
    WeightSnapshot snap;
    append_network(snap, net, "fg.");
    CHECK(snap.find("fg.noise") != nullptr);
    CHECK(snap.find("fg.enc0.down") != nullptr);
    CHECK(snap.find("fg.head.rgb.bias") != nullptr);

    const auto decoded = decode_snapshot(encode_snapshot(snap));
    REQUIRE(decoded.arrays.size() == snap.arrays.size());
    for (std::size_t i = 0; i < snap.arrays.size(); ++i) {
        CHECK(decoded.arrays[i].name == snap.arrays[i].name);
        CHECK(decoded.arrays[i].shape == snap.arrays[i].shape);
        CHECK(decoded.arrays[i].data == snap.arrays[i].data);
    }

    const auto path = (std::filesystem::temp_directory_path() / "dipmatte_snapshot_test.bin").string();
    write_snapshot(path, snap);
    const auto loaded = read_snapshot(path);
    std::filesystem::remove(path);

    auto fresh = build_unet<float>(small_config(), 16, 16, 99);
    restore_network(loaded, fresh, "fg.");
    CHECK(fresh.params_checksum() == net.params_checksum());
    CHECK(fresh.noise_checksum() == net.noise_checksum());
}

TEST_CASE("snapshot: header is little-endian magic + version") {
    WeightSnapshot snap;
    snap.arrays.push_back({"x", {2}, {1.0f, -2.0f}});
    const auto bytes = encode_snapshot(snap);
    CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "DIPMWTS1");
    CHECK(bytes[8] == 1);
    CHECK(bytes[9] == 0);
    CHECK(bytes[12] == 1); // array count
    // name_len(4) + "x" + ndim(4) + dim(4) + 2 floats
    CHECK(bytes.size() == 16 + 4 + 1 + 4 + 4 + 8);
}

TEST_CASE("snapshot: corrupt input and mismatched networks are reported") {
    WeightSnapshot snap;
    snap.arrays.push_back({"x", {2}, {1.0f, 2.0f}});
    auto bytes = encode_snapshot(snap);
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(decode_snapshot(bad_magic), IoError);
    auto truncated = bytes;
    truncated.resize(bytes.size() - 3);
    CHECK_THROWS_AS(decode_snapshot(truncated), IoError);
    auto version = bytes;
    version[8] = 9;
    CHECK_THROWS_AS(decode_snapshot(version), IoError);
    CHECK_THROWS_AS(read_snapshot("/nonexistent/dir/weights.bin"), IoError);

    const auto net = build_unet<float>(small_config(), 16, 16, 1);
    WeightSnapshot full;
    append_network(full, net, "image.");
    auto wider = build_unet<float>(small_config({{"rgb", 4}}), 16, 16, 1);
    CHECK_THROWS_AS(restore_network(full, wider, "image."), ConfigError);
    auto same = build_unet<float>(small_config(), 16, 16, 1);
    CHECK_THROWS_AS(restore_network(full, same, "fg."), ConfigError);
}
