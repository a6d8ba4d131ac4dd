#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "rrelu/error.hpp"
#include "rrelu/init.hpp"
#include "rrelu/model.hpp"
#include "test_util.hpp"

using namespace rrelu;

TEST_CASE("truncated mixture: every sample in band, signs balanced") {
    std::mt19937_64 rng(123);
    const std::size_t n = 100000;
    std::size_t positive = 0;
    double sum_abs = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const float v = sample_truncated_gmm(rng);
        const double a = std::abs(static_cast<double>(v));
        REQUIRE(a >= kSlopeBandLo);
        REQUIRE(a <= kSlopeBandHi);
        if (v > 0) ++positive;
        sum_abs += a;
    }
    const double frac = static_cast<double>(positive) / static_cast<double>(n);
    CHECK(frac > 0.48);
    CHECK(frac < 0.52);
    // mean magnitude sits strictly inside the band
    CHECK(sum_abs / static_cast<double>(n) > kSlopeBandLo);
    CHECK(sum_abs / static_cast<double>(n) < kSlopeBandHi);
}

TEST_CASE("kaiming_fill uses std sqrt(2/fan_in)") {
    std::mt19937_64 rng(9);
    Tensorf w({200, 500});
    kaiming_fill(w, 200, rng);
    double mean = 0, var = 0;
    for (float v : w.data) mean += v;
    mean /= static_cast<double>(w.size());
    for (float v : w.data) var += (v - mean) * (v - mean);
    var /= static_cast<double>(w.size());
    CHECK(mean == doctest::Approx(0.0).epsilon(1).scale(0.01));
    CHECK(var == doctest::Approx(2.0 / 200.0).epsilon(0.05));
}

TEST_CASE("type-I init is deterministic per seed and fills all groups") {
    auto a = Network::build(build_fcnn(20, {16, 8}, 4, "rrelu"));
    auto b = Network::build(build_fcnn(20, {16, 8}, 4, "rrelu"));
    auto c = Network::build(build_fcnn(20, {16, 8}, 4, "rrelu"));
    init_type1(a, 7);
    init_type1(b, 7);
    init_type1(c, 8);
    for (const auto& [name, t] : a.params) {
        CHECK(std::memcmp(t.ptr(), b.params.at(name).ptr(), t.size() * sizeof(float)) == 0);
    }
    bool any_differ = false;
    for (const auto& [name, t] : a.params)
        if (std::memcmp(t.ptr(), c.params.at(name).ptr(), t.size() * sizeof(float)) != 0)
            any_differ = true;
    CHECK(any_differ);
    // all slopes fall in the mixture band
    for (const auto& name : a.rrelu_layer_names()) {
        const auto& s = a.params.at(name + ".slopes");
        for (float v : s.data) {
            CHECK(std::abs(v) >= static_cast<float>(kSlopeBandLo) * 0.999f);
            CHECK(std::abs(v) <= static_cast<float>(kSlopeBandHi) * 1.001f);
        }
    }
    // weights are non-trivial
    for (const auto& [name, t] : a.params) {
        if (name.ends_with(".W")) {
            float mx = 0;
            for (float v : t.data) mx = std::max(mx, std::abs(v));
            CHECK(mx > 0.0f);
        }
    }
}

TEST_CASE("type-I init on a CNN seeds batch norm to the identity") {
    auto net = Network::build(build_resnet(1, {8, 16, 16}, 4, "rrelu"));
    init_type1(net, 3);
    for (const auto& [name, t] : net.params) {
        if (name.ends_with(".gamma"))
            for (float v : t.data) CHECK(v == 1.0f);
        if (name.ends_with(".beta"))
            for (float v : t.data) CHECK(v == 0.0f);
    }
    for (const auto& [name, t] : net.buffers) {
        if (name.ends_with(".running_mean"))
            for (float v : t.data) CHECK(v == 0.0f);
        if (name.ends_with(".running_var"))
            for (float v : t.data) CHECK(v == 1.0f);
    }
}

TEST_CASE("type-II init reproduces the ReLU donor bit for bit") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const std::uint64_t seed = rng();
        // alternate between an FCNN and a small CNN donor
        ModelSpec relu_spec, rrelu_spec;
        Tensorf x;
        if (trial % 2 == 0) {
            relu_spec = build_fcnn(12, {10, 6}, 3, "relu");
            rrelu_spec = build_fcnn(12, {10, 6}, 3, "rrelu");
            x = testutil::random_tensor<float>({4, 12}, rng);
        } else {
            relu_spec = build_resnet(1, {4, 8, 8}, 3, "relu");
            rrelu_spec = build_resnet(1, {4, 8, 8}, 3, "rrelu");
            x = testutil::random_tensor<float>({2, 3, 8, 8}, rng);
        }
        auto donor = Network::build(relu_spec);
        init_type1(donor, seed);
        // give the donor non-trivial batch-norm state
        for (auto& [name, t] : donor.buffers) {
            std::mt19937_64 r2(seed ^ 0x9e3779b97f4a7c15ull);
            std::uniform_real_distribution<float> d(0.1f, 1.0f);
            for (auto& v : t.data) v = d(r2);
        }

        auto adopted = Network::build(rrelu_spec);
        init_type2(adopted, donor);
        for (const auto& name : adopted.rrelu_layer_names())
            for (float v : adopted.params.at(name + ".slopes").data) CHECK(v == 1.0f);

        const auto ya = adopted.forward_eval(x);
        const auto yd = donor.forward_eval(x);
        REQUIRE(ya.same_shape(yd));
        for (std::size_t i = 0; i < ya.size(); ++i) CHECK(ya[i] == yd[i]);
    }
}

TEST_CASE("type-II init rejects donors with a different architecture") {
    auto net = Network::build(build_fcnn(12, {10, 6}, 3, "rrelu"));
    auto donor_wrong_width = Network::build(build_fcnn(12, {11, 6}, 3, "relu"));
    auto donor_wrong_depth = Network::build(build_fcnn(12, {10}, 3, "relu"));
    CHECK_THROWS_AS(init_type2(net, donor_wrong_width), CheckpointError);
    CHECK_THROWS_AS(init_type2(net, donor_wrong_depth), CheckpointError);
}
