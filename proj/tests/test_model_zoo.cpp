#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "rrelu/error.hpp"
#include "rrelu/model.hpp"
#include "test_util.hpp"

using namespace rrelu;

namespace {

std::size_t total_slopes(const Network& net) {
    std::size_t n = 0;
    for (const auto& name : net.rrelu_layer_names())
        n += net.params.at(name + ".slopes").size();
    return n;
}

}  // namespace

TEST_CASE("fcnn-784-500-10 parameter counts") {
    const auto relu = Network::build(build_named_model("fcnn-784-500-10", 10, "relu"));
    // 784*500 + 500*10 + 10 output biases
    CHECK(relu.param_count() == 397010);
    CHECK(!relu.has_rrelu());

    const auto rr = Network::build(build_named_model("fcnn-784-500-10", 10, "rrelu"));
    CHECK(rr.param_count() == 397510);  // + one slope per hidden unit
    CHECK(total_slopes(rr) == 500);
    CHECK(count_residual_units(rr.spec) == 0);
}

TEST_CASE("resnet20 parameter counts and unit count") {
    const auto relu = Network::build(build_named_model("resnet20", 10, "relu"));
    CHECK(relu.param_count() == 269722);
    CHECK(count_residual_units(relu.spec) == 9);

    const auto rr = Network::build(build_named_model("resnet20", 10, "rrelu"));
    // two activations per unit, 3 units per stage at widths 16/32/64
    CHECK(total_slopes(rr) == 672);
    CHECK(rr.param_count() == 269722 + 672);
}

TEST_CASE("resnet56 slope count: unit activations only, stem excluded") {
    const auto rr = Network::build(build_named_model("resnet56", 10, "rrelu"));
    CHECK(count_residual_units(rr.spec) == 27);
    CHECK(total_slopes(rr) == 2016);  // 2 * 9 * (16 + 32 + 64)
    // the stem activation stays a plain relu
    bool stem_act_found = false;
    for (const auto& L : rr.spec.layers)
        if (L.name == "stem.act") {
            stem_act_found = true;
            CHECK(L.kind == LayerKind::ActReLU);
        }
    CHECK(stem_act_found);
}

TEST_CASE("wrn-16-4 parameter counts") {
    const auto relu = Network::build(build_named_model("wrn-16-4", 10, "relu"));
    CHECK(relu.param_count() == 2706906);
    CHECK(count_residual_units(relu.spec) == 6);

    const auto rr = Network::build(build_named_model("wrn-16-4", 10, "rrelu"));
    CHECK(total_slopes(rr) == 1792);  // 2 units * 2 acts * (64 + 128 + 256)
}

TEST_CASE("wrn with widen factor 1 is the plain residual net of the same depth") {
    const auto wrn = build_wrn(16, 1, 10, "rrelu");
    const auto res = build_resnet(2, {16, 32, 64}, 10, "rrelu");
    CHECK(spec_to_json(wrn) == spec_to_json(res));
}

TEST_CASE("model name parsing rejects malformed names") {
    CHECK_THROWS_AS(build_named_model("resnet21", 10, "relu"), InputError);
    CHECK_THROWS_AS(build_named_model("wrn-15-4", 10, "relu"), InputError);
    CHECK_THROWS_AS(build_named_model("fcnn-784", 10, "relu"), InputError);
    CHECK_THROWS_AS(build_named_model("alexnet", 10, "relu"), InputError);
    CHECK_THROWS_AS(build_fcnn(784, {500}, 10, "gelu"), InputError);
}

TEST_CASE("spec JSON round trip is lossless") {
    for (const char* name : {"fcnn-784-500-10", "resnet20", "wrn-16-4"}) {
        const auto spec = build_named_model(name, 10, "rrelu");
        const auto round = spec_from_json(spec_to_json(spec));
        CHECK(spec_to_json(round) == spec_to_json(spec));
        CHECK(round.layers.size() == spec.layers.size());
        CHECK(round.activation == spec.activation);
        CHECK(round.input_shape == spec.input_shape);
    }
    CHECK_THROWS_AS(spec_from_json("{not json"), std::exception);
}

TEST_CASE("forward pass output shapes") {
    std::mt19937_64 rng(31);

    auto fcnn = Network::build(build_named_model("fcnn-784-500-10", 10, "rrelu"));
    const auto y1 = fcnn.forward_eval(testutil::random_tensor<float>({3, 784}, rng));
    CHECK(y1.shape == std::vector<std::size_t>{3, 10});

    auto cnn = Network::build(build_resnet(2, {8, 16, 32}, 10, "rrelu"));
    CHECK(cnn.spec.input_shape == std::vector<std::size_t>{3, 32, 32});
    const auto y2 = cnn.forward_eval(testutil::random_tensor<float>({2, 3, 32, 32}, rng));
    CHECK(y2.shape == std::vector<std::size_t>{2, 10});
}

TEST_CASE("eval forward and autodiff forward agree in eval mode") {
    std::mt19937_64 rng(32);
    auto net = Network::build(build_resnet(1, {4, 8, 8}, 5, "rrelu"));
    // non-trivial parameters
    for (auto& [name, t] : net.params)
        for (auto& v : t.data) v = std::uniform_real_distribution<float>(-0.3f, 0.3f)(rng);
    const auto x = testutil::random_tensor<float>({2, 3, 8, 8}, rng);
    const auto y_eval = net.forward_eval(x);
    auto g = net.forward_ad(x, /*train_mode=*/false, false, false);
    REQUIRE(g.logits->value.same_shape(y_eval));
    for (std::size_t i = 0; i < y_eval.size(); ++i) CHECK(g.logits->value[i] == y_eval[i]);
}

TEST_CASE("train-mode forward updates batch-norm running statistics") {
    std::mt19937_64 rng(33);
    auto net = Network::build(build_resnet(1, {4, 8, 8}, 5, "rrelu"));
    // non-zero stem weights so the batch mean differs from the zero-initialized
    // running mean
    for (auto& [name, t] : net.params)
        for (auto& v : t.data) v = std::uniform_real_distribution<float>(0.1f, 0.3f)(rng);
    const auto rm_before = net.buffers.at("stem.bn.running_mean");
    const auto x = testutil::random_tensor<float>({4, 3, 8, 8}, rng);
    (void)net.forward_ad(x, /*train_mode=*/true, true, true);
    const auto& rm_after = net.buffers.at("stem.bn.running_mean");
    bool changed = false;
    for (std::size_t i = 0; i < rm_after.size(); ++i)
        if (rm_after[i] != rm_before[i]) changed = true;
    CHECK(changed);
}

TEST_CASE("input shape mismatches are rejected") {
    auto fcnn = Network::build(build_named_model("fcnn-784-500-10", 10, "rrelu"));
    CHECK_THROWS_AS(fcnn.forward_eval(Tensorf({2, 100})), DimensionError);
    auto cnn = Network::build(build_resnet(1, {4, 8, 8}, 5, "rrelu"));
    CHECK_THROWS_AS(cnn.forward_eval(Tensorf({2, 4, 32, 32})), DimensionError);
}
