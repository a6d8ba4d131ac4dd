#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "rrelu/init.hpp"
#include "rrelu/pruning.hpp"

using namespace rrelu;

namespace {

std::size_t weight_param_count(const Network& net) {
    std::size_t n = 0;
    for (const auto& [name, t] : net.params)
        if (name.ends_with(".W")) n += t.size();
    return n;
}

void randomize(Network& net, std::uint64_t seed) {
    init_type1(net, seed);
    std::mt19937_64 rng(seed ^ 0xabcdef12345ull);
    std::uniform_real_distribution<float> stat(-1.0f, 1.0f);
    std::uniform_real_distribution<float> var(0.5f, 2.0f);
    for (auto& [name, t] : net.buffers)
        for (auto& v : t.data)
            v = name.ends_with(".running_var") ? var(rng) : stat(rng);
    // spread the slopes over [-1, 1] so thresholds bite
    std::uniform_real_distribution<float> slope(-1.0f, 1.0f);
    for (const auto& lname : net.rrelu_layer_names())
        for (auto& v : net.params.at(lname + ".slopes").data) v = slope(rng);
}

}  // namespace

TEST_CASE("derive_mask uses a strict threshold: boundary slopes survive") {
    auto net = Network::build(build_fcnn(4, {3}, 2, "rrelu"));
    auto& s = net.params.at("act0.slopes");
    s[0] = 0.5f;
    s[1] = -0.5f;
    s[2] = 0.2f;
    const auto mask = derive_mask(net, 0.5f);
    REQUIRE(mask.masks.count("act0") == 1);
    CHECK(mask.masks.at("act0") == std::vector<std::uint8_t>{0, 0, 1});
    CHECK(mask.pruned_count() == 1);
    CHECK(mask.total_count() == 3);
}

TEST_CASE("masks are monotone in gamma") {
    auto net = Network::build(build_resnet(2, {4, 8, 8}, 3, "rrelu"));
    randomize(net, 17);
    const auto lo = derive_mask(net, 0.3f);
    const auto hi = derive_mask(net, 0.7f);
    for (const auto& [name, m_lo] : lo.masks) {
        const auto& m_hi = hi.masks.at(name);
        for (std::size_t i = 0; i < m_lo.size(); ++i)
            if (m_lo[i]) CHECK(m_hi[i] == 1);
    }
    CHECK(hi.pruned_count() >= lo.pruned_count());
}

TEST_CASE("mask JSON round trip") {
    PruneMask m;
    m.gamma = 0.25f;
    m.masks["act0"] = {0, 1, 1, 0};
    m.masks["s0u0.act2"] = {1, 1};
    const auto round = PruneMask::from_json(m.to_json());
    CHECK(round.gamma == m.gamma);
    CHECK(round.masks == m.masks);
    CHECK_THROWS_AS(PruneMask::from_json("{\"gamma\": 1}"), ParseError);
    CHECK_THROWS_AS(PruneMask::from_json("nonsense"), ParseError);
}

TEST_CASE("validate_mask rejects structural violations") {
    auto net = Network::build(build_fcnn(4, {3, 2}, 2, "rrelu"));

    PruneMask full;
    full.masks["act0"] = {1, 1, 1};  // empties a layer with no skip
    CHECK_THROWS_AS(validate_mask(net, full), StructuralError);

    PruneMask wrong_len;
    wrong_len.masks["act0"] = {1, 0};
    CHECK_THROWS_AS(validate_mask(net, wrong_len), StructuralError);

    PruneMask unknown;
    unknown.masks["act9"] = {0, 0, 0};
    CHECK_THROWS_AS(validate_mask(net, unknown), StructuralError);

    PruneMask ok;
    ok.masks["act0"] = {1, 1, 0};
    ok.masks["act1"] = {0, 1};
    CHECK_NOTHROW(validate_mask(net, ok));

    // inside a residual unit the skip carries the slot, so a full mask is fine
    auto cnn = Network::build(build_resnet(1, {4, 4, 4}, 3, "rrelu"));
    PruneMask unit_full;
    unit_full.masks["s1u0.act2"] = std::vector<std::uint8_t>(4, 1);
    CHECK_NOTHROW(validate_mask(cnn, unit_full));
}

TEST_CASE("apply_mask_zero zeros exactly the masked slopes") {
    auto net = Network::build(build_fcnn(4, {3}, 2, "rrelu"));
    auto& s = net.params.at("act0.slopes");
    s[0] = 0.9f;
    s[1] = 0.1f;
    s[2] = -0.2f;
    PruneMask m;
    m.masks["act0"] = {0, 1, 1};
    const auto zeroed = apply_mask_zero(net, m);
    CHECK(zeroed.params.at("act0.slopes")[0] == 0.9f);
    CHECK(zeroed.params.at("act0.slopes")[1] == 0.0f);
    CHECK(zeroed.params.at("act0.slopes")[2] == 0.0f);
    CHECK(net.params.at("act0.slopes")[1] == 0.1f);  // input untouched
}

TEST_CASE("compacting 24 hidden units of fcnn-784-500-10 removes 19056 weights") {
    auto net = Network::build(build_named_model("fcnn-784-500-10", 10, "rrelu"));
    randomize(net, 23);
    PruneMask m;
    std::vector<std::uint8_t> flags(500, 0);
    for (std::size_t i = 0; i < 24; ++i) flags[i * 7] = 1;  // scattered positions
    m.masks["act0"] = flags;
    const auto small = compact(net, m);
    CHECK(weight_param_count(net) - weight_param_count(small) == 19056);
    CHECK(small.params.at("act0.slopes").size() == 476);
    CHECK(small.params.at("fc0.W").shape == std::vector<std::size_t>{784, 476});
    CHECK(small.params.at("fc_out.W").shape == std::vector<std::size_t>{476, 10});
    // bias of the output layer is untouched
    CHECK(small.params.at("fc_out.bias").size() == 10);

    const auto rep = verify_equivalence(apply_mask_zero(net, m), small, 20, 1e-5, 1);
    CHECK(rep.pass);
}

TEST_CASE("compact equals zeroing on random model/mask pairs") {
    std::mt19937_64 rng(29);
    int fully_masked_units_seen = 0;
    for (int trial = 0; trial < 12; ++trial) {
        Network net;
        bool is_cnn = trial % 3 != 0;
        if (is_cnn) {
            net = trial % 2 == 0 ? Network::build(build_resnet(2, {4, 8, 8}, 3, "rrelu"))
                                 : Network::build(build_resnet(1, {6, 6, 6}, 4, "rrelu"));
        } else {
            net = Network::build(build_fcnn(10, {12, 9}, 4, "rrelu"));
        }
        randomize(net, rng());
        std::uniform_real_distribution<float> g(0.2f, 0.8f);
        const float gamma = g(rng);

        if (is_cnn && trial % 2 == 0) {
            // force one unit's final activation fully below the threshold
            for (auto& v : net.params.at("s1u0.act2.slopes").data) v = gamma * 0.01f;
            ++fully_masked_units_seen;
        }
        auto mask = derive_mask(net, gamma);
        if (!is_cnn) {
            // keep feed-forward layers non-empty
            for (auto& [name, flags] : mask.masks)
                if (std::count(flags.begin(), flags.end(), 1) ==
                    static_cast<long>(flags.size()))
                    flags[0] = 0;
        }
        const auto zeroed = apply_mask_zero(net, mask);
        const auto small = compact(net, mask);
        const auto rep = verify_equivalence(zeroed, small, 8, 1e-5, rng());
        INFO("trial ", trial, " gamma=", gamma, " diff=", rep.max_abs_diff);
        CHECK(rep.pass);
        // the compacted net really is smaller whenever anything was pruned
        if (mask.pruned_count() > 0)
            CHECK(small.param_count() < net.param_count());
    }
    CHECK(fully_masked_units_seen > 0);
}

TEST_CASE("a removed stage-transition unit keeps its downsampling skip") {
    auto net = Network::build(build_resnet(1, {4, 8, 8}, 3, "rrelu"));
    randomize(net, 31);
    PruneMask m;
    m.masks["s1u0.act2"] = std::vector<std::uint8_t>(8, 1);  // stride-2 unit
    const auto small = compact(net, m);

    bool has_pad = false, has_unit_conv = false;
    for (const auto& L : small.spec.layers) {
        if (L.kind == LayerKind::DownsamplePad && L.name == "s1u0.save.skip") has_pad = true;
        if (L.name == "s1u0.conv1") has_unit_conv = true;
    }
    CHECK(has_pad);
    CHECK(!has_unit_conv);  // the unit's convs are gone entirely
    CHECK(verify_equivalence(apply_mask_zero(net, m), small, 10, 1e-5, 3).pass);
}

TEST_CASE("a removed same-shape unit vanishes without a replacement layer") {
    auto net = Network::build(build_resnet(2, {4, 4, 4}, 3, "rrelu"));
    randomize(net, 37);
    PruneMask m;
    m.masks["s0u1.act2"] = std::vector<std::uint8_t>(4, 1);  // stride-1, no widening
    const auto small = compact(net, m);
    for (const auto& L : small.spec.layers) {
        CHECK(L.name.rfind("s0u1.", 0) != 0);
    }
    CHECK(verify_equivalence(apply_mask_zero(net, m), small, 10, 1e-5, 5).pass);
}

TEST_CASE("compacting twice is rejected") {
    auto net = Network::build(build_resnet(1, {4, 8, 8}, 3, "rrelu"));
    randomize(net, 41);
    auto mask = derive_mask(net, 0.6f);
    const auto small = compact(net, mask);
    if (small.spec.layers.size() != net.spec.layers.size() || small.has_rrelu()) {
        const auto again = derive_mask(small, 0.6f);
        bool has_scatter = false;
        for (const auto& L : small.spec.layers)
            if (L.kind == LayerKind::ChannelScatter) has_scatter = true;
        if (has_scatter) CHECK_THROWS_AS(compact(small, again), ContractError);
    }
    // direct check with a guaranteed scatter
    PruneMask m;
    m.masks["s0u0.act2"] = {1, 0, 0, 1};
    const auto scattered = compact(net, m);
    bool has_scatter = false;
    for (const auto& L : scattered.spec.layers)
        if (L.kind == LayerKind::ChannelScatter) has_scatter = true;
    REQUIRE(has_scatter);
    CHECK_THROWS_AS(compact(scattered, derive_mask(scattered, 0.1f)), ContractError);
}

TEST_CASE("select_gamma picks the largest harmless threshold") {
    auto net = Network::build(build_fcnn(4, {8}, 3, "rrelu"));
    std::mt19937_64 rng(43);
    std::uniform_real_distribution<float> d(-1.0f, 1.0f);
    for (auto& v : net.params.at("fc0.W").data) v = d(rng);
    // hidden units 4..7 feed zero rows of the output layer: pruning them
    // cannot change any logit
    auto& wout = net.params.at("fc_out.W");
    for (std::size_t i = 4; i < 8; ++i)
        for (std::size_t j = 0; j < 3; ++j) wout[i * 3 + j] = (i < 4) ? d(rng) : 0.0f;
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 3; ++j) wout[i * 3 + j] = d(rng);
    auto& s = net.params.at("act0.slopes");
    s = Tensorf({8}, {1.0f, -1.0f, 1.0f, -1.0f, 0.01f, -0.02f, 0.03f, -0.04f});

    const auto sel = synthetic_blobs(200, 1, 2, 2, 3, 3.0f, 7);
    const auto res = select_gamma(net, sel, 0.2);
    CHECK(res.gamma == 1.0f);
    CHECK(res.chosen_accuracy == doctest::Approx(res.baseline_accuracy));
    CHECK(res.table.size() == 6);  // gamma=0 row + 5 distinct |slope| values
    CHECK(res.table.front().gamma == 0.0f);
    const auto chosen_mask = derive_mask(net, res.gamma);
    CHECK(chosen_mask.pruned_count() == 4);
}

TEST_CASE("select_gamma stops at the first structurally invalid threshold") {
    auto net = Network::build(build_fcnn(4, {3, 2}, 2, "rrelu"));
    std::mt19937_64 rng(47);
    std::uniform_real_distribution<float> d(-0.5f, 0.5f);
    for (auto& v : net.params.at("fc0.W").data) v = d(rng);
    for (auto& v : net.params.at("fc1.W").data) v = d(rng);
    for (auto& v : net.params.at("fc_out.W").data) v = d(rng);
    net.params.at("act0.slopes") = Tensorf({3}, {0.1f, 0.1f, 0.1f});
    net.params.at("act1.slopes") = Tensorf({2}, {0.5f, 0.6f});

    const auto sel = synthetic_blobs(100, 1, 2, 2, 2, 3.0f, 9);
    // generous tolerance: the stop must come from structure, not accuracy
    const auto res = select_gamma(net, sel, 100.0);
    CHECK(res.gamma == 0.1f);  // 0.5 would empty the first hidden layer
    REQUIRE(!res.table.empty());
    CHECK(res.table.back().gamma == 0.5f);
    CHECK(!res.table.back().structurally_valid);
    // 0.6 was never evaluated
    for (const auto& c : res.table) CHECK(c.gamma != 0.6f);
}

TEST_CASE("select_gamma rejects an empty selection split") {
    auto net = Network::build(build_fcnn(4, {3}, 2, "rrelu"));
    Dataset empty;
    empty.images = Tensorf({0, 1, 2, 2});
    empty.num_classes = 2;
    CHECK_THROWS_AS(select_gamma(net, empty, 0.2), InputError);
}
