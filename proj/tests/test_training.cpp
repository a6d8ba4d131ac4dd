#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "rrelu/init.hpp"
#include "rrelu/training.hpp"

using namespace rrelu;

namespace {

Dataset blobs_small() { return synthetic_blobs(128, 1, 2, 2, 3, 3.0f, 11); }

Network fresh_net(std::uint64_t seed = 5) {
    auto net = Network::build(build_fcnn(4, {8}, 3, "rrelu"));
    init_type1(net, seed);
    return net;
}

bool params_bit_identical(const Network& a, const Network& b,
                          const std::string& suffix = "") {
    for (const auto& [name, t] : a.params) {
        if (!suffix.empty() && !name.ends_with(suffix)) continue;
        const auto& o = b.params.at(name);
        if (!t.same_shape(o)) return false;
        if (std::memcmp(t.ptr(), o.ptr(), t.size() * sizeof(float)) != 0) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("schedule_lr: constant") {
    SchedulerCfg s;
    for (int e = 0; e < 5; ++e) CHECK(schedule_lr(s, 0.5f, e, 5) == 0.5f);
}

TEST_CASE("schedule_lr: multistep decays at each milestone") {
    SchedulerCfg s;
    s.kind = SchedulerCfg::Kind::Multistep;
    s.milestones = {2, 4};
    s.decay = 0.1f;
    CHECK(schedule_lr(s, 1.0f, 0, 6) == doctest::Approx(1.0f));
    CHECK(schedule_lr(s, 1.0f, 1, 6) == doctest::Approx(1.0f));
    CHECK(schedule_lr(s, 1.0f, 2, 6) == doctest::Approx(0.1f));
    CHECK(schedule_lr(s, 1.0f, 3, 6) == doctest::Approx(0.1f));
    CHECK(schedule_lr(s, 1.0f, 4, 6) == doctest::Approx(0.01f));
    CHECK(schedule_lr(s, 1.0f, 5, 6) == doctest::Approx(0.01f));
}

TEST_CASE("schedule_lr: cosine half-period shape") {
    SchedulerCfg s;
    s.kind = SchedulerCfg::Kind::Cosine;
    s.lr_min = 0.01f;
    const float base = 1.0f;
    CHECK(schedule_lr(s, base, 0, 10) == doctest::Approx(base));
    CHECK(schedule_lr(s, base, 5, 10) == doctest::Approx(0.5f * (base + s.lr_min)));
    CHECK(schedule_lr(s, base, 10, 10) == doctest::Approx(s.lr_min));
    // strictly decreasing across the run
    float prev = schedule_lr(s, base, 0, 10);
    for (int e = 1; e <= 10; ++e) {
        const float cur = schedule_lr(s, base, e, 10);
        CHECK(cur < prev);
        prev = cur;
    }
}

TEST_CASE("training is deterministic per seed") {
    const auto data = blobs_small();
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 32;
    cfg.opt.kind = OptimizerCfg::Kind::Adam;
    cfg.opt.lr = 1e-2f;
    cfg.seed = 7;

    auto a = fresh_net();
    auto b = fresh_net();
    const auto log_a = train(a, data, nullptr, cfg);
    const auto log_b = train(b, data, nullptr, cfg);
    CHECK(params_bit_identical(a, b));
    REQUIRE(log_a.records.size() == log_b.records.size());
    for (std::size_t i = 0; i < log_a.records.size(); ++i)
        CHECK(log_a.records[i].train_loss == log_b.records[i].train_loss);

    auto c = fresh_net();
    TrainConfig cfg2 = cfg;
    cfg2.seed = 8;
    train(c, data, nullptr, cfg2);
    CHECK(!params_bit_identical(a, c));
}

TEST_CASE("adam training fits separable blobs") {
    const auto data = blobs_small();
    auto net = fresh_net();
    TrainConfig cfg;
    cfg.epochs = 30;
    cfg.batch_size = 32;
    cfg.opt.kind = OptimizerCfg::Kind::Adam;
    cfg.opt.lr = 1e-2f;
    const auto log = train(net, data, &data, cfg);
    CHECK(evaluate_accuracy(net, data) >= 0.95f);
    CHECK(log.records.back().train_loss < log.records.front().train_loss);
    CHECK(std::isfinite(log.records.back().test_acc));
}

TEST_CASE("sgd-momentum training also learns") {
    const auto data = blobs_small();
    auto net = fresh_net();
    TrainConfig cfg;
    cfg.epochs = 30;
    cfg.batch_size = 32;
    cfg.opt.kind = OptimizerCfg::Kind::SgdMomentum;
    cfg.opt.lr = 0.05f;
    train(net, data, nullptr, cfg);
    CHECK(evaluate_accuracy(net, data) >= 0.9f);
}

TEST_CASE("slopes-only training leaves weights bit-identical") {
    const auto data = blobs_small();
    auto net = fresh_net();
    const auto before = net;
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 32;
    cfg.opt.kind = OptimizerCfg::Kind::Adam;
    cfg.opt.lr = 1e-2f;
    train_slopes_only(net, data, nullptr, cfg);
    CHECK(params_bit_identical(net, before, ".W"));
    CHECK(params_bit_identical(net, before, ".bias"));
    CHECK(!params_bit_identical(net, before, ".slopes"));
}

TEST_CASE("slopes-only training on a slope-free model is a contract violation") {
    const auto data = blobs_small();
    auto net = Network::build(build_fcnn(4, {8}, 3, "relu"));
    init_type1(net, 5);
    TrainConfig cfg;
    cfg.epochs = 1;
    CHECK_THROWS_AS(train_slopes_only(net, data, nullptr, cfg), ContractError);
}

TEST_CASE("weight decay touches only the weight matrices") {
    const auto full = blobs_small();
    const auto data = take(full, 32);  // single batch -> single optimizer step
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 32;
    cfg.opt.kind = OptimizerCfg::Kind::SgdMomentum;
    cfg.opt.lr = 0.05f;

    auto plain = fresh_net();
    auto decayed = fresh_net();
    train(plain, data, nullptr, cfg);
    cfg.opt.weight_decay = 1e-2f;
    train(decayed, data, nullptr, cfg);

    // after one identical step, only the decay term can differ
    CHECK(!params_bit_identical(plain, decayed, ".W"));
    CHECK(params_bit_identical(plain, decayed, ".bias"));
    CHECK(params_bit_identical(plain, decayed, ".slopes"));
}

TEST_CASE("divergence raises instead of silently producing NaN") {
    const auto data = blobs_small();
    auto net = fresh_net();
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.batch_size = 32;
    cfg.opt.kind = OptimizerCfg::Kind::SgdMomentum;
    cfg.opt.lr = 1e30f;
    CHECK_THROWS_AS(train(net, data, nullptr, cfg), DivergenceError);
}

TEST_CASE("run log CSV has one row per epoch") {
    const auto data = blobs_small();
    auto net = fresh_net();
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 64;
    const auto log = train(net, data, &data, cfg);
    REQUIRE(log.records.size() == 3);

    const auto path = std::filesystem::temp_directory_path() / "rrelu-runlog-test.csv";
    log.write_csv(path.string());
    std::ifstream in(path);
    std::string line;
    std::size_t rows = 0;
    REQUIRE(std::getline(in, line));  // header
    CHECK(line.find("epoch") != std::string::npos);
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 3);
    std::filesystem::remove(path);
}

TEST_CASE("batch-norm statistics still update during slopes-only training") {
    const auto data = synthetic_blobs(64, 3, 8, 8, 3, 3.0f, 13);
    auto net = Network::build(build_resnet(1, {4, 8, 8}, 3, "rrelu"));
    init_type1(net, 6);
    const auto rm_before = net.buffers.at("stem.bn.running_mean");
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 32;
    cfg.opt.lr = 1e-3f;
    train_slopes_only(net, data, nullptr, cfg);
    const auto& rm_after = net.buffers.at("stem.bn.running_mean");
    bool changed = false;
    for (std::size_t i = 0; i < rm_after.size(); ++i)
        if (rm_after[i] != rm_before[i]) changed = true;
    CHECK(changed);
}
