#pragma once

// Minibatch training: SGD with momentum or Adam, multistep / cosine learning
// rate schedules, optional weight freezing (slopes-only fine-tuning), CSV run
// logs.  Deterministic for a given seed.

#include <cstdint>
#include <string>
#include <vector>

#include "rrelu/data.hpp"
#include "rrelu/model.hpp"

namespace rrelu {

struct OptimizerCfg {
    enum class Kind { SgdMomentum, Adam };
    Kind kind = Kind::SgdMomentum;
    float lr = 0.1f;
    float momentum = 0.9f;
    float beta1 = 0.9f, beta2 = 0.999f, eps = 1e-8f;
    float weight_decay = 0.0f;  // applied to weight matrices/filters only
};

struct SchedulerCfg {
    enum class Kind { Constant, Multistep, Cosine };
    Kind kind = Kind::Constant;
    std::vector<int> milestones;  // multistep
    float decay = 0.1f;           // multistep factor per milestone passed
    float lr_min = 0.0f;          // cosine floor
};

struct TrainConfig {
    int epochs = 1;
    int batch_size = 128;
    OptimizerCfg opt;
    SchedulerCfg sched;
    std::uint64_t seed = 0;
    bool freeze_weights = false;  // train slopes only (batch-norm statistics still update)
    bool augment = false;         // pad-crop-flip
};

float schedule_lr(const SchedulerCfg& sched, float base_lr, int epoch, int total_epochs);

struct EpochRecord {
    int epoch;
    float lr;
    float train_loss;
    float train_acc;
    float test_acc;  // NaN when no eval set given
};

struct RunLog {
    std::vector<EpochRecord> records;
    void write_csv(const std::string& path) const;
};

// Trains in place.  Throws DivergenceError when the loss goes non-finite.
// eval may be null (skips per-epoch test accuracy).
RunLog train(Network& net, const Dataset& train_set, const Dataset* eval_set,
             const TrainConfig& cfg);

// freeze_weights shortcut; throws ContractError when the model has no
// trainable slopes.
RunLog train_slopes_only(Network& net, const Dataset& train_set, const Dataset* eval_set,
                         TrainConfig cfg);

float evaluate_accuracy(const Network& net, const Dataset& d, std::size_t batch_size = 256);
float evaluate_loss(const Network& net, const Dataset& d, std::size_t batch_size = 256);

}  // namespace rrelu
