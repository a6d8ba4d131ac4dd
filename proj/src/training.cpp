#include "rrelu/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "rrelu/error.hpp"
#include "rrelu/kernels.hpp"
#include "rrelu/ops.hpp"

namespace rrelu {

float schedule_lr(const SchedulerCfg& sched, float base_lr, int epoch, int total_epochs) {
    switch (sched.kind) {
        case SchedulerCfg::Kind::Constant:
            return base_lr;
        case SchedulerCfg::Kind::Multistep: {
            float lr = base_lr;
            for (int m : sched.milestones)
                if (epoch >= m) lr *= sched.decay;
            return lr;
        }
        case SchedulerCfg::Kind::Cosine: {
            const double t = total_epochs > 0
                                 ? static_cast<double>(epoch) / static_cast<double>(total_epochs)
                                 : 0.0;
            return sched.lr_min + 0.5f * (base_lr - sched.lr_min) *
                                      static_cast<float>(1.0 + std::cos(t * 3.14159265358979323846));
        }
    }
    return base_lr;
}

void RunLog::write_csv(const std::string& path) const {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw InputError("run log: cannot open " + path);
    f << "epoch,lr,train_loss,train_acc,test_acc\n";
    for (const auto& r : records)
        f << r.epoch << "," << r.lr << "," << r.train_loss << "," << r.train_acc << ","
          << r.test_acc << "\n";
}

namespace {

bool is_slope_param(const std::string& name) {
    return name.size() > 7 && name.compare(name.size() - 7, 7, ".slopes") == 0;
}

bool is_weight_param(const std::string& name) {
    return name.size() > 2 && name.compare(name.size() - 2, 2, ".W") == 0;
}

struct OptState {
    std::map<std::string, Tensorf> m, v;  // momentum / first moment, second moment
    long t = 0;
};

}  // namespace

RunLog train(Network& net, const Dataset& train_set, const Dataset* eval_set,
             const TrainConfig& cfg) {
    if (train_set.size() == 0) throw InputError("train: empty training set");
    if (cfg.batch_size < 1 || cfg.epochs < 0) throw InputError("train: bad batch size or epochs");

    std::vector<std::string> trainable;
    for (const auto& [name, t] : net.params) {
        if (is_slope_param(name)) {
            trainable.push_back(name);
        } else if (!cfg.freeze_weights) {
            trainable.push_back(name);
        }
    }
    if (cfg.freeze_weights && trainable.empty())
        throw ContractError("train: slopes-only mode but the model has no slope parameters");

    OptState st;
    for (const auto& name : trainable) {
        st.m[name] = Tensorf(net.params.at(name).shape);
        if (cfg.opt.kind == OptimizerCfg::Kind::Adam)
            st.v[name] = Tensorf(net.params.at(name).shape);
    }

    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    const auto& K = kernels::active();
    RunLog log;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const float lr = schedule_lr(cfg.sched, cfg.opt.lr, epoch, cfg.epochs);
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0;
        std::size_t correct = 0, seen = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(stop));
            auto [images, labels] = gather(train_set, idx);
            if (cfg.augment) images = augment_pad_crop_flip(images, rng);

            auto g = net.forward_ad(images, /*train_mode=*/true,
                                    /*train_weights=*/!cfg.freeze_weights,
                                    /*train_slopes=*/true);
            auto loss = ad::softmax_cross_entropy(g.logits, labels);
            const float loss_val = loss->value[0];
            if (!std::isfinite(loss_val))
                throw DivergenceError(epoch, "train: loss diverged at epoch " +
                                                 std::to_string(epoch));
            ad::backward(loss);

            loss_sum += static_cast<double>(loss_val) * static_cast<double>(idx.size());
            const auto pred = ops::argmax_rows(g.logits->value);
            for (std::size_t i = 0; i < labels.size(); ++i)
                if (pred[i] == labels[i]) ++correct;
            seen += labels.size();

            ++st.t;
            for (const auto& name : trainable) {
                auto it = g.leaves.find(name);
                if (it == g.leaves.end()) continue;
                const Tensorf grad = it->second->grad_or_zeros();
                Tensorf& p = net.params.at(name);
                const float wd = is_weight_param(name) ? cfg.opt.weight_decay : 0.0f;
                if (cfg.opt.kind == OptimizerCfg::Kind::Adam) {
                    const float bc1 =
                        1.0f - std::pow(cfg.opt.beta1, static_cast<float>(st.t));
                    const float bc2 =
                        1.0f - std::pow(cfg.opt.beta2, static_cast<float>(st.t));
                    K.adam_step(p.size(), p.ptr(), st.m.at(name).ptr(), st.v.at(name).ptr(),
                                grad.ptr(), lr, cfg.opt.beta1, cfg.opt.beta2, cfg.opt.eps, bc1,
                                bc2, wd);
                } else {
                    K.sgd_momentum_step(p.size(), p.ptr(), st.m.at(name).ptr(), grad.ptr(), lr,
                                        cfg.opt.momentum, wd);
                }
            }
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = lr;
        rec.train_loss = static_cast<float>(loss_sum / static_cast<double>(seen));
        rec.train_acc = static_cast<float>(correct) / static_cast<float>(seen);
        rec.test_acc = eval_set ? evaluate_accuracy(net, *eval_set)
                                : std::numeric_limits<float>::quiet_NaN();
        log.records.push_back(rec);
    }
    return log;
}

RunLog train_slopes_only(Network& net, const Dataset& train_set, const Dataset* eval_set,
                         TrainConfig cfg) {
    if (!net.has_rrelu())
        throw ContractError("train_slopes_only: model has no trainable slopes");
    cfg.freeze_weights = true;
    return train(net, train_set, eval_set, cfg);
}

float evaluate_accuracy(const Network& net, const Dataset& d, std::size_t batch_size) {
    if (d.size() == 0) throw InputError("evaluate: empty dataset");
    std::size_t correct = 0;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < d.size(); start += batch_size) {
        const std::size_t stop = std::min(d.size(), start + batch_size);
        idx.resize(stop - start);
        std::iota(idx.begin(), idx.end(), start);
        auto [images, labels] = gather(d, idx);
        const auto pred = ops::argmax_rows(net.forward_eval(images));
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (pred[i] == labels[i]) ++correct;
    }
    return static_cast<float>(correct) / static_cast<float>(d.size());
}

float evaluate_loss(const Network& net, const Dataset& d, std::size_t batch_size) {
    if (d.size() == 0) throw InputError("evaluate: empty dataset");
    double loss_sum = 0;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < d.size(); start += batch_size) {
        const std::size_t stop = std::min(d.size(), start + batch_size);
        idx.resize(stop - start);
        std::iota(idx.begin(), idx.end(), start);
        auto [images, labels] = gather(d, idx);
        loss_sum += static_cast<double>(
                        ops::softmax_cross_entropy(net.forward_eval(images), labels)) *
                    static_cast<double>(labels.size());
    }
    return static_cast<float>(loss_sum / static_cast<double>(d.size()));
}

}  // namespace rrelu
