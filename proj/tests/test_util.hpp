#pragma once

// Shared helpers for the unit tests: random tensors and a generic central
// finite-difference gradient checker.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "rrelu/autodiff.hpp"
#include "rrelu/tensor.hpp"

namespace testutil {

template <typename T>
rrelu::Tensor<T> random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng,
                               T lo = T(-1), T hi = T(1)) {
    rrelu::Tensor<T> t(std::move(shape));
    std::uniform_real_distribution<double> d(static_cast<double>(lo), static_cast<double>(hi));
    for (auto& v : t.data) v = static_cast<T>(d(rng));
    return t;
}

// Uniform magnitude in [0.2, 1] with random sign: keeps values away from the
// relu kink so finite differences stay valid.
template <typename T>
rrelu::Tensor<T> random_tensor_off_kink(std::vector<std::size_t> shape, std::mt19937_64& rng) {
    rrelu::Tensor<T> t(std::move(shape));
    std::uniform_real_distribution<double> mag(0.2, 1.0);
    std::bernoulli_distribution sign(0.5);
    for (auto& v : t.data) v = static_cast<T>(sign(rng) ? mag(rng) : -mag(rng));
    return t;
}

// loss = sum_i coeffs_i * y_i, with fixed random coefficients so permuted or
// misplaced gradient entries cannot cancel out.
template <typename T>
rrelu::ad::Var<T> weighted_sum(const rrelu::ad::Var<T>& y, const std::vector<T>& coeffs) {
    T s = 0;
    for (std::size_t i = 0; i < y->value.size(); ++i) s += coeffs[i] * y->value[i];
    return rrelu::ad::make_op<T>(
        rrelu::Tensor<T>({1}, {s}), {y}, [y, coeffs](rrelu::ad::Node<T>& n) {
            rrelu::Tensor<T> d(y->value.shape);
            for (std::size_t i = 0; i < d.size(); ++i) d[i] = coeffs[i] * n.grad[0];
            y->accumulate(d);
        });
}

// Builds the loss from leaf variables; must be re-entrant (called many times
// on perturbed copies of the inputs).
template <typename T>
using LossFn = std::function<rrelu::ad::Var<T>(const std::vector<rrelu::ad::Var<T>>&)>;

template <typename T>
struct GradcheckResult {
    double max_rel_err = 0.0;
    std::size_t checked = 0;
};

template <typename T>
GradcheckResult<T> gradcheck(const std::vector<rrelu::Tensor<T>>& inputs, const LossFn<T>& fn,
                             T h) {
    std::vector<rrelu::ad::Var<T>> leaves;
    for (const auto& t : inputs) leaves.push_back(rrelu::ad::leaf(t, true));
    auto loss = fn(leaves);
    rrelu::ad::backward(loss);

    auto eval = [&](const std::vector<rrelu::Tensor<T>>& pert) {
        std::vector<rrelu::ad::Var<T>> ls;
        for (const auto& t : pert) ls.push_back(rrelu::ad::leaf(t, false));
        return fn(ls)->value[0];
    };

    GradcheckResult<T> res;
    std::vector<rrelu::Tensor<T>> pert = inputs;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        const rrelu::Tensor<T> analytic = leaves[t]->grad_or_zeros();
        for (std::size_t i = 0; i < inputs[t].size(); ++i) {
            const T orig = pert[t][i];
            pert[t][i] = orig + h;
            const T fp = eval(pert);
            pert[t][i] = orig - h;
            const T fm = eval(pert);
            pert[t][i] = orig;
            const double fd = (static_cast<double>(fp) - static_cast<double>(fm)) /
                              (2.0 * static_cast<double>(h));
            const double a = static_cast<double>(analytic[i]);
            const double denom = std::max({1.0, std::abs(a), std::abs(fd)});
            res.max_rel_err = std::max(res.max_rel_err, std::abs(a - fd) / denom);
            ++res.checked;
        }
    }
    return res;
}

}  // namespace testutil
