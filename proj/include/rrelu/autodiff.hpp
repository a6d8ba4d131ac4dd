#pragma once

// Reverse-mode autodiff on a dynamically built graph.  Nodes own their value;
// backward() topologically sorts the graph and visits each node exactly once.

#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "rrelu/ops.hpp"

namespace rrelu::ad {

template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // allocated on first accumulation
    bool requires_grad = false;
    bool has_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;

    void accumulate(const Tensor<T>& g) {
        if (!requires_grad) return;
        if (!has_grad) {
            grad = g;
            has_grad = true;
        } else {
            if constexpr (std::is_same_v<T, float>) {
                kernels::active().axpy(grad.size(), 1.0f, g.ptr(), grad.ptr());
            } else {
                for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += g[i];
            }
        }
    }

    // Gradient of the last backward pass; zeros for unreachable leaves.
    Tensor<T> grad_or_zeros() const { return has_grad ? grad : Tensor<T>(value.shape); }
};

template <typename T>
using Var = std::shared_ptr<Node<T>>;

using Varf = Var<float>;
using Vard = Var<double>;

template <typename T>
Var<T> leaf(Tensor<T> value, bool requires_grad = false) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return n;
}

template <typename T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> parents,
               std::function<void(Node<T>&)> backprop) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->parents = std::move(parents);
    for (const auto& p : n->parents)
        if (p->requires_grad) n->requires_grad = true;
    if (n->requires_grad) n->backprop = std::move(backprop);
    return n;
}

template <typename T>
void backward(const Var<T>& loss) {
    if (loss->value.size() != 1)
        throw ContractError("backward: loss must be scalar, got " +
                            shape_str(loss->value.shape));
    // iterative post-order DFS
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    stack.push_back({loss.get(), 0});
    seen.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node<T>* p = node->parents[idx++].get();
            if (seen.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    loss->grad = Tensor<T>::full(loss->value.shape, T(1));
    loss->has_grad = true;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        if (n->backprop && n->has_grad) n->backprop(*n);
    }
}

// ---------------------------------------------------------------------------
// Differentiable ops
// ---------------------------------------------------------------------------

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
    return make_op<T>(ops::matmul(a->value, b->value), {a, b}, [a, b](Node<T>& n) {
        if (a->requires_grad) a->accumulate(ops::matmul(n.grad, ops::transpose2d(b->value)));
        if (b->requires_grad) b->accumulate(ops::matmul(ops::transpose2d(a->value), n.grad));
    });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    return make_op<T>(ops::add(a->value, b->value), {a, b}, [a, b](Node<T>& n) {
        a->accumulate(n.grad);
        b->accumulate(n.grad);
    });
}

template <typename T>
Var<T> add_rowvec(const Var<T>& x, const Var<T>& bias) {
    return make_op<T>(ops::add_rowvec(x->value, bias->value), {x, bias}, [x, bias](Node<T>& n) {
        x->accumulate(n.grad);
        if (bias->requires_grad) {
            Tensor<T> db(bias->value.shape);
            const std::size_t rows = n.grad.dim(0), cols = n.grad.dim(1);
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < cols; ++j) db[j] += n.grad[i * cols + j];
            bias->accumulate(db);
        }
    });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
    return make_op<T>(ops::relu(x->value), {x}, [x](Node<T>& n) {
        x->accumulate(ops::relu_backward(x->value, n.grad));
    });
}

template <typename T>
Var<T> rrelu(const Var<T>& x, const Var<T>& slopes) {
    return make_op<T>(ops::rrelu_forward(x->value, slopes->value), {x, slopes},
                      [x, slopes](Node<T>& n) {
                          auto [dx, db] = ops::rrelu_backward(n.grad, x->value, slopes->value);
                          x->accumulate(dx);
                          slopes->accumulate(db);
                      });
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, std::size_t stride, std::size_t pad) {
    return make_op<T>(ops::conv2d_forward(x->value, w->value, stride, pad), {x, w},
                      [x, w, stride, pad](Node<T>& n) {
                          auto [dx, dw] = ops::conv2d_backward(x->value, w->value, stride, pad,
                                                               n.grad);
                          x->accumulate(dx);
                          w->accumulate(dw);
                      });
}

template <typename T>
Var<T> batchnorm2d(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                   Tensor<T>& running_mean, Tensor<T>& running_var, bool train, T eps,
                   T momentum) {
    auto aux = std::make_shared<ops::BnAux<T>>();
    Tensor<T> y = ops::batchnorm2d_forward(x->value, gamma->value, beta->value, running_mean,
                                           running_var, train, eps, momentum, aux.get());
    return make_op<T>(std::move(y), {x, gamma, beta}, [x, gamma, beta, aux, train](Node<T>& n) {
        Tensor<T> dx, dg, db;
        if (train)
            ops::batchnorm2d_backward_train(x->value, gamma->value, *aux, n.grad, dx, dg, db);
        else
            ops::batchnorm2d_backward_eval(x->value, gamma->value, *aux, n.grad, dx, dg, db);
        x->accumulate(dx);
        gamma->accumulate(dg);
        beta->accumulate(db);
    });
}

template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
    return make_op<T>(ops::global_avg_pool(x->value), {x}, [x](Node<T>& n) {
        x->accumulate(ops::global_avg_pool_backward(x->value.shape, n.grad));
    });
}

template <typename T>
Var<T> reshape(const Var<T>& x, std::vector<std::size_t> shape) {
    auto old_shape = x->value.shape;
    return make_op<T>(x->value.reshaped(std::move(shape)), {x}, [x, old_shape](Node<T>& n) {
        x->accumulate(n.grad.reshaped(old_shape));
    });
}

template <typename T>
Var<T> flatten(const Var<T>& x) {
    return reshape(x, {x->value.dim(0), x->value.size() / x->value.dim(0)});
}

template <typename T>
Var<T> downsample_pad(const Var<T>& x, std::size_t stride, std::size_t pad_channels) {
    auto xshape = x->value.shape;
    return make_op<T>(ops::downsample_pad(x->value, stride, pad_channels), {x},
                      [x, xshape, stride, pad_channels](Node<T>& n) {
                          x->accumulate(ops::downsample_pad_backward(xshape, stride,
                                                                     pad_channels, n.grad));
                      });
}

template <typename T>
Var<T> channel_scatter(const Var<T>& x, std::vector<std::size_t> map, std::size_t full_width) {
    auto xshape = x->value.shape;
    return make_op<T>(ops::channel_scatter(x->value, map, full_width), {x},
                      [x, xshape, map, full_width](Node<T>& n) {
                          x->accumulate(ops::channel_scatter_backward(xshape, map, full_width,
                                                                      n.grad));
                      });
}

template <typename T>
Var<T> softmax_cross_entropy(const Var<T>& logits, const std::vector<int>& labels) {
    auto dlogits = std::make_shared<Tensor<T>>();
    T loss = ops::softmax_cross_entropy(logits->value, labels, dlogits.get());
    return make_op<T>(Tensor<T>({1}, {loss}), {logits}, [logits, dlogits](Node<T>& n) {
        Tensor<T> d = *dlogits;
        const T up = n.grad[0];
        for (auto& v : d.data) v *= up;
        logits->accumulate(d);
    });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
    T s = 0;
    for (T v : x->value.data) s += v;
    return make_op<T>(Tensor<T>({1}, {s}), {x}, [x](Node<T>& n) {
        x->accumulate(Tensor<T>::full(x->value.shape, n.grad[0]));
    });
}

}  // namespace rrelu::ad
