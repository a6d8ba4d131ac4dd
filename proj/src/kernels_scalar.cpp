#include <cmath>
#include <cstring>

#include "rrelu/kernels.hpp"

namespace rrelu::kernels {

namespace {

void matmul_scalar(const float* a, const float* b, float* c,
                   std::size_t m, std::size_t k, std::size_t n) {
    // i-k-j ordering: each C element accumulates over k ascending, the same
    // per-element fma chain the SIMD kernels use.
    for (std::size_t i = 0; i < m; ++i) {
        float* crow = c + i * n;
        std::memset(crow, 0, n * sizeof(float));
        const float* arow = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const float av = arow[p];
            const float* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] = std::fma(av, brow[j], crow[j]);
        }
    }
}

void axpy_scalar(std::size_t n, float alpha, const float* x, float* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

void chan_scale_relu_scalar(std::size_t n, float slope, const float* x, float* y) {
    for (std::size_t i = 0; i < n; ++i) {
        float r = x[i] > 0.0f ? x[i] : 0.0f;
        y[i] = slope * r;
    }
}

void adam_step_scalar(std::size_t n, float* p, float* m, float* v, const float* g,
                      float lr, float beta1, float beta2, float eps,
                      float bc1, float bc2, float wd) {
    for (std::size_t i = 0; i < n; ++i) {
        float gi = g[i] + wd * p[i];
        m[i] = beta1 * m[i] + (1.0f - beta1) * gi;
        v[i] = beta2 * v[i] + (1.0f - beta2) * (gi * gi);
        float mhat = m[i] / bc1;
        float vhat = v[i] / bc2;
        p[i] = p[i] - lr * (mhat / (std::sqrt(vhat) + eps));
    }
}

void sgd_momentum_step_scalar(std::size_t n, float* p, float* vel, const float* g,
                              float lr, float momentum, float wd) {
    for (std::size_t i = 0; i < n; ++i) {
        float gi = g[i] + wd * p[i];
        vel[i] = momentum * vel[i] + gi;
        p[i] = p[i] - lr * vel[i];
    }
}

}  // namespace

const Kernels& scalar_kernels() {
    static const Kernels k = {
        "scalar",
        matmul_scalar,
        axpy_scalar,
        chan_scale_relu_scalar,
        adam_step_scalar,
        sgd_momentum_step_scalar,
    };
    return k;
}

}  // namespace rrelu::kernels
