#if defined(__ARM_NEON) || defined(__ARM_NEON__)

#include <arm_neon.h>

#include <cmath>
#include <cstring>

#include "rrelu/kernels.hpp"

namespace rrelu::kernels {

namespace {

void matmul_neon(const float* a, const float* b, float* c,
                 std::size_t m, std::size_t k, std::size_t n) {
    const std::size_t nmain = n - (n % 8);
    for (std::size_t i0 = 0; i0 < m; i0 += 4) {
        const std::size_t mr = (m - i0 < 4) ? (m - i0) : 4;
        for (std::size_t j0 = 0; j0 < nmain; j0 += 8) {
            float32x4_t acc[4][2];
            for (std::size_t r = 0; r < mr; ++r) {
                acc[r][0] = vdupq_n_f32(0.0f);
                acc[r][1] = vdupq_n_f32(0.0f);
            }
            for (std::size_t p = 0; p < k; ++p) {
                const float* brow = b + p * n + j0;
                const float32x4_t b0 = vld1q_f32(brow);
                const float32x4_t b1 = vld1q_f32(brow + 4);
                for (std::size_t r = 0; r < mr; ++r) {
                    const float32x4_t av = vdupq_n_f32(a[(i0 + r) * k + p]);
                    acc[r][0] = vfmaq_f32(acc[r][0], av, b0);
                    acc[r][1] = vfmaq_f32(acc[r][1], av, b1);
                }
            }
            for (std::size_t r = 0; r < mr; ++r) {
                vst1q_f32(c + (i0 + r) * n + j0, acc[r][0]);
                vst1q_f32(c + (i0 + r) * n + j0 + 4, acc[r][1]);
            }
        }
        for (std::size_t r = 0; r < mr; ++r) {
            for (std::size_t j = nmain; j < n; ++j) {
                float accs = 0.0f;
                for (std::size_t p = 0; p < k; ++p)
                    accs = std::fma(a[(i0 + r) * k + p], b[p * n + j], accs);
                c[(i0 + r) * n + j] = accs;
            }
        }
    }
}

void axpy_neon(std::size_t n, float alpha, const float* x, float* y) {
    const float32x4_t av = vdupq_n_f32(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        vst1q_f32(y + i, vfmaq_f32(vld1q_f32(y + i), av, vld1q_f32(x + i)));
    for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

void chan_scale_relu_neon(std::size_t n, float slope, const float* x, float* y) {
    const float32x4_t sv = vdupq_n_f32(slope);
    const float32x4_t zero = vdupq_n_f32(0.0f);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        vst1q_f32(y + i, vmulq_f32(sv, vmaxq_f32(vld1q_f32(x + i), zero)));
    for (; i < n; ++i) {
        float r = x[i] > 0.0f ? x[i] : 0.0f;
        y[i] = slope * r;
    }
}

void adam_step_neon(std::size_t n, float* p, float* m, float* v, const float* g,
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

void sgd_momentum_step_neon(std::size_t n, float* p, float* vel, const float* g,
                            float lr, float momentum, float wd) {
    for (std::size_t i = 0; i < n; ++i) {
        float gi = g[i] + wd * p[i];
        vel[i] = momentum * vel[i] + gi;
        p[i] = p[i] - lr * vel[i];
    }
}

}  // namespace

const Kernels* neon_kernels() {
    static const Kernels k = {
        "neon",
        matmul_neon,
        axpy_neon,
        chan_scale_relu_neon,
        adam_step_neon,
        sgd_momentum_step_neon,
    };
    return &k;
}

}  // namespace rrelu::kernels

#else

#include "rrelu/kernels.hpp"
namespace rrelu::kernels {
const Kernels* neon_kernels() { return nullptr; }
}

#endif
