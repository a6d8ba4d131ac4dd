#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cmath>
#include <cstring>

#include "rrelu/kernels.hpp"

namespace rrelu::kernels {

namespace {

// 4-row x 16-column register tile; k streams through the tile so each C
// element keeps a single ascending fma chain.
void matmul_avx2(const float* a, const float* b, float* c,
                 std::size_t m, std::size_t k, std::size_t n) {
    const std::size_t nmain = n - (n % 16);
    for (std::size_t i0 = 0; i0 < m; i0 += 4) {
        const std::size_t mr = (m - i0 < 4) ? (m - i0) : 4;
        for (std::size_t j0 = 0; j0 < nmain; j0 += 16) {
            __m256 acc[4][2];
            for (std::size_t r = 0; r < mr; ++r) {
                acc[r][0] = _mm256_setzero_ps();
                acc[r][1] = _mm256_setzero_ps();
            }
            for (std::size_t p = 0; p < k; ++p) {
                const float* brow = b + p * n + j0;
                const __m256 b0 = _mm256_loadu_ps(brow);
                const __m256 b1 = _mm256_loadu_ps(brow + 8);
                for (std::size_t r = 0; r < mr; ++r) {
                    const __m256 av = _mm256_set1_ps(a[(i0 + r) * k + p]);
                    acc[r][0] = _mm256_fmadd_ps(av, b0, acc[r][0]);
                    acc[r][1] = _mm256_fmadd_ps(av, b1, acc[r][1]);
                }
            }
            for (std::size_t r = 0; r < mr; ++r) {
                _mm256_storeu_ps(c + (i0 + r) * n + j0, acc[r][0]);
                _mm256_storeu_ps(c + (i0 + r) * n + j0 + 8, acc[r][1]);
            }
        }
        // column tail, scalar fma in the same per-element order
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

void axpy_avx2(std::size_t n, float alpha, const float* x, float* y) {
    const __m256 av = _mm256_set1_ps(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 yv = _mm256_loadu_ps(y + i);
        yv = _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), yv);
        _mm256_storeu_ps(y + i, yv);
    }
    for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

void chan_scale_relu_avx2(std::size_t n, float slope, const float* x, float* y) {
    const __m256 sv = _mm256_set1_ps(slope);
    const __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 r = _mm256_max_ps(_mm256_loadu_ps(x + i), zero);
        _mm256_storeu_ps(y + i, _mm256_mul_ps(sv, r));
    }
    for (; i < n; ++i) {
        float r = x[i] > 0.0f ? x[i] : 0.0f;
        y[i] = slope * r;
    }
}

void adam_step_avx2(std::size_t n, float* p, float* m, float* v, const float* g,
                    float lr, float beta1, float beta2, float eps,
                    float bc1, float bc2, float wd) {
    const __m256 b1 = _mm256_set1_ps(beta1), omb1 = _mm256_set1_ps(1.0f - beta1);
    const __m256 b2 = _mm256_set1_ps(beta2), omb2 = _mm256_set1_ps(1.0f - beta2);
    const __m256 lrv = _mm256_set1_ps(lr), epsv = _mm256_set1_ps(eps);
    const __m256 bc1v = _mm256_set1_ps(bc1), bc2v = _mm256_set1_ps(bc2);
    const __m256 wdv = _mm256_set1_ps(wd);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 pv = _mm256_loadu_ps(p + i);
        __m256 gv = _mm256_add_ps(_mm256_loadu_ps(g + i), _mm256_mul_ps(wdv, pv));
        __m256 mv = _mm256_add_ps(_mm256_mul_ps(b1, _mm256_loadu_ps(m + i)),
                                  _mm256_mul_ps(omb1, gv));
        __m256 vv = _mm256_add_ps(_mm256_mul_ps(b2, _mm256_loadu_ps(v + i)),
                                  _mm256_mul_ps(omb2, _mm256_mul_ps(gv, gv)));
        _mm256_storeu_ps(m + i, mv);
        _mm256_storeu_ps(v + i, vv);
        __m256 mhat = _mm256_div_ps(mv, bc1v);
        __m256 vhat = _mm256_div_ps(vv, bc2v);
        __m256 den = _mm256_add_ps(_mm256_sqrt_ps(vhat), epsv);
        pv = _mm256_sub_ps(pv, _mm256_mul_ps(lrv, _mm256_div_ps(mhat, den)));
        _mm256_storeu_ps(p + i, pv);
    }
    for (; i < n; ++i) {
        float gi = g[i] + wd * p[i];
        m[i] = beta1 * m[i] + (1.0f - beta1) * gi;
        v[i] = beta2 * v[i] + (1.0f - beta2) * (gi * gi);
        float mhat = m[i] / bc1;
        float vhat = v[i] / bc2;
        p[i] = p[i] - lr * (mhat / (std::sqrt(vhat) + eps));
    }
}

void sgd_momentum_step_avx2(std::size_t n, float* p, float* vel, const float* g,
                            float lr, float momentum, float wd) {
    const __m256 momv = _mm256_set1_ps(momentum);
    const __m256 lrv = _mm256_set1_ps(lr);
    const __m256 wdv = _mm256_set1_ps(wd);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 pv = _mm256_loadu_ps(p + i);
        __m256 gv = _mm256_add_ps(_mm256_loadu_ps(g + i), _mm256_mul_ps(wdv, pv));
        __m256 vv = _mm256_add_ps(_mm256_mul_ps(momv, _mm256_loadu_ps(vel + i)), gv);
        _mm256_storeu_ps(vel + i, vv);
        pv = _mm256_sub_ps(pv, _mm256_mul_ps(lrv, vv));
        _mm256_storeu_ps(p + i, pv);
    }
    for (; i < n; ++i) {
        float gi = g[i] + wd * p[i];
        vel[i] = momentum * vel[i] + gi;
        p[i] = p[i] - lr * vel[i];
    }
}

}  // namespace

const Kernels* avx2_kernels() {
    if (!__builtin_cpu_supports("avx2") || !__builtin_cpu_supports("fma")) return nullptr;
    static const Kernels k = {
        "avx2",
        matmul_avx2,
        axpy_avx2,
        chan_scale_relu_avx2,
        adam_step_avx2,
        sgd_momentum_step_avx2,
    };
    return &k;
}

}  // namespace rrelu::kernels

#else

#include "rrelu/kernels.hpp"
namespace rrelu::kernels {
const Kernels* avx2_kernels() { return nullptr; }
}

#endif
