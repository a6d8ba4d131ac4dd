#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cmath>

#include "rrelu/kernels.hpp"

namespace rrelu::kernels {

namespace {

// 4-row x 32-column tile with masked loads/stores for the column tail.
void matmul_avx512(const float* a, const float* b, float* c,
                   std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t j0 = 0; j0 < n; j0 += 32) {
        const std::size_t nr = (n - j0 < 32) ? (n - j0) : 32;
        const std::size_t nv = nr / 16;
        const unsigned rem = static_cast<unsigned>(nr % 16);
        const __mmask16 mrem = static_cast<__mmask16>((1u << rem) - 1u);
        const std::size_t nslots = nv + (rem ? 1 : 0);
        for (std::size_t i0 = 0; i0 < m; i0 += 4) {
            const std::size_t mr = (m - i0 < 4) ? (m - i0) : 4;
            __m512 acc[4][3];
            for (std::size_t r = 0; r < mr; ++r)
                for (std::size_t s = 0; s < nslots; ++s) acc[r][s] = _mm512_setzero_ps();
            for (std::size_t p = 0; p < k; ++p) {
                const float* brow = b + p * n + j0;
                __m512 bv[3];
                for (std::size_t s = 0; s < nv; ++s) bv[s] = _mm512_loadu_ps(brow + 16 * s);
                if (rem) bv[nv] = _mm512_maskz_loadu_ps(mrem, brow + 16 * nv);
                for (std::size_t r = 0; r < mr; ++r) {
                    const __m512 av = _mm512_set1_ps(a[(i0 + r) * k + p]);
                    for (std::size_t s = 0; s < nslots; ++s)
                        acc[r][s] = _mm512_fmadd_ps(av, bv[s], acc[r][s]);
                }
            }
            for (std::size_t r = 0; r < mr; ++r) {
                float* crow = c + (i0 + r) * n + j0;
                for (std::size_t s = 0; s < nv; ++s) _mm512_storeu_ps(crow + 16 * s, acc[r][s]);
                if (rem) _mm512_mask_storeu_ps(crow + 16 * nv, mrem, acc[r][nv]);
            }
        }
    }
}

void axpy_avx512(std::size_t n, float alpha, const float* x, float* y) {
    const __m512 av = _mm512_set1_ps(alpha);
    std::size_t i = 0;
    for (; i + 16 <= n; i += 16) {
        __m512 yv = _mm512_loadu_ps(y + i);
        yv = _mm512_fmadd_ps(av, _mm512_loadu_ps(x + i), yv);
        _mm512_storeu_ps(y + i, yv);
    }
    if (i < n) {
        const __mmask16 tail = static_cast<__mmask16>((1u << (n - i)) - 1u);
        __m512 yv = _mm512_maskz_loadu_ps(tail, y + i);
        yv = _mm512_fmadd_ps(av, _mm512_maskz_loadu_ps(tail, x + i), yv);
        _mm512_mask_storeu_ps(y + i, tail, yv);
    }
}

void chan_scale_relu_avx512(std::size_t n, float slope, const float* x, float* y) {
    const __m512 sv = _mm512_set1_ps(slope);
    const __m512 zero = _mm512_setzero_ps();
    std::size_t i = 0;
    for (; i + 16 <= n; i += 16) {
        __m512 r = _mm512_max_ps(_mm512_loadu_ps(x + i), zero);
        _mm512_storeu_ps(y + i, _mm512_mul_ps(sv, r));
    }
    for (; i < n; ++i) {
        float r = x[i] > 0.0f ? x[i] : 0.0f;
        y[i] = slope * r;
    }
}

void adam_step_avx512(std::size_t n, float* p, float* m, float* v, const float* g,
                      float lr, float beta1, float beta2, float eps,
                      float bc1, float bc2, float wd) {
    const __m512 b1 = _mm512_set1_ps(beta1), omb1 = _mm512_set1_ps(1.0f - beta1);
    const __m512 b2 = _mm512_set1_ps(beta2), omb2 = _mm512_set1_ps(1.0f - beta2);
    const __m512 lrv = _mm512_set1_ps(lr), epsv = _mm512_set1_ps(eps);
    const __m512 bc1v = _mm512_set1_ps(bc1), bc2v = _mm512_set1_ps(bc2);
    const __m512 wdv = _mm512_set1_ps(wd);
    std::size_t i = 0;
    for (; i + 16 <= n; i += 16) {
        __m512 pv = _mm512_loadu_ps(p + i);
        __m512 gv = _mm512_add_ps(_mm512_loadu_ps(g + i), _mm512_mul_ps(wdv, pv));
        __m512 mv = _mm512_add_ps(_mm512_mul_ps(b1, _mm512_loadu_ps(m + i)),
                                  _mm512_mul_ps(omb1, gv));
        __m512 vv = _mm512_add_ps(_mm512_mul_ps(b2, _mm512_loadu_ps(v + i)),
                                  _mm512_mul_ps(omb2, _mm512_mul_ps(gv, gv)));
        _mm512_storeu_ps(m + i, mv);
        _mm512_storeu_ps(v + i, vv);
        __m512 mhat = _mm512_div_ps(mv, bc1v);
        __m512 vhat = _mm512_div_ps(vv, bc2v);
        __m512 den = _mm512_add_ps(_mm512_sqrt_ps(vhat), epsv);
        pv = _mm512_sub_ps(pv, _mm512_mul_ps(lrv, _mm512_div_ps(mhat, den)));
        _mm512_storeu_ps(p + i, pv);
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

void sgd_momentum_step_avx512(std::size_t n, float* p, float* vel, const float* g,
                              float lr, float momentum, float wd) {
    const __m512 momv = _mm512_set1_ps(momentum);
    const __m512 lrv = _mm512_set1_ps(lr);
    const __m512 wdv = _mm512_set1_ps(wd);
    std::size_t i = 0;
    for (; i + 16 <= n; i += 16) {
        __m512 pv = _mm512_loadu_ps(p + i);
        __m512 gv = _mm512_add_ps(_mm512_loadu_ps(g + i), _mm512_mul_ps(wdv, pv));
        __m512 vv = _mm512_add_ps(_mm512_mul_ps(momv, _mm512_loadu_ps(vel + i)), gv);
        _mm512_storeu_ps(vel + i, vv);
        pv = _mm512_sub_ps(pv, _mm512_mul_ps(lrv, vv));
        _mm512_storeu_ps(p + i, pv);
    }
    for (; i < n; ++i) {
        float gi = g[i] + wd * p[i];
        vel[i] = momentum * vel[i] + gi;
        p[i] = p[i] - lr * vel[i];
    }
}

}  // namespace

const Kernels* avx512_kernels() {
    if (!__builtin_cpu_supports("avx512f")) return nullptr;
    static const Kernels k = {
        "avx512",
        matmul_avx512,
        axpy_avx512,
        chan_scale_relu_avx512,
        adam_step_avx512,
        sgd_momentum_step_avx512,
    };
    return &k;
}

}  // namespace rrelu::kernels

#else

#include "rrelu/kernels.hpp"
namespace rrelu::kernels {
const Kernels* avx512_kernels() { return nullptr; }
}

#endif
