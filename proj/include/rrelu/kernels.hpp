#pragma once

#include <cstddef>
#include <string>

namespace rrelu::kernels {

// Inner-loop kernels shared by the tensor ops and the optimizers.  Every
// variant implements the same element-wise operation sequence, so the scalar
// and SIMD paths produce bit-identical results:
//
//   matmul: C[i,j] is an fma chain over the contraction index in ascending
//           order, seeded with 0.  SIMD variants vectorize across output
//           columns only, which keeps the per-element chain intact.
//   axpy / optimizer steps: plain element-wise sequences with no reductions.
struct Kernels {
    const char* name;

    // C[m x n] = A[m x k] * B[k x n], row-major, C overwritten.
    void (*matmul)(const float* a, const float* b, float* c,
                   std::size_t m, std::size_t k, std::size_t n);

    // y[i] = fma(alpha, x[i], y[i])
    void (*axpy)(std::size_t n, float alpha, const float* x, float* y);

    // y[i] = slope * max(0, x[i])   (one RReLU channel span)
    void (*chan_scale_relu)(std::size_t n, float slope, const float* x, float* y);

    // Adam with classic L2 term folded into the gradient.
    // bc1/bc2 are the bias-correction factors 1-beta^t.
    void (*adam_step)(std::size_t n, float* p, float* m, float* v, const float* g,
                      float lr, float beta1, float beta2, float eps,
                      float bc1, float bc2, float wd);

    void (*sgd_momentum_step)(std::size_t n, float* p, float* vel, const float* g,
                              float lr, float momentum, float wd);
};

enum class Isa { Scalar, Avx2, Avx512, Neon };

const Kernels& scalar_kernels();
const Kernels* avx2_kernels();    // nullptr when not compiled in / unsupported
const Kernels* avx512_kernels();  // nullptr when not compiled in / unsupported
const Kernels* neon_kernels();    // nullptr when not compiled in

// Best ISA the running CPU supports.
Isa best_supported();

// Active kernel set (defaults to best_supported()).  select() throws
// std::runtime_error for an unsupported ISA.
const Kernels& active();
Isa active_isa();
void select(Isa isa);

std::string isa_name(Isa isa);

}  // namespace rrelu::kernels
