#include <stdexcept>

#include "rrelu/kernels.hpp"

namespace rrelu::kernels {

namespace {
const Kernels* g_active = nullptr;
Isa g_isa = Isa::Scalar;
}  // namespace

Isa best_supported() {
    if (avx512_kernels()) return Isa::Avx512;
    if (avx2_kernels()) return Isa::Avx2;
    if (neon_kernels()) return Isa::Neon;
    return Isa::Scalar;
}

void select(Isa isa) {
    const Kernels* k = nullptr;
    switch (isa) {
        case Isa::Scalar: k = &scalar_kernels(); break;
        case Isa::Avx2: k = avx2_kernels(); break;
        case Isa::Avx512: k = avx512_kernels(); break;
        case Isa::Neon: k = neon_kernels(); break;
    }
    if (!k) throw std::runtime_error("kernel ISA not supported on this CPU: " + isa_name(isa));
    g_active = k;
    g_isa = isa;
}

const Kernels& active() {
    if (!g_active) select(best_supported());
    return *g_active;
}

Isa active_isa() {
    active();
    return g_isa;
}

std::string isa_name(Isa isa) {
    switch (isa) {
        case Isa::Scalar: return "scalar";
        case Isa::Avx2: return "avx2";
        case Isa::Avx512: return "avx512";
        case Isa::Neon: return "neon";
    }
    return "?";
}

}  // namespace rrelu::kernels
