#include "dsrl/kernels.hpp"

#include <cstdlib>
#include <cstring>

#include "dsrl/common.hpp"

namespace dsrl::kernels {
namespace {

const Ops* g_forced = nullptr;

const Ops& detect() {
    if (const char* env = std::getenv("DSRL_KERNELS")) {
        if (std::strcmp(env, "scalar") == 0) return scalar_ops();
        if (std::strcmp(env, "avx2") == 0 && avx2_supported()) return avx2_ops();
        // unknown or unsupported value: fall through to auto
    }
    return avx2_supported() ? avx2_ops() : scalar_ops();
}

}  // namespace

const Ops& active() {
    if (g_forced) return *g_forced;
    static const Ops& chosen = detect();
    return chosen;
}

void force_backend(Backend b) {
    if (b == Backend::avx2) {
        if (!avx2_supported())
            throw NumericError("avx2 backend not supported on this CPU");
        g_forced = &avx2_ops();
    } else {
        g_forced = &scalar_ops();
    }
}

void reset_backend() { g_forced = nullptr; }

}  // namespace dsrl::kernels
