#include <atomic>
#include <cstdlib>
#include <iostream>
#include <string>

#include "clmac/kernels.hpp"

namespace clmac::kernels {

#if CLMAC_HAVE_AVX2
const KernelTable& avx2_table();
const KernelTable& avx512_table();
#endif

namespace {

bool cpu_has_avx2() {
#if CLMAC_HAVE_AVX2 && (defined(__GNUC__) || defined(__clang__))
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

bool cpu_has_avx512() {
#if CLMAC_HAVE_AVX2 && (defined(__GNUC__) || defined(__clang__))
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx512f") && __builtin_cpu_supports("avx512dq") &&
           __builtin_cpu_supports("avx512vl") && cpu_has_avx2();
#else
    return false;
#endif
}

const KernelTable* resolve() {
    if (const char* forced = std::getenv("CLMAC_KERNELS")) {
        if (const KernelTable* t = find(forced)) {
            return t;
        }
        std::cerr << "warning: CLMAC_KERNELS=" << forced << " is not available here; using auto-detection\n";
    }
    if (const KernelTable* t = avx512()) {
        return t;
    }
    if (const KernelTable* t = avx2()) {
        return t;
    }
    return &scalar();
}

std::atomic<const KernelTable*>& slot() {
    static std::atomic<const KernelTable*> table{resolve()};
    return table;
}

}  // namespace

const KernelTable* avx2() {
#if CLMAC_HAVE_AVX2
    static const bool ok = cpu_has_avx2();
    return ok ? &avx2_table() : nullptr;
#else
    return nullptr;
#endif
}

const KernelTable* avx512() {
#if CLMAC_HAVE_AVX2
    static const bool ok = cpu_has_avx512();
    return ok ? &avx512_table() : nullptr;
#else
    return nullptr;
#endif
}

const KernelTable& active() {
    return *slot().load(std::memory_order_acquire);
}

void set_active(const KernelTable& table) {
    slot().store(&table, std::memory_order_release);
}

const KernelTable* find(std::string_view name) {
    if (name == "scalar") {
        return &scalar();
    }
    if (name == "avx2") {
        return avx2();
    }
    if (name == "avx512") {
        return avx512();
    }
    return nullptr;
}

}  // namespace clmac::kernels
