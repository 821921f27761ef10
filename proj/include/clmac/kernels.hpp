#pragma once

// Dense double-precision kernels behind the network.
//
// Every kernel has a scalar reference implementation; vector variants are
// compiled into separate translation units and chosen once at startup from
// the CPU's capabilities. All matrices are row-major with explicit leading
// dimensions, and every GEMM accumulates into C (C += ...).

#include <cstddef>
#include <span>
#include <string_view>

namespace clmac::kernels {

struct KernelTable {
    const char* name;

    // C[m x n] += A[m x k] * B[k x n]
    void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
                    std::size_t ldb, double* c, std::size_t ldc);
    // C[m x n] += A[m x k] * B[n x k]^T
    void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
                    std::size_t ldb, double* c, std::size_t ldc);
    // C[m x n] += A[k x m]^T * B[k x n]
    void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
                    std::size_t ldb, double* c, std::size_t ldc);

    // In-place logistic and hyperbolic tangent.
    void (*sigmoid)(double* x, std::size_t n);
    void (*tanh)(double* x, std::size_t n);
};

const KernelTable& scalar();

// nullptr when the variant was not compiled in or the CPU lacks the features.
const KernelTable* avx2();
const KernelTable* avx512();

// The table used by the network. Resolved on first use: the CLMAC_KERNELS
// environment variable ("scalar", "avx2" or "avx512") forces a variant, otherwise the
// best one the CPU supports is taken.
const KernelTable& active();

// Overrides the active table (tests and benchmarks). Not thread-safe with
// respect to concurrent network evaluation.
void set_active(const KernelTable& table);

// Looks a variant up by name; nullptr if unknown or unsupported here.
const KernelTable* find(std::string_view name);

}  // namespace clmac::kernels
