#include <cmath>

#include "clmac/kernels.hpp"

namespace clmac::kernels {

namespace {

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
             std::size_t ldb, double* c, std::size_t ldc) {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * ldc;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a[i * lda + p];
            const double* brow = b + p * ldb;
            for (std::size_t j = 0; j < n; ++j) {
                crow[j] += aip * brow[j];
            }
        }
    }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
             std::size_t ldb, double* c, std::size_t ldc) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * lda;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b + j * ldb;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) {
                acc += arow[p] * brow[p];
            }
            c[i * ldc + j] += acc;
        }
    }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
             std::size_t ldb, double* c, std::size_t ldc) {
    for (std::size_t p = 0; p < k; ++p) {
        const double* arow = a + p * lda;
        const double* brow = b + p * ldb;
        for (std::size_t i = 0; i < m; ++i) {
            const double api = arow[i];
            double* crow = c + i * ldc;
            for (std::size_t j = 0; j < n; ++j) {
                crow[j] += api * brow[j];
            }
        }
    }
}

void sigmoid(double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = 1.0 / (1.0 + std::exp(-x[i]));
    }
}

void tanh_inplace(double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = std::tanh(x[i]);
    }
}

constexpr KernelTable kScalar{"scalar", gemm_nn, gemm_nt, gemm_tn, sigmoid, tanh_inplace};

}  // namespace

const KernelTable& scalar() {
    return kScalar;
}

}  // namespace clmac::kernels
