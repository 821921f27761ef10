// AVX-512 variants (F + DQ + VL). Compiled alone with the matching -m flags
// and reached only through the dispatch table after a CPU feature check.

#include <immintrin.h>

#include <cmath>

#include "clmac/kernels.hpp"

namespace clmac::kernels {

namespace {

inline __mmask8 tail_mask(std::size_t left) {
    return left >= 8 ? static_cast<__mmask8>(0xff) : static_cast<__mmask8>((1U << left) - 1U);
}

// A(i, p) = a[i * rs + p * cs]. Blocks of 8 rows x 16 columns of C stay in
// sixteen registers over the k loop; column tails use masked lanes.
template <int Rows>
inline void block(std::size_t k, const double* a, std::size_t rs, std::size_t cs, const double* b, std::size_t ldb,
                  double* c, std::size_t ldc, __mmask8 m0, __mmask8 m1) {
    __m512d r0[Rows];
    __m512d r1[Rows];
#pragma GCC unroll 8
    for (int i = 0; i < Rows; ++i) {
        r0[i] = _mm512_maskz_loadu_pd(m0, c + i * ldc);
        r1[i] = _mm512_maskz_loadu_pd(m1, c + i * ldc + 8);
    }
    for (std::size_t p = 0; p < k; ++p) {
        const double* brow = b + p * ldb;
        const __m512d b0 = _mm512_maskz_loadu_pd(m0, brow);
        const __m512d b1 = _mm512_maskz_loadu_pd(m1, brow + 8);
        const double* ap = a + p * cs;
#pragma GCC unroll 8
        for (int i = 0; i < Rows; ++i) {
            const __m512d av = _mm512_set1_pd(ap[i * rs]);
            r0[i] = _mm512_fmadd_pd(av, b0, r0[i]);
            r1[i] = _mm512_fmadd_pd(av, b1, r1[i]);
        }
    }
#pragma GCC unroll 8
    for (int i = 0; i < Rows; ++i) {
        _mm512_mask_storeu_pd(c + i * ldc, m0, r0[i]);
        _mm512_mask_storeu_pd(c + i * ldc + 8, m1, r1[i]);
    }
}

template <int Rows>
void row_panel(std::size_t n, std::size_t k, const double* a, std::size_t rs, std::size_t cs, const double* b,
               std::size_t ldb, double* c, std::size_t ldc) {
    for (std::size_t j = 0; j < n; j += 16) {
        const std::size_t left = n - j;
        const __mmask8 m0 = tail_mask(left);
        const __mmask8 m1 = left > 8 ? tail_mask(left - 8) : static_cast<__mmask8>(0);
        block<Rows>(k, a, rs, cs, b + j, ldb, c + j, ldc, m0, m1);
    }
}

void gemm_strided(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t rs, std::size_t cs,
                  const double* b, std::size_t ldb, double* c, std::size_t ldc) {
    std::size_t i = 0;
    for (; i + 8 <= m; i += 8) {
        row_panel<8>(n, k, a + i * rs, rs, cs, b, ldb, c + i * ldc, ldc);
    }
    for (; i + 4 <= m; i += 4) {
        row_panel<4>(n, k, a + i * rs, rs, cs, b, ldb, c + i * ldc, ldc);
    }
    for (; i < m; ++i) {
        row_panel<1>(n, k, a + i * rs, rs, cs, b, ldb, c + i * ldc, ldc);
    }
}

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
             std::size_t ldb, double* c, std::size_t ldc) {
    gemm_strided(m, n, k, a, lda, 1, b, ldb, c, ldc);
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
             std::size_t ldb, double* c, std::size_t ldc) {
    gemm_strided(m, n, k, a, 1, lda, b, ldb, c, ldc);
}

// Dot products of R rows of A against Q rows of B; k tails are masked.
template <int R, int Q>
inline void dot_block(std::size_t k, const double* a, std::size_t lda, const double* b, std::size_t ldb, double* c,
                      std::size_t ldc) {
    __m512d s[R][Q];
#pragma GCC unroll 4
    for (int r = 0; r < R; ++r) {
#pragma GCC unroll 4
        for (int q = 0; q < Q; ++q) {
            s[r][q] = _mm512_setzero_pd();
        }
    }
    for (std::size_t p = 0; p < k; p += 8) {
        const __mmask8 mk = tail_mask(k - p);
        __m512d x[R];
#pragma GCC unroll 4
        for (int r = 0; r < R; ++r) {
            x[r] = _mm512_maskz_loadu_pd(mk, a + r * lda + p);
        }
#pragma GCC unroll 4
        for (int q = 0; q < Q; ++q) {
            const __m512d y = _mm512_maskz_loadu_pd(mk, b + q * ldb + p);
#pragma GCC unroll 4
            for (int r = 0; r < R; ++r) {
                s[r][q] = _mm512_fmadd_pd(x[r], y, s[r][q]);
            }
        }
    }
#pragma GCC unroll 4
    for (int r = 0; r < R; ++r) {
#pragma GCC unroll 4
        for (int q = 0; q < Q; ++q) {
            c[r * ldc + q] += _mm512_reduce_add_pd(s[r][q]);
        }
    }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
             std::size_t ldb, double* c, std::size_t ldc) {
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
        std::size_t j = 0;
        for (; j + 4 <= n; j += 4) {
            dot_block<4, 4>(k, a + i * lda, lda, b + j * ldb, ldb, c + i * ldc + j, ldc);
        }
        for (; j < n; ++j) {
            dot_block<4, 1>(k, a + i * lda, lda, b + j * ldb, ldb, c + i * ldc + j, ldc);
        }
    }
    for (; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            dot_block<1, 1>(k, a + i * lda, lda, b + j * ldb, ldb, c + i * ldc + j, ldc);
        }
    }
}

// exp(x) for x clamped to [-700, 700]: x = n ln2 + r with |r| <= ln2/2,
// degree-13 Taylor polynomial for exp(r), then scaled by 2^n.
inline __m512d exp_pd(__m512d x) {
    x = _mm512_min_pd(_mm512_max_pd(x, _mm512_set1_pd(-700.0)), _mm512_set1_pd(700.0));
    const __m512d n = _mm512_roundscale_pd(_mm512_mul_pd(x, _mm512_set1_pd(1.4426950408889634)),
                                           _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    __m512d r = _mm512_fnmadd_pd(n, _mm512_set1_pd(6.93147180369123816490e-01), x);
    r = _mm512_fnmadd_pd(n, _mm512_set1_pd(1.90821492927058770002e-10), r);

    __m512d p = _mm512_set1_pd(1.0 / 6227020800.0);  // 1/13!
    p = _mm512_fmadd_pd(p, r, _mm512_set1_pd(1.0 / 479001600.0));
    p = _mm512_fmadd_pd(p, r, _mm512_set1_pd(1.0 / 39916800.0));
    p = _mm512_fmadd_pd(p, r, _mm512_set1_pd(1.0 / 3628800.0));
    p = _mm512_fmadd_pd(p, r, _mm512_set1_pd(1.0 / 362880.0));
    p = _mm512_fmadd_pd(p, r, _mm512_set1_pd(1.0 / 40320.0));
    p = _mm512_fmadd_pd(p, r, _mm512_set1_pd(1.0 / 5040.0));
    p = _mm512_fmadd_pd(p, r, _mm512_set1_pd(1.0 / 720.0));
    p = _mm512_fmadd_pd(p, r, _mm512_set1_pd(1.0 / 120.0));
    p = _mm512_fmadd_pd(p, r, _mm512_set1_pd(1.0 / 24.0));
    p = _mm512_fmadd_pd(p, r, _mm512_set1_pd(1.0 / 6.0));
    p = _mm512_fmadd_pd(p, r, _mm512_set1_pd(0.5));
    p = _mm512_fmadd_pd(p, r, _mm512_set1_pd(1.0));
    p = _mm512_fmadd_pd(p, r, _mm512_set1_pd(1.0));
    return _mm512_scalef_pd(p, n);
}

void sigmoid(double* x, std::size_t n) {
    const __m512d one = _mm512_set1_pd(1.0);
    for (std::size_t i = 0; i < n; i += 8) {
        const __mmask8 m = tail_mask(n - i);
        const __m512d v = _mm512_maskz_loadu_pd(m, x + i);
        const __m512d e = exp_pd(_mm512_sub_pd(_mm512_setzero_pd(), v));
        _mm512_mask_storeu_pd(x + i, m, _mm512_div_pd(one, _mm512_add_pd(one, e)));
    }
}

void tanh_vec(double* x, std::size_t n) {
    const __m512d one = _mm512_set1_pd(1.0);
    const __m512i sign = _mm512_set1_epi64(static_cast<long long>(0x8000000000000000ULL));
    for (std::size_t i = 0; i < n; i += 8) {
        const __mmask8 m = tail_mask(n - i);
        const __m512d v = _mm512_maskz_loadu_pd(m, x + i);
        const __m512i bits = _mm512_castpd_si512(v);
        const __m512i s = _mm512_and_si512(bits, sign);
        const __m512d mag = _mm512_castsi512_pd(_mm512_andnot_si512(sign, bits));
        const __m512d e = exp_pd(_mm512_mul_pd(mag, _mm512_set1_pd(-2.0)));
        const __m512d t = _mm512_div_pd(_mm512_sub_pd(one, e), _mm512_add_pd(one, e));
        _mm512_mask_storeu_pd(x + i, m, _mm512_castsi512_pd(_mm512_or_si512(_mm512_castpd_si512(t), s)));
    }
}

constexpr KernelTable kAvx512{"avx512", gemm_nn, gemm_nt, gemm_tn, sigmoid, tanh_vec};

}  // namespace

const KernelTable& avx512_table() {
    return kAvx512;
}

}  // namespace clmac::kernels
