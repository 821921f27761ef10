// AVX2 + FMA variants. This file alone is compiled with -mavx2 -mfma; callers
// reach it only through the dispatch table after a CPU feature check.

#include <immintrin.h>

#include <cmath>

#include "clmac/kernels.hpp"

namespace clmac::kernels {

namespace {

// A(i, p) = a[i * rs + p * cs]; covers both A and A^T operands.
// 4 rows x 8 columns of C live in eight registers across the k loop.
void gemm_strided(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t rs, std::size_t cs,
                  const double* b, std::size_t ldb, double* c, std::size_t ldc) {
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
        const double* a0 = a + (i + 0) * rs;
        const double* a1 = a + (i + 1) * rs;
        const double* a2 = a + (i + 2) * rs;
        const double* a3 = a + (i + 3) * rs;
        double* c0 = c + (i + 0) * ldc;
        double* c1 = c + (i + 1) * ldc;
        double* c2 = c + (i + 2) * ldc;
        double* c3 = c + (i + 3) * ldc;
        std::size_t j = 0;
        for (; j + 8 <= n; j += 8) {
            __m256d r00 = _mm256_loadu_pd(c0 + j), r01 = _mm256_loadu_pd(c0 + j + 4);
            __m256d r10 = _mm256_loadu_pd(c1 + j), r11 = _mm256_loadu_pd(c1 + j + 4);
            __m256d r20 = _mm256_loadu_pd(c2 + j), r21 = _mm256_loadu_pd(c2 + j + 4);
            __m256d r30 = _mm256_loadu_pd(c3 + j), r31 = _mm256_loadu_pd(c3 + j + 4);
            for (std::size_t p = 0; p < k; ++p) {
                const double* brow = b + p * ldb + j;
                const __m256d b0 = _mm256_loadu_pd(brow);
                const __m256d b1 = _mm256_loadu_pd(brow + 4);
                const std::size_t ap = p * cs;
                __m256d av = _mm256_broadcast_sd(a0 + ap);
                r00 = _mm256_fmadd_pd(av, b0, r00);
                r01 = _mm256_fmadd_pd(av, b1, r01);
                av = _mm256_broadcast_sd(a1 + ap);
                r10 = _mm256_fmadd_pd(av, b0, r10);
                r11 = _mm256_fmadd_pd(av, b1, r11);
                av = _mm256_broadcast_sd(a2 + ap);
                r20 = _mm256_fmadd_pd(av, b0, r20);
                r21 = _mm256_fmadd_pd(av, b1, r21);
                av = _mm256_broadcast_sd(a3 + ap);
                r30 = _mm256_fmadd_pd(av, b0, r30);
                r31 = _mm256_fmadd_pd(av, b1, r31);
            }
            _mm256_storeu_pd(c0 + j, r00), _mm256_storeu_pd(c0 + j + 4, r01);
            _mm256_storeu_pd(c1 + j, r10), _mm256_storeu_pd(c1 + j + 4, r11);
            _mm256_storeu_pd(c2 + j, r20), _mm256_storeu_pd(c2 + j + 4, r21);
            _mm256_storeu_pd(c3 + j, r30), _mm256_storeu_pd(c3 + j + 4, r31);
        }
        for (; j + 4 <= n; j += 4) {
            __m256d r0 = _mm256_loadu_pd(c0 + j);
            __m256d r1 = _mm256_loadu_pd(c1 + j);
            __m256d r2 = _mm256_loadu_pd(c2 + j);
            __m256d r3 = _mm256_loadu_pd(c3 + j);
            for (std::size_t p = 0; p < k; ++p) {
                const __m256d bv = _mm256_loadu_pd(b + p * ldb + j);
                const std::size_t ap = p * cs;
                r0 = _mm256_fmadd_pd(_mm256_broadcast_sd(a0 + ap), bv, r0);
                r1 = _mm256_fmadd_pd(_mm256_broadcast_sd(a1 + ap), bv, r1);
                r2 = _mm256_fmadd_pd(_mm256_broadcast_sd(a2 + ap), bv, r2);
                r3 = _mm256_fmadd_pd(_mm256_broadcast_sd(a3 + ap), bv, r3);
            }
            _mm256_storeu_pd(c0 + j, r0);
            _mm256_storeu_pd(c1 + j, r1);
            _mm256_storeu_pd(c2 + j, r2);
            _mm256_storeu_pd(c3 + j, r3);
        }
        for (; j < n; ++j) {
            double s0 = c0[j], s1 = c1[j], s2 = c2[j], s3 = c3[j];
            for (std::size_t p = 0; p < k; ++p) {
                const double bv = b[p * ldb + j];
                const std::size_t ap = p * cs;
                s0 = std::fma(a0[ap], bv, s0);
                s1 = std::fma(a1[ap], bv, s1);
                s2 = std::fma(a2[ap], bv, s2);
                s3 = std::fma(a3[ap], bv, s3);
            }
            c0[j] = s0, c1[j] = s1, c2[j] = s2, c3[j] = s3;
        }
    }
    for (; i < m; ++i) {
        const double* ai = a + i * rs;
        double* ci = c + i * ldc;
        std::size_t j = 0;
        for (; j + 4 <= n; j += 4) {
            __m256d r = _mm256_loadu_pd(ci + j);
            for (std::size_t p = 0; p < k; ++p) {
                r = _mm256_fmadd_pd(_mm256_broadcast_sd(ai + p * cs), _mm256_loadu_pd(b + p * ldb + j), r);
            }
            _mm256_storeu_pd(ci + j, r);
        }
        for (; j < n; ++j) {
            double s = ci[j];
            for (std::size_t p = 0; p < k; ++p) {
                s = std::fma(ai[p * cs], b[p * ldb + j], s);
            }
            ci[j] = s;
        }
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

// Lanes of the result are the horizontal sums of v0..v3.
inline __m256d hsum4(__m256d v0, __m256d v1, __m256d v2, __m256d v3) {
    const __m256d t0 = _mm256_hadd_pd(v0, v1);
    const __m256d t1 = _mm256_hadd_pd(v2, v3);
    const __m256d lo_hi = _mm256_permute2f128_pd(t0, t1, 0x21);
    const __m256d mixed = _mm256_blend_pd(t0, t1, 0b1100);
    return _mm256_add_pd(lo_hi, mixed);
}

inline double hsum(__m256d v) {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d s = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

// Row-by-row dot products; 2 rows of A against 4 rows of B per block.
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
             std::size_t ldb, double* c, std::size_t ldc) {
    const std::size_t kv = k & ~std::size_t{3};
    std::size_t i = 0;
    for (; i + 2 <= m; i += 2) {
        const double* a0 = a + i * lda;
        const double* a1 = a0 + lda;
        std::size_t j = 0;
        for (; j + 4 <= n; j += 4) {
            const double* b0 = b + j * ldb;
            const double* b1 = b0 + ldb;
            const double* b2 = b1 + ldb;
            const double* b3 = b2 + ldb;
            __m256d s00 = _mm256_setzero_pd(), s01 = s00, s02 = s00, s03 = s00;
            __m256d s10 = s00, s11 = s00, s12 = s00, s13 = s00;
            for (std::size_t p = 0; p < kv; p += 4) {
                const __m256d x0 = _mm256_loadu_pd(a0 + p);
                const __m256d x1 = _mm256_loadu_pd(a1 + p);
                __m256d y = _mm256_loadu_pd(b0 + p);
                s00 = _mm256_fmadd_pd(x0, y, s00);
                s10 = _mm256_fmadd_pd(x1, y, s10);
                y = _mm256_loadu_pd(b1 + p);
                s01 = _mm256_fmadd_pd(x0, y, s01);
                s11 = _mm256_fmadd_pd(x1, y, s11);
                y = _mm256_loadu_pd(b2 + p);
                s02 = _mm256_fmadd_pd(x0, y, s02);
                s12 = _mm256_fmadd_pd(x1, y, s12);
                y = _mm256_loadu_pd(b3 + p);
                s03 = _mm256_fmadd_pd(x0, y, s03);
                s13 = _mm256_fmadd_pd(x1, y, s13);
            }
            __m256d r0 = hsum4(s00, s01, s02, s03);
            __m256d r1 = hsum4(s10, s11, s12, s13);
            if (kv != k) {
                alignas(32) double t0[4] = {0, 0, 0, 0};
                alignas(32) double t1[4] = {0, 0, 0, 0};
                for (std::size_t p = kv; p < k; ++p) {
                    t0[0] += a0[p] * b0[p], t0[1] += a0[p] * b1[p], t0[2] += a0[p] * b2[p], t0[3] += a0[p] * b3[p];
                    t1[0] += a1[p] * b0[p], t1[1] += a1[p] * b1[p], t1[2] += a1[p] * b2[p], t1[3] += a1[p] * b3[p];
                }
                r0 = _mm256_add_pd(r0, _mm256_load_pd(t0));
                r1 = _mm256_add_pd(r1, _mm256_load_pd(t1));
            }
            double* c0 = c + i * ldc + j;
            double* c1 = c0 + ldc;
            _mm256_storeu_pd(c0, _mm256_add_pd(_mm256_loadu_pd(c0), r0));
            _mm256_storeu_pd(c1, _mm256_add_pd(_mm256_loadu_pd(c1), r1));
        }
        for (; j < n; ++j) {
            const double* bj = b + j * ldb;
            __m256d s0 = _mm256_setzero_pd(), s1 = s0;
            for (std::size_t p = 0; p < kv; p += 4) {
                const __m256d y = _mm256_loadu_pd(bj + p);
                s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a0 + p), y, s0);
                s1 = _mm256_fmadd_pd(_mm256_loadu_pd(a1 + p), y, s1);
            }
            double t0 = hsum(s0), t1 = hsum(s1);
            for (std::size_t p = kv; p < k; ++p) {
                t0 += a0[p] * bj[p];
                t1 += a1[p] * bj[p];
            }
            c[i * ldc + j] += t0;
            c[(i + 1) * ldc + j] += t1;
        }
    }
    for (; i < m; ++i) {
        const double* ai = a + i * lda;
        for (std::size_t j = 0; j < n; ++j) {
            const double* bj = b + j * ldb;
            __m256d s = _mm256_setzero_pd();
            for (std::size_t p = 0; p < kv; p += 4) {
                s = _mm256_fmadd_pd(_mm256_loadu_pd(ai + p), _mm256_loadu_pd(bj + p), s);
            }
            double t = hsum(s);
            for (std::size_t p = kv; p < k; ++p) {
                t += ai[p] * bj[p];
            }
            c[i * ldc + j] += t;
        }
    }
}

// exp(x) for x clamped to [-700, 700]: x = n ln2 + r with |r| <= ln2/2,
// degree-13 Taylor polynomial for exp(r), 2^n assembled in the exponent bits.
inline __m256d exp_pd(__m256d x) {
    x = _mm256_min_pd(_mm256_max_pd(x, _mm256_set1_pd(-700.0)), _mm256_set1_pd(700.0));
    const __m256d n = _mm256_round_pd(_mm256_mul_pd(x, _mm256_set1_pd(1.4426950408889634)),
                                      _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    __m256d r = _mm256_fnmadd_pd(n, _mm256_set1_pd(6.93147180369123816490e-01), x);
    r = _mm256_fnmadd_pd(n, _mm256_set1_pd(1.90821492927058770002e-10), r);

    __m256d p = _mm256_set1_pd(1.0 / 6227020800.0);  // 1/13!
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 479001600.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 39916800.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 3628800.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 362880.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 40320.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 5040.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 720.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 120.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 24.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 6.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(0.5));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));

    const __m128i ni = _mm256_cvtpd_epi32(n);
    const __m256i biased = _mm256_cvtepi32_epi64(_mm_add_epi32(ni, _mm_set1_epi32(1023)));
    const __m256d scale = _mm256_castsi256_pd(_mm256_slli_epi64(biased, 52));
    return _mm256_mul_pd(p, scale);
}

void sigmoid(double* x, std::size_t n) {
    const __m256d one = _mm256_set1_pd(1.0);
    const __m256d sign = _mm256_set1_pd(-0.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d v = _mm256_loadu_pd(x + i);
        const __m256d e = exp_pd(_mm256_xor_pd(v, sign));
        _mm256_storeu_pd(x + i, _mm256_div_pd(one, _mm256_add_pd(one, e)));
    }
    for (; i < n; ++i) {
        x[i] = 1.0 / (1.0 + std::exp(-x[i]));
    }
}

void tanh_vec(double* x, std::size_t n) {
    const __m256d one = _mm256_set1_pd(1.0);
    const __m256d sign = _mm256_set1_pd(-0.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d v = _mm256_loadu_pd(x + i);
        const __m256d s = _mm256_and_pd(v, sign);
        const __m256d mag = _mm256_andnot_pd(sign, v);
        const __m256d e = exp_pd(_mm256_mul_pd(mag, _mm256_set1_pd(-2.0)));
        const __m256d t = _mm256_div_pd(_mm256_sub_pd(one, e), _mm256_add_pd(one, e));
        _mm256_storeu_pd(x + i, _mm256_or_pd(t, s));
    }
    for (; i < n; ++i) {
        x[i] = std::tanh(x[i]);
    }
}

constexpr KernelTable kAvx2{"avx2", gemm_nn, gemm_nt, gemm_tn, sigmoid, tanh_vec};

}  // namespace

const KernelTable& avx2_table() {
    return kAvx2;
}

}  // namespace clmac::kernels
