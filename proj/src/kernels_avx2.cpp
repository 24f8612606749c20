// AVX2 variants of the streaming kernels. Compiled with -mavx2 in its own
// translation unit; only reached through the runtime dispatch in
// kernels_dispatch.cpp after a cpuid check.

#include "copkit/kernels.hpp"

#if defined(__x86_64__)

#include <immintrin.h>

#include <cmath>

namespace copkit::kernels {
namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d h = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, h));
}

double dot_v(const double* a, const double* b, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    }
    double r = hsum(acc);
    for (; i < n; ++i) r += a[i] * b[i];
    return r;
}

double weighted_dot_v(const double* w, const double* a, const double* b, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d p = _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
        acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(w + i), p));
    }
    double r = hsum(acc);
    for (; i < n; ++i) r += w[i] * a[i] * b[i];
    return r;
}

void axpy_v(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d t = _mm256_add_pd(_mm256_loadu_pd(y + i),
                                  _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
        _mm256_storeu_pd(y + i, t);
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale_v(double alpha, double* x, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(x + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
    }
    for (; i < n; ++i) x[i] *= alpha;
}

double sum_v(const double* x, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
    double r = hsum(acc);
    for (; i < n; ++i) r += x[i];
    return r;
}

double max_abs_v(const double* x, std::size_t n) {
    const __m256d mask = _mm256_castsi256_pd(_mm256_set1_epi64x(0x7fffffffffffffffLL));
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc = _mm256_max_pd(acc, _mm256_and_pd(mask, _mm256_loadu_pd(x + i)));
    }
    double tmp[4];
    _mm256_storeu_pd(tmp, acc);
    double m = std::max(std::max(tmp[0], tmp[1]), std::max(tmp[2], tmp[3]));
    for (; i < n; ++i) m = std::max(m, std::fabs(x[i]));
    return m;
}

void mul_v(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void div_v(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_div_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] / b[i];
}

}  // namespace

const Backend& avx2_backend() {
    static const Backend b{dot_v, weighted_dot_v, axpy_v, scale_v,
                           sum_v, max_abs_v,      mul_v,  div_v,  "avx2"};
    return b;
}

}  // namespace copkit::kernels

#endif  // __x86_64__
