#pragma once

#include <cstddef>

#include "copkit/linalg.hpp"

// Data-parallel inner loops. Scalar reference implementations always exist;
// an AVX2 variant is selected at runtime when the CPU supports it. Both
// variants are equivalence-tested against each other.
namespace copkit::kernels {

struct Backend {
    double (*dot)(const double*, const double*, std::size_t);
    // sum_i w[i] * a[i] * b[i]
    double (*weighted_dot)(const double*, const double*, const double*, std::size_t);
    // y += alpha * x
    void (*axpy)(double, const double*, double*, std::size_t);
    void (*scale)(double, double*, std::size_t);
    double (*sum)(const double*, std::size_t);
    double (*max_abs)(const double*, std::size_t);
    void (*mul)(const double*, const double*, double*, std::size_t);
    void (*div)(const double*, const double*, double*, std::size_t);
    const char* name;
};

const Backend& scalar_backend();
#if defined(__x86_64__)
const Backend& avx2_backend();
bool avx2_available();
#endif

// Runtime-selected backend (scalar unless AVX2 is present).
const Backend& active_backend();
const char* active_backend_name();

inline double dot(const double* a, const double* b, std::size_t n) {
    return active_backend().dot(a, b, n);
}
inline double weighted_dot(const double* w, const double* a, const double* b, std::size_t n) {
    return active_backend().weighted_dot(w, a, b, n);
}
inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
    active_backend().axpy(alpha, x, y, n);
}
inline void scale(double alpha, double* x, std::size_t n) {
    active_backend().scale(alpha, x, n);
}
inline double sum(const double* x, std::size_t n) { return active_backend().sum(x, n); }
inline double max_abs(const double* x, std::size_t n) { return active_backend().max_abs(x, n); }
inline void mul(const double* a, const double* b, double* out, std::size_t n) {
    active_backend().mul(a, b, out, n);
}
inline void div(const double* a, const double* b, double* out, std::size_t n) {
    active_backend().div(a, b, out, n);
}

// y = A x
void matvec(const Matrix& a, const double* x, double* y);
// y = A^T x
void matvec_t(const Matrix& a, const double* x, double* y);

}  // namespace copkit::kernels
