#include <cmath>

#include "copkit/kernels.hpp"

namespace copkit::kernels {
namespace {

double dot_s(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

double weighted_dot_s(const double* w, const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += w[i] * a[i] * b[i];
    return acc;
}

void axpy_s(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale_s(double alpha, double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

double sum_s(const double* x, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}

double max_abs_s(const double* x, std::size_t n) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m = std::max(m, std::fabs(x[i]));
    return m;
}

void mul_s(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void div_s(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] / b[i];
}

}  // namespace

const Backend& scalar_backend() {
    static const Backend b{dot_s, weighted_dot_s, axpy_s, scale_s,
                           sum_s, max_abs_s,      mul_s,  div_s,  "scalar"};
    return b;
}

void matvec(const Matrix& a, const double* x, double* y) {
    for (int i = 0; i < a.rows; ++i) y[i] = dot(a.row(i), x, static_cast<std::size_t>(a.cols));
}

void matvec_t(const Matrix& a, const double* x, double* y) {
    const std::size_t c = static_cast<std::size_t>(a.cols);
    for (std::size_t j = 0; j < c; ++j) y[j] = 0.0;
    for (int i = 0; i < a.rows; ++i) axpy(x[i], a.row(i), y, c);
}

}  // namespace copkit::kernels
