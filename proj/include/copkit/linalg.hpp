#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace copkit {

using Vec = std::vector<double>;

// Dense row-major matrix. Plain storage; heavy factorizations go through
// Eigen maps in the .cpp files, streaming products go through the kernels.
struct Matrix {
    int rows = 0;
    int cols = 0;
    Vec data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

    double& at(int i, int j) { return data[static_cast<size_t>(i) * cols + j]; }
    double at(int i, int j) const { return data[static_cast<size_t>(i) * cols + j]; }
    const double* row(int i) const { return data.data() + static_cast<size_t>(i) * cols; }
    double* row(int i) { return data.data() + static_cast<size_t>(i) * cols; }

    static Matrix identity(int n) {
        Matrix m(n, n);
        for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
        return m;
    }
};

}  // namespace copkit
