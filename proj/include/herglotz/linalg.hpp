#pragma once

#include <cstddef>
#include <vector>

#include "herglotz/errors.hpp"

namespace herglotz::densela {

struct SingularMatrixError : Error {
    using Error::Error;
};

/// Row-major dense matrix. The per-step systems are tiny (dof plus
/// constraint counts), so everything is assembled fresh and solved directly.
class Matrix {
public:
    Matrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

private:
    std::size_t rows_, cols_;
    std::vector<double> data_;
};

/// Gaussian elimination with partial pivoting. Throws SingularMatrixError
/// when a pivot falls below 1e-12 times the largest initial entry — for the
/// assembled systems this signals a degenerate Lagrangian or constraint
/// configuration. Non-finite entries are rejected up front.
std::vector<double> solve(const Matrix& a, const std::vector<double>& b);

/// Number of pivots above tol times the largest initial entry after row
/// echelon reduction.
std::size_t rank_estimate(const Matrix& a, double tol);

std::vector<double> multiply(const Matrix& a, const std::vector<double>& x);

}  // namespace herglotz::densela
