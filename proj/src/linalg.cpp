#include "herglotz/linalg.hpp"

#include <cmath>
#include <utility>

namespace herglotz::densela {

namespace {

double max_abs_entry(const Matrix& a) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) m = std::max(m, std::abs(a(i, j)));
    return m;
}

void require_finite(const Matrix& a, const std::vector<double>* b) {
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            if (!std::isfinite(a(i, j))) throw Error("non-finite matrix entry");
    if (b)
        for (double v : *b)
            if (!std::isfinite(v)) throw Error("non-finite right-hand side entry");
}

}  // namespace

std::vector<double> solve(const Matrix& a, const std::vector<double>& b) {
    if (a.rows() != a.cols()) throw Error("solve: matrix not square");
    if (b.size() != a.rows()) throw Error("solve: right-hand side size mismatch");
    require_finite(a, &b);

    const std::size_t n = a.rows();
    const double pivot_floor = 1e-12 * max_abs_entry(a);

    Matrix m = a;
    std::vector<double> x = b;
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(m(r, col)) > std::abs(m(piv, col))) piv = r;
        if (!(std::abs(m(piv, col)) > pivot_floor))
            throw SingularMatrixError("singular matrix: pivot " + std::to_string(m(piv, col)) +
                                      " at column " + std::to_string(col));
        if (piv != col) {
            for (std::size_t j = col; j < n; ++j) std::swap(m(piv, j), m(col, j));
            std::swap(x[piv], x[col]);
        }
        for (std::size_t r = col + 1; r < n; ++r) {
            double f = m(r, col) / m(col, col);
            if (f == 0.0) continue;
            for (std::size_t j = col; j < n; ++j) m(r, j) -= f * m(col, j);
            x[r] -= f * x[col];
        }
    }
    for (std::size_t i = n; i-- > 0;) {
        double acc = x[i];
        for (std::size_t j = i + 1; j < n; ++j) acc -= m(i, j) * x[j];
        x[i] = acc / m(i, i);
    }
    return x;
}

std::size_t rank_estimate(const Matrix& a, double tol) {
    require_finite(a, nullptr);
    const double floor = tol * max_abs_entry(a);

    Matrix m = a;
    const std::size_t rows = m.rows(), cols = m.cols();
    std::size_t rank = 0;
    std::size_t row = 0;
    for (std::size_t col = 0; col < cols && row < rows; ++col) {
        std::size_t piv = row;
        for (std::size_t r = row + 1; r < rows; ++r)
            if (std::abs(m(r, col)) > std::abs(m(piv, col))) piv = r;
        if (!(std::abs(m(piv, col)) > floor)) continue;
        if (piv != row)
            for (std::size_t j = 0; j < cols; ++j) std::swap(m(piv, j), m(row, j));
        for (std::size_t r = row + 1; r < rows; ++r) {
            double f = m(r, col) / m(row, col);
            for (std::size_t j = col; j < cols; ++j) m(r, j) -= f * m(row, j);
        }
        ++rank;
        ++row;
    }
    return rank;
}

std::vector<double> multiply(const Matrix& a, const std::vector<double>& x) {
    if (x.size() != a.cols()) throw Error("multiply: size mismatch");
    std::vector<double> out(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) acc += a(i, j) * x[j];
        out[i] = acc;
    }
    return out;
}

}  // namespace herglotz::densela
