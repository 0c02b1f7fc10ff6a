#ifndef PSOX_LINALG_HPP
#define PSOX_LINALG_HPP

#include "psox/rng.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace psox {

using Vector = std::vector<double>;

/// Dense row-major matrix. Small sizes only (D <= a few hundred).
class Matrix
{
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill)
    {
    }

    static Matrix identity(std::size_t n)
    {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i)
            m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> data() const noexcept { return data_; }
    std::vector<double>& storage() noexcept { return data_; }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) noexcept
{
    assert(a.size() == b.size());
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += a[i] * b[i];
    return s;
}

inline double norm(std::span<const double> a) noexcept { return std::sqrt(dot(a, a)); }

/// out = m * v
inline void multiply(const Matrix& m, std::span<const double> v, std::span<double> out) noexcept
{
    assert(m.cols() == v.size() && m.rows() == out.size());
    for (std::size_t r = 0; r < m.rows(); ++r)
        out[r] = dot(m.row(r), v);
}

inline Vector multiply(const Matrix& m, std::span<const double> v)
{
    Vector out(m.rows());
    multiply(m, v, out);
    return out;
}

inline Matrix multiply(const Matrix& a, const Matrix& b)
{
    if (a.cols() != b.rows())
        throw std::invalid_argument("matrix product: inner dimensions differ");
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            for (std::size_t j = 0; j < b.cols(); ++j)
                c(i, j) += aik * b(k, j);
        }
    return c;
}

inline Matrix transpose(const Matrix& a)
{
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            t(j, i) = a(i, j);
    return t;
}

/// max |A^T A - I| entrywise.
inline double orthogonality_defect(const Matrix& a)
{
    const Matrix g = multiply(transpose(a), a);
    double worst = 0.0;
    for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j)
            worst = std::max(worst, std::abs(g(i, j) - (i == j ? 1.0 : 0.0)));
    return worst;
}

/// Orthonormalize the rows of a square Gaussian matrix (modified Gram-Schmidt,
/// two passes). Rows that collapse numerically are redrawn.
template <typename Rng>
Matrix random_orthogonal(std::size_t n, Rng& rng)
{
    Matrix q(n, n);
    auto& s = q.storage();
    for (std::size_t r = 0; r < n; ++r) {
        double* row = s.data() + r * n;
        for (;;) {
            for (std::size_t c = 0; c < n; ++c)
                row[c] = rng.normal();
            for (int pass = 0; pass < 2; ++pass)
                for (std::size_t p = 0; p < r; ++p) {
                    const double* prev = s.data() + p * n;
                    double proj = 0.0;
                    for (std::size_t c = 0; c < n; ++c)
                        proj += row[c] * prev[c];
                    for (std::size_t c = 0; c < n; ++c)
                        row[c] -= proj * prev[c];
                }
            double len = 0.0;
            for (std::size_t c = 0; c < n; ++c)
                len += row[c] * row[c];
            len = std::sqrt(len);
            if (len > 1e-8) {
                for (std::size_t c = 0; c < n; ++c)
                    row[c] /= len;
                break;
            }
        }
    }
    return q;
}

} // namespace psox

#endif // PSOX_LINALG_HPP
