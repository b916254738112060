#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace enfed {

// Dense row-major matrix. Just storage plus indexed access; the numeric
// kernels live next to the code that needs them.
template <class Real>
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<Real> a;

    Mat() = default;
    Mat(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, Real{0}) {}

    Real& operator()(std::size_t r, std::size_t c) { return a[r * cols + c]; }
    const Real& operator()(std::size_t r, std::size_t c) const { return a[r * cols + c]; }

    std::size_t size() const { return a.size(); }

    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

template <class To, class From>
Mat<To> mat_cast(const Mat<From>& m) {
    Mat<To> out(m.rows, m.cols);
    for (std::size_t i = 0; i < m.a.size(); ++i) out.a[i] = static_cast<To>(m.a[i]);
    return out;
}

}  // namespace enfed
