#pragma once

#include <cstddef>
#include <vector>

namespace glen {

// Dense row-major matrix of doubles. Row vectors are 1 x c.
struct Tensor {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), 0.0) {}

    double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }

    double* row_ptr(int r) { return v.data() + static_cast<std::size_t>(r) * cols; }
    const double* row_ptr(int r) const { return v.data() + static_cast<std::size_t>(r) * cols; }

    std::size_t size() const { return v.size(); }
    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
    void zero() { std::fill(v.begin(), v.end(), 0.0); }
};

// out = a * b, or out += a * b when accumulate is set. Shapes must already agree.
void matmul(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate = false);

// out = a * b^T  (a: r x k, b: c x k, out: r x c)
void matmul_nt(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate = false);

// out = a^T * b  (a: k x r, b: k x c, out: r x c)
void matmul_tn(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate = false);

bool all_finite(const Tensor& t);

}  // namespace glen
