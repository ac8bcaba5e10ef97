#include "glen/tensor.hpp"

#include <cmath>

#include "glen/error.hpp"

namespace glen {

void matmul(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate) {
    if (a.cols != b.rows) fail("numeric", "matmul shape mismatch");
    if (out.rows != a.rows || out.cols != b.cols) {
        out = Tensor(a.rows, b.cols);
    } else if (!accumulate) {
        out.zero();
    }
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = a.row_ptr(i);
        double* orow = out.row_ptr(i);
        for (int k = 0; k < a.cols; ++k) {
            double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = b.row_ptr(k);
            for (int j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    }
}

void matmul_nt(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate) {
    if (a.cols != b.cols) fail("numeric", "matmul_nt shape mismatch");
    if (out.rows != a.rows || out.cols != b.rows) {
        out = Tensor(a.rows, b.rows);
    } else if (!accumulate) {
        out.zero();
    }
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = a.row_ptr(i);
        double* orow = out.row_ptr(i);
        for (int j = 0; j < b.rows; ++j) {
            const double* brow = b.row_ptr(j);
            double s = 0.0;
            for (int k = 0; k < a.cols; ++k) s += arow[k] * brow[k];
            orow[j] += s;
        }
    }
}

void matmul_tn(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate) {
    if (a.rows != b.rows) fail("numeric", "matmul_tn shape mismatch");
    if (out.rows != a.cols || out.cols != b.cols) {
        out = Tensor(a.cols, b.cols);
    } else if (!accumulate) {
        out.zero();
    }
    for (int k = 0; k < a.rows; ++k) {
        const double* arow = a.row_ptr(k);
        const double* brow = b.row_ptr(k);
        for (int i = 0; i < a.cols; ++i) {
            double aki = arow[i];
            if (aki == 0.0) continue;
            double* orow = out.row_ptr(i);
            for (int j = 0; j < b.cols; ++j) orow[j] += aki * brow[j];
        }
    }
}

bool all_finite(const Tensor& t) {
    for (double x : t.v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

}  // namespace glen
