#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "entk/error.hpp"

namespace entk {

// Dense row-major n-dimensional array of doubles. Rank <= 4, extents >= 1.
// The universal numeric carrier for the whole library; 64-bit in memory
// always (32-bit exists only as an on-disk storage option).
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<std::size_t> shape_, std::vector<double> data_);

    static Tensor zeros(std::vector<std::size_t> shape);

    std::size_t rank() const { return shape.size(); }
    std::size_t size() const { return data.size(); }

    std::size_t extent(std::size_t dim) const { return shape.at(dim); }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    // Rank-2 element access.
    double& at(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }

    // Contiguous row view of a rank>=2 tensor, i indexes the leading extent.
    const double* row_ptr(std::size_t i) const { return data.data() + i * row_stride(); }
    double* row_ptr(std::size_t i) { return data.data() + i * row_stride(); }
    std::size_t row_stride() const;

    std::string shape_str() const;
};

// Standard matrix product with deterministic per-entry summation
// (ascending k), so chunked and monolithic kernels compare bit-exactly.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor transpose(const Tensor& a);

double frobenius_norm(const Tensor& a);

struct EigResult {
    std::vector<double> values;        // descending
    std::vector<std::vector<double>> vectors;  // vectors[i] pairs with values[i]
};

// Top-k eigenvalues of a symmetric matrix via shifted power iteration with
// rank-1 deflation. Residual criterion: ||A v - lambda v|| <= tol * ||A||_F.
EigResult sym_eig_topk(const Tensor& a, std::size_t k, double tol);

// Solve a * x = rhs for SPD a via Cholesky factorization.
Tensor cholesky_solve(const Tensor& a, const Tensor& rhs);

namespace detail {
void require_rank(const Tensor& t, std::size_t rank, const char* who);
}

}  // namespace entk
