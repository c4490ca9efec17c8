#include "entk/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <sstream>

#include "entk/rng.hpp"

namespace entk {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

void validate_shape(const std::vector<std::size_t>& shape) {
    if (shape.empty() || shape.size() > 4) {
        throw Error(ErrorKind::Dimension,
                    "tensor rank must be between 1 and 4, got " + std::to_string(shape.size()));
    }
    for (std::size_t e : shape) {
        if (e == 0) throw Error(ErrorKind::Dimension, "tensor extents must be >= 1");
    }
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape_, std::vector<double> data_)
    : shape(std::move(shape_)), data(std::move(data_)) {
    validate_shape(shape);
    if (shape_product(shape) != data.size()) {
        throw Error(ErrorKind::Dimension,
                    "tensor data length " + std::to_string(data.size()) +
                        " does not match shape " + shape_str());
    }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
    validate_shape(shape);
    std::vector<double> data(shape_product(shape), 0.0);
    return Tensor(std::move(shape), std::move(data));
}

std::size_t Tensor::row_stride() const {
    std::size_t s = 1;
    for (std::size_t d = 1; d < shape.size(); ++d) s *= shape[d];
    return s;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

namespace detail {
void require_rank(const Tensor& t, std::size_t rank, const char* who) {
    if (t.rank() != rank) {
        throw Error(ErrorKind::Dimension,
                    std::string(who) + ": expected rank-" + std::to_string(rank) +
                        " tensor, got shape " + t.shape_str());
    }
}
}  // namespace detail

Tensor matmul(const Tensor& a, const Tensor& b) {
    detail::require_rank(a, 2, "matmul");
    detail::require_rank(b, 2, "matmul");
    const std::size_t m = a.shape[0], k = a.shape[1];
    if (b.shape[0] != k) {
        throw Error(ErrorKind::Dimension,
                    "matmul: inner extents mismatch " + a.shape_str() + " x " + b.shape_str());
    }
    const std::size_t n = b.shape[1];
    Tensor c = Tensor::zeros({m, n});
    // i-k-j loop order streams b row-major; each c(i,j) still accumulates in
    // ascending k, which is the mandated deterministic summation order.
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a.data.data() + i * k;
        double* crow = c.data.data() + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            const double* brow = b.data.data() + kk * n;
            for (std::size_t j = 0; j < n; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
    return c;
}

Tensor transpose(const Tensor& a) {
    detail::require_rank(a, 2, "transpose");
    Tensor t = Tensor::zeros({a.shape[1], a.shape[0]});
    for (std::size_t i = 0; i < a.shape[0]; ++i)
        for (std::size_t j = 0; j < a.shape[1]; ++j) t.at(j, i) = a.at(i, j);
    return t;
}

double frobenius_norm(const Tensor& a) {
    detail::require_rank(a, 2, "frobenius_norm");
    double s = 0.0;
    for (double v : a.data) s += v * v;
    return std::sqrt(s);
}

namespace {

constexpr std::size_t kPowerIterationCap = 10000;

double dot(const std::vector<double>& x, const std::vector<double>& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    return s;
}

double norm2(const std::vector<double>& x) { return std::sqrt(dot(x, x)); }

// w = m * v for a dense symmetric matrix held in a flat row-major buffer.
void matvec(const std::vector<double>& m, std::size_t n, const std::vector<double>& v,
            std::vector<double>& w) {
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        const double* row = m.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) s += row[j] * v[j];
        w[i] = s;
    }
}

}  // namespace

EigResult sym_eig_topk(const Tensor& a, std::size_t k, double tol) {
    detail::require_rank(a, 2, "sym_eig_topk");
    const std::size_t n = a.shape[0];
    if (a.shape[1] != n) {
        throw Error(ErrorKind::Dimension, "sym_eig_topk: matrix must be square, got " + a.shape_str());
    }
    if (k < 1 || k > n) {
        throw Error(ErrorKind::Dimension, "sym_eig_topk: k must be in [1, n]");
    }
    const double fro = frobenius_norm(a);
    double asym = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double d = a.at(i, j) - a.at(j, i);
            asym += 2.0 * d * d;
        }
    asym = std::sqrt(asym);
    if (fro > 0.0 && asym > 1e-9 * fro) {
        throw Error(ErrorKind::Symmetry,
                    "sym_eig_topk: input asymmetry " + std::to_string(asym / fro) +
                        " exceeds 1e-9 relative");
    }

    // Work on b = a + shift*I so the algebraically largest eigenvalue is
    // also the dominant one and plain power iteration returns top-by-value.
    // The shift is a coarse estimate of the dominant magnitude; |a|_F would
    // also be safe but compresses relative gaps and stalls convergence.
    GaussianStream gauss(0x5eedf00du);  // fixed internal seed: deterministic starts
    double shift = 0.0;
    {
        std::vector<double> v(n), w(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = gauss.next();
        double vn = norm2(v);
        for (std::size_t i = 0; i < n; ++i) v[i] /= vn;
        for (int it = 0; it < 100; ++it) {
            matvec(a.data, n, v, w);
            const double wn = norm2(w);
            if (wn == 0.0) break;
            shift = wn;
            for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / wn;
        }
        if (shift == 0.0) shift = fro > 0.0 ? fro : 1.0;
    }
    std::vector<double> b(a.data);
    for (std::size_t i = 0; i < n; ++i) b[i * n + i] += shift;

    EigResult out;
    std::vector<double> v(n), w(n), av(n);
    const double scale = fro > 0.0 ? fro : 1.0;

    for (std::size_t which = 0; which < k; ++which) {
        for (std::size_t i = 0; i < n; ++i) v[i] = gauss.next();
        // keep iterates orthogonal to already-found eigenvectors so the
        // rank-1 deflation stays clean
        for (const auto& u : out.vectors) {
            const double c = dot(u, v);
            for (std::size_t i = 0; i < n; ++i) v[i] -= c * u[i];
        }
        double vn = norm2(v);
        for (std::size_t i = 0; i < n; ++i) v[i] /= vn;

        double mu = 0.0;
        bool converged = false;
        double residual = 0.0;
        for (std::size_t it = 0; it < kPowerIterationCap; ++it) {
            // convergence is judged against the original matrix, which is
            // exactly the invariant callers rely on
            matvec(a.data, n, v, av);
            mu = dot(v, av);
            residual = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double r = av[i] - mu * v[i];
                residual += r * r;
            }
            residual = std::sqrt(residual);
            if (residual <= tol * scale) {
                converged = true;
                break;
            }
            matvec(b, n, v, w);
            for (const auto& u : out.vectors) {
                const double c = dot(u, w);
                for (std::size_t i = 0; i < n; ++i) w[i] -= c * u[i];
            }
            const double wn = norm2(w);
            if (wn == 0.0) {  // v spans b's nullspace: accept the Rayleigh pair
                converged = true;
                break;
            }
            for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / wn;
        }
        if (!converged) {
            throw Error(ErrorKind::Convergence,
                        "sym_eig_topk: power iteration residual " + std::to_string(residual) +
                            " after " + std::to_string(kPowerIterationCap) + " iterations");
        }
        out.values.push_back(mu);
        out.vectors.push_back(v);
        // deflate: b <- b - (mu + shift) v v^T
        const double bmu = mu + shift;
        for (std::size_t i = 0; i < n; ++i) {
            const double vi = v[i];
            double* row = b.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) row[j] -= bmu * vi * v[j];
        }
    }
    return out;
}

Tensor cholesky_solve(const Tensor& a, const Tensor& rhs) {
    detail::require_rank(a, 2, "cholesky_solve");
    detail::require_rank(rhs, 2, "cholesky_solve");
    const std::size_t n = a.shape[0];
    if (a.shape[1] != n) {
        throw Error(ErrorKind::Dimension, "cholesky_solve: matrix must be square");
    }
    if (rhs.shape[0] != n) {
        throw Error(ErrorKind::Dimension,
                    "cholesky_solve: rhs rows " + std::to_string(rhs.shape[0]) +
                        " do not match matrix order " + std::to_string(n));
    }
    const std::size_t c = rhs.shape[1];

    // Lower-triangular factor, a = L L^T.
    std::vector<double> L(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = a.at(i, j);
            for (std::size_t p = 0; p < j; ++p) s -= L[i * n + p] * L[j * n + p];
            if (i == j) {
                if (s <= 0.0) {
                    throw Error(ErrorKind::NotPositiveDefinite,
                                "cholesky_solve: non-positive pivot at index " + std::to_string(i));
                }
                L[i * n + i] = std::sqrt(s);
            } else {
                L[i * n + j] = s / L[j * n + j];
            }
        }
    }

    Tensor x = rhs;
    // forward substitution: L y = rhs
    for (std::size_t col = 0; col < c; ++col) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = x.at(i, col);
            for (std::size_t p = 0; p < i; ++p) s -= L[i * n + p] * x.at(p, col);
            x.at(i, col) = s / L[i * n + i];
        }
        // back substitution: L^T x = y
        for (std::size_t ii = n; ii-- > 0;) {
            double s = x.at(ii, col);
            for (std::size_t p = ii + 1; p < n; ++p) s -= L[p * n + ii] * x.at(p, col);
            x.at(ii, col) = s / L[ii * n + ii];
        }
    }
    return x;
}

}  // namespace entk
