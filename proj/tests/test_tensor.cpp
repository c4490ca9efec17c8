#include <doctest.h>

#include <cmath>

#include "entk/tensor.hpp"

#include "oracles.hpp"

using namespace entk;

TEST_CASE("matmul identity and hand arithmetic") {
    const Tensor eye({2, 2}, {1, 0, 0, 1});
    const Tensor b({2, 2}, {3, 4, 5, 6});
    CHECK(matmul(eye, b).data == b.data);

    const Tensor row({1, 2}, {1, 2});
    const Tensor col({2, 1}, {3, 4});
    CHECK(matmul(row, col).data == std::vector<double>{11});
}

TEST_CASE("matmul matches the triple-loop oracle to 0 ULP") {
    const Tensor a = oracles::random_tensor({7, 5}, 101);
    const Tensor b = oracles::random_tensor({5, 3}, 102);
    const Tensor expect = oracles::matmul_triple_loop(a, b);
    CHECK(matmul(a, b).data == expect.data);
}

TEST_CASE("matmul rejects mismatched shapes naming both") {
    const Tensor a = Tensor::zeros({2, 3});
    const Tensor b = Tensor::zeros({4, 2});
    try {
        matmul(a, b);
        FAIL("expected a dimension error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Dimension);
        const std::string msg = e.what();
        CHECK(msg.find("[2x3]") != std::string::npos);
        CHECK(msg.find("[4x2]") != std::string::npos);
    }
}

TEST_CASE("matmul associativity on random triples") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const Tensor a = oracles::random_tensor({4, 6}, seed);
        const Tensor b = oracles::random_tensor({6, 3}, seed + 10);
        const Tensor c = oracles::random_tensor({3, 5}, seed + 20);
        const Tensor left = matmul(matmul(a, b), c);
        const Tensor right = matmul(a, matmul(b, c));
        double num = 0, den = 0;
        for (std::size_t i = 0; i < left.data.size(); ++i) {
            num += (left.data[i] - right.data[i]) * (left.data[i] - right.data[i]);
            den += left.data[i] * left.data[i];
        }
        CHECK(std::sqrt(num) <= 1e-10 * std::sqrt(den));
    }
}

TEST_CASE("frobenius norm basics") {
    Tensor eye = Tensor::zeros({3, 3});
    for (int i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
    CHECK(frobenius_norm(eye) == doctest::Approx(std::sqrt(3.0)).epsilon(1e-15));
    CHECK(frobenius_norm(Tensor::zeros({4, 2})) == 0.0);
    CHECK(frobenius_norm(Tensor({1, 2}, {3, 4})) == doctest::Approx(5.0).epsilon(1e-15));
}

TEST_CASE("frobenius norm equals sqrt(trace(A^T A))") {
    const Tensor a = oracles::random_tensor({6, 4}, 7);
    const Tensor ata = matmul(transpose(a), a);
    double trace = 0.0;
    for (std::size_t i = 0; i < 4; ++i) trace += ata.at(i, i);
    CHECK(frobenius_norm(a) == doctest::Approx(std::sqrt(trace)).epsilon(1e-12));
}

TEST_CASE("sym_eig_topk analytic pairs") {
    const Tensor a({2, 2}, {2, 1, 1, 2});
    const auto eig = sym_eig_topk(a, 2, 1e-12);
    CHECK(eig.values[0] == doctest::Approx(3.0).epsilon(1e-10));
    CHECK(eig.values[1] == doctest::Approx(1.0).epsilon(1e-10));

    Tensor d = Tensor::zeros({3, 3});
    d.at(0, 0) = 5;
    d.at(1, 1) = 2;
    d.at(2, 2) = 1;
    CHECK(sym_eig_topk(d, 1, 1e-12).values[0] == doctest::Approx(5.0).epsilon(1e-10));
}

TEST_CASE("sym_eig_topk matches the Jacobi oracle on a random symmetric 10x10") {
    Tensor a = oracles::random_tensor({10, 10}, 33);
    for (std::size_t i = 0; i < 10; ++i)
        for (std::size_t j = 0; j < i; ++j) a.at(i, j) = a.at(j, i);
    const auto expect = oracles::jacobi_eigenvalues(a);
    const auto got = sym_eig_topk(a, 3, 1e-12);
    for (int k = 0; k < 3; ++k) CHECK(got.values[k] == doctest::Approx(expect[k]).epsilon(1e-8));
}

TEST_CASE("sym_eig_topk results are non-increasing with small residuals") {
    Tensor a = oracles::random_tensor({8, 8}, 55);
    for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t j = 0; j < i; ++j) a.at(i, j) = a.at(j, i);
    const double tol = 1e-10;
    const auto eig = sym_eig_topk(a, 4, tol);
    const double fro = frobenius_norm(a);
    for (std::size_t k = 0; k < eig.values.size(); ++k) {
        if (k > 0) CHECK(eig.values[k] <= eig.values[k - 1] + 1e-12);
        // residual invariant for the returned eigenvector
        double resid = 0.0;
        for (std::size_t i = 0; i < 8; ++i) {
            double av = 0.0;
            for (std::size_t j = 0; j < 8; ++j) av += a.at(i, j) * eig.vectors[k][j];
            const double r = av - eig.values[k] * eig.vectors[k][i];
            resid += r * r;
        }
        CHECK(std::sqrt(resid) <= tol * fro * 1.001);
    }
}

TEST_CASE("sym_eig_topk rejects asymmetric input") {
    const Tensor a({2, 2}, {1, 2, 0, 1});
    CHECK_THROWS_AS(sym_eig_topk(a, 1, 1e-10), Error);
}

TEST_CASE("sym_eig_topk reports non-convergence with the residual") {
    Tensor a = oracles::random_tensor({6, 6}, 91);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < i; ++j) a.at(i, j) = a.at(j, i);
    try {
        sym_eig_topk(a, 1, 1e-30);  // below the rounding floor: forces the cap
        FAIL("expected a convergence error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Convergence);
        CHECK(std::string(e.what()).find("residual") != std::string::npos);
    }
}

TEST_CASE("cholesky_solve identity and diagonal") {
    Tensor eye = Tensor::zeros({2, 2});
    eye.at(0, 0) = eye.at(1, 1) = 1.0;
    const Tensor rhs({2, 1}, {7, 9});
    CHECK(cholesky_solve(eye, rhs).data == rhs.data);

    const Tensor d({2, 2}, {4, 0, 0, 9});
    const Tensor rhs2({2, 1}, {8, 27});
    const Tensor x = cholesky_solve(d, rhs2);
    CHECK(x.at(0, 0) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(x.at(1, 0) == doctest::Approx(3.0).epsilon(1e-14));
}

TEST_CASE("cholesky_solve residual contract on a random SPD system") {
    const Tensor a0 = oracles::random_tensor({8, 8}, 77);
    Tensor a = matmul(transpose(a0), a0);
    for (std::size_t i = 0; i < 8; ++i) a.at(i, i) += 1.0;
    const Tensor rhs = oracles::random_tensor({8, 2}, 78);
    const Tensor x = cholesky_solve(a, rhs);
    const Tensor ax = matmul(a, x);
    double resid = 0.0;
    for (std::size_t i = 0; i < ax.data.size(); ++i) {
        resid += (ax.data[i] - rhs.data[i]) * (ax.data[i] - rhs.data[i]);
    }
    resid = std::sqrt(resid);
    CHECK(resid <= 1e-8 * (frobenius_norm(a) * frobenius_norm(x) + frobenius_norm(rhs)));
}

TEST_CASE("cholesky_solve names the failing pivot") {
    const Tensor a({2, 2}, {1, 2, 2, 1});  // indefinite
    try {
        cholesky_solve(a, Tensor::zeros({2, 1}));
        FAIL("expected a pivot error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::NotPositiveDefinite);
        CHECK(std::string(e.what()).find("index 1") != std::string::npos);
    }
}

TEST_CASE("tensor shape validation") {
    CHECK_THROWS_AS(Tensor({2, 2}, {1, 2, 3}), Error);
    CHECK_THROWS_AS(Tensor::zeros({0, 3}), Error);
    CHECK_THROWS_AS(Tensor::zeros({1, 1, 1, 1, 1}), Error);
}
