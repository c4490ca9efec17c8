#pragma once

// Test-only oracles, deliberately independent of the library's computation
// paths: a cyclic-Jacobi eigensolver, a triple-loop matmul and a per-sample
// forward pass used to pin expected values.

#include <algorithm>
#include <cmath>
#include <vector>

#include "entk/model.hpp"
#include "entk/rng.hpp"
#include "entk/tensor.hpp"

namespace oracles {

// Full eigensolve by cyclic Jacobi rotations; fine for n <= 64.
inline std::vector<double> jacobi_eigenvalues(entk::Tensor a, double tol = 1e-12) {
    const std::size_t n = a.shape[0];
    const double scale = entk::frobenius_norm(a);
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += 2.0 * a.at(p, q) * a.at(p, q);
        if (std::sqrt(off) <= tol * (scale > 0 ? scale : 1.0)) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a.at(p, q);
                if (apq == 0.0) continue;
                const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a.at(k, p), akq = a.at(k, q);
                    a.at(k, p) = c * akp - s * akq;
                    a.at(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a.at(p, k), aqk = a.at(q, k);
                    a.at(p, k) = c * apk - s * aqk;
                    a.at(q, k) = s * apk + c * aqk;
                }
            }
        }
    }
    std::vector<double> eig(n);
    for (std::size_t i = 0; i < n; ++i) eig[i] = a.at(i, i);
    std::sort(eig.begin(), eig.end(), std::greater<>());
    return eig;
}

// Naive triple loop with the same ascending-k per-entry order as matmul.
inline entk::Tensor matmul_triple_loop(const entk::Tensor& a, const entk::Tensor& b) {
    const std::size_t m = a.shape[0], kk = a.shape[1], n = b.shape[1];
    entk::Tensor c = entk::Tensor::zeros({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < kk; ++k) s += a.at(i, k) * b.at(k, j);
            c.at(i, j) = s;
        }
    return c;
}

// Per-sample forward loop used to check batch independence bit-exactly.
inline entk::Tensor forward_per_sample(const entk::ModelSpec& spec,
                                       const entk::ParamVector& params, const entk::Tensor& x) {
    const std::size_t b = x.shape[0];
    entk::Tensor out = entk::Tensor::zeros({b, spec.output_count});
    std::vector<std::size_t> sample_shape(x.shape.begin() + 1, x.shape.end());
    const std::size_t stride = x.row_stride();
    for (std::size_t i = 0; i < b; ++i) {
        std::vector<std::size_t> shape = sample_shape;
        shape.insert(shape.begin(), 1);
        entk::Tensor one(shape, std::vector<double>(x.data.begin() + i * stride,
                                                    x.data.begin() + (i + 1) * stride));
        const entk::Tensor y = entk::forward(spec, params, one);
        for (std::size_t o = 0; o < spec.output_count; ++o) out.at(i, o) = y.at(0, o);
    }
    return out;
}

inline entk::Tensor random_tensor(std::vector<std::size_t> shape, std::uint64_t seed) {
    entk::Tensor t = entk::Tensor::zeros(std::move(shape));
    entk::GaussianStream g(seed);
    for (auto& v : t.data) v = g.next();
    return t;
}

// Hand-rolled generator of assorted valid model specs for property tests.
inline entk::ModelSpec random_model_spec(std::uint64_t seed) {
    entk::SplitMix64 rng(seed);
    auto pick = [&](std::size_t lo, std::size_t hi) {
        return lo + static_cast<std::size_t>(rng.next() % (hi - lo + 1));
    };
    entk::ModelSpec spec;
    std::size_t width;
    if (rng.next() % 2 == 0) {
        const std::size_t channels = pick(1, 2), h = pick(5, 7), w = pick(5, 7);
        spec.input_shape = {channels, h, w};
        const std::size_t out_ch = pick(1, 3), k = pick(2, 3);
        const bool bias = rng.next() % 2 == 0;
        spec.layers.emplace_back(entk::Conv2dLayer{channels, out_ch, k, k, bias});
        if (rng.next() % 2 == 0) {
            spec.layers.emplace_back(entk::ActivationLayer{entk::ActivationFn::Tanh});
        }
        spec.layers.emplace_back(entk::FlattenLayer{});
        width = out_ch * (h - k + 1) * (w - k + 1);
    } else {
        width = pick(2, 6);
        spec.input_shape = {width};
    }
    const std::size_t depth = pick(1, 3);
    for (std::size_t i = 0; i < depth; ++i) {
        const std::size_t next = pick(2, 10);
        spec.layers.emplace_back(entk::DenseLayer{width, next, rng.next() % 2 == 0});
        width = next;
        if (i + 1 < depth) {
            spec.layers.emplace_back(entk::ActivationLayer{
                rng.next() % 2 == 0 ? entk::ActivationFn::Tanh : entk::ActivationFn::Relu});
        }
    }
    spec.validate();
    return spec;
}

}  // namespace oracles
