#include <doctest.h>

#include <cmath>

#include "entk/alloc_stats.hpp"
#include "entk/bench.hpp"
#include "entk/dataset.hpp"
#include "entk/ntk.hpp"

#include "oracles.hpp"

using namespace entk;

namespace {

ModelSpec mlp_spec(std::size_t o = 3) {
    return make_bench_arch("mlp:4,12", o);
}

// entry-by-entry double loop over per-logit gradients, the independent path
Tensor ntk_gradient_double_loop(const ModelSpec& spec, const ParamVector& pv, const Tensor& x) {
    const std::size_t b = x.shape[0], o = spec.output_count, p = pv.param_count();
    std::vector<std::vector<double>> grads;
    std::vector<std::size_t> sample_shape(x.shape.begin() + 1, x.shape.end());
    const std::size_t stride = x.row_stride();
    for (std::size_t i = 0; i < b; ++i) {
        Tensor xi(sample_shape, std::vector<double>(x.data.begin() + i * stride,
                                                    x.data.begin() + (i + 1) * stride));
        for (std::size_t oo = 0; oo < o; ++oo) {
            std::vector<double> u(o, 0.0);
            u[oo] = 1.0;
            grads.push_back(vjp(spec, pv, xi, u));
        }
    }
    Tensor k = Tensor::zeros({b * o, b * o});
    for (std::size_t r = 0; r < b * o; ++r)
        for (std::size_t c = 0; c < b * o; ++c) {
            double s = 0.0;
            for (std::size_t q = 0; q < p; ++q) s += grads[r][q] * grads[c][q];
            k.at(r, c) = s;
        }
    return k;
}

}  // namespace

TEST_CASE("linear model: full kernel is the Gram matrix Kronecker identity") {
    const std::size_t d = 5, o = 3;
    const ModelSpec spec = make_bench_arch("linear:5", o);
    const ParamVector pv = init_params(spec, 2);
    const Dataset data = make_blobs(4, d, 2.0, 3);
    const Tensor gram = matmul(data.x, transpose(data.x));
    const KernelMatrix k = ntk_jacobian_contraction(spec, pv, data.x, data.x, full_mask(spec));
    CHECK(rel_frobenius_diff(kron_with_identity(gram, o), k.values) <= 1e-12);
    CHECK(k.symmetric);
    CHECK(k.output_count == o);
}

TEST_CASE("single-parameter model: kernel entry is x1*x2") {
    const ModelSpec spec = make_bench_arch("linear:1", 1);
    ParamVector pv = make_param_layout(spec);
    pv.data = {2.0};
    const Tensor x1({1, 1}, {3.0});
    const Tensor x2({1, 1}, {5.0});
    const KernelMatrix k = ntk_jacobian_contraction(spec, pv, x1, x2, full_mask(spec));
    CHECK(k.values.data == std::vector<double>{15.0});
    CHECK_FALSE(k.symmetric);
}

TEST_CASE("linear model: pntk equals the Gram matrix in both modes") {
    const ModelSpec spec = make_bench_arch("linear:5", 4);
    const ParamVector pv = init_params(spec, 2);
    const Dataset data = make_blobs(5, 5, 2.0, 7);
    const Tensor gram = matmul(data.x, transpose(data.x));
    for (PntkMode mode : {PntkMode::SumLogits, PntkMode::FirstLogit}) {
        const KernelMatrix p = pntk(spec, pv, data.x, data.x, mode, full_mask(spec));
        CHECK(rel_frobenius_diff(gram, p.values) <= 1e-12);
    }
}

TEST_CASE("contraction kernel matches the per-logit gradient double loop") {
    const ModelSpec spec = mlp_spec();
    const ParamVector pv = init_params(spec, 31);
    const Dataset data = make_blobs(4, 4, 2.0, 37);
    const Tensor expect = ntk_gradient_double_loop(spec, pv, data.x);
    const KernelMatrix k = ntk_jacobian_contraction(spec, pv, data.x, data.x, full_mask(spec));
    CHECK(rel_frobenius_diff(expect, k.values) <= 1e-10);
}

TEST_CASE("all three full-kernel algorithms agree within 1e-9") {
    for (const char* arch : {"linear:4", "mlp:4,12", "mlp3:4,10"}) {
        const ModelSpec spec = make_bench_arch(arch, 3);
        const ParamVector pv = init_params(spec, 41);
        const Dataset data = make_blobs(4, 4, 2.0, 43);
        const KernelMatrix kn = ntk_naive(spec, pv, data.x, data.x, full_mask(spec));
        const KernelMatrix kc =
            ntk_jacobian_contraction(spec, pv, data.x, data.x, full_mask(spec));
        const KernelMatrix kv = ntk_vector_products(spec, pv, data.x, data.x, full_mask(spec));
        CHECK(rel_frobenius_diff(kn.values, kc.values) <= 1e-9);
        CHECK(rel_frobenius_diff(kc.values, kv.values) <= 1e-9);
    }
}

TEST_CASE("vector products avoid the B*O*P intermediate") {
    const ModelSpec spec = make_bench_arch("mlp:8,32", 6);
    const ParamVector pv = init_params(spec, 47);
    const Dataset data = make_blobs(6, 8, 2.0, 53);
    const std::size_t p = pv.param_count();

    alloc_stats::reset();
    ntk_vector_products(spec, pv, data.x, data.x, full_mask(spec));
    const std::size_t nvp_peak = alloc_stats::peak_bytes();

    alloc_stats::reset();
    ntk_jacobian_contraction(spec, pv, data.x, data.x, full_mask(spec));
    const std::size_t contraction_peak = alloc_stats::peak_bytes();

    CHECK(nvp_peak <= (p + spec.output_count) * sizeof(double));
    CHECK(nvp_peak < contraction_peak);
}

TEST_CASE("memory budget rejects oversized intermediates with advice") {
    const ModelSpec spec = mlp_spec();
    const ParamVector pv = init_params(spec, 1);
    const Dataset data = make_blobs(4, 4, 2.0, 2);
    try {
        ntk_jacobian_contraction(spec, pv, data.x, data.x, full_mask(spec), /*budget=*/64);
        FAIL("expected a budget error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Budget);
        CHECK(std::string(e.what()).find("chunk") != std::string::npos);
    }
}

TEST_CASE("layerwise kernels sum to the unmasked kernel") {
    const ModelSpec spec = mlp_spec();
    const ParamVector pv = init_params(spec, 59);
    const Dataset data = make_blobs(4, 4, 2.0, 61);
    const KernelMatrix full = ntk_jacobian_contraction(spec, pv, data.x, data.x, full_mask(spec));
    const auto parts = ntk_layerwise(spec, pv, data.x, data.x, KernelKind::FullNtk,
                                     PntkMode::SumLogits, full_mask(spec),
                                     Algorithm::JacobianContraction);
    REQUIRE(parts.size() == 2);
    Tensor sum = Tensor::zeros(full.values.shape);
    for (const auto& [ordinal, part] : parts) {
        CHECK(part.layer_mask == LayerMask{ordinal});
        for (std::size_t i = 0; i < sum.data.size(); ++i) sum.data[i] += part.values.data[i];
    }
    CHECK(rel_frobenius_diff(full.values, sum) <= 1e-10);
}

TEST_CASE("single-layer model: layerwise list is the full kernel") {
    const ModelSpec spec = make_bench_arch("linear:3", 2);
    const ParamVector pv = init_params(spec, 1);
    const Dataset data = make_blobs(3, 3, 2.0, 2);
    const auto parts = ntk_layerwise(spec, pv, data.x, data.x, KernelKind::FullNtk,
                                     PntkMode::SumLogits, full_mask(spec),
                                     Algorithm::JacobianContraction);
    REQUIRE(parts.size() == 1);
    const KernelMatrix full = ntk_jacobian_contraction(spec, pv, data.x, data.x, full_mask(spec));
    CHECK(parts[0].second.values.data == full.values.data);
}

TEST_CASE("empty layer selection is an error, not an empty list") {
    const ModelSpec spec = mlp_spec();
    const ParamVector pv = init_params(spec, 1);
    const Dataset data = make_blobs(2, 4, 2.0, 2);
    CHECK_THROWS_AS(ntk_layerwise(spec, pv, data.x, data.x, KernelKind::FullNtk,
                                  PntkMode::SumLogits, LayerMask{},
                                  Algorithm::JacobianContraction),
                    Error);
}

TEST_CASE("symmetric kernels pass symmetry and PSD checks") {
    const ModelSpec spec = mlp_spec();
    const ParamVector pv = init_params(spec, 67);
    const Dataset data = make_blobs(5, 4, 2.0, 71);
    for (Algorithm alg :
         {Algorithm::Naive, Algorithm::JacobianContraction, Algorithm::NtkVectorProduct}) {
        const KernelMatrix k = compute_kernel(spec, pv, data.x, data.x, KernelKind::FullNtk, alg,
                                              PntkMode::SumLogits, full_mask(spec));
        const auto rep = check_kernel_wellformed(k);
        CHECK(rep.symmetric_ok);
        CHECK(rep.psd_ok);
    }
    const KernelMatrix p =
        pntk(spec, pv, data.x, data.x, PntkMode::SumLogits, full_mask(spec));
    CHECK(check_kernel_wellformed(p).ok());
}

TEST_CASE("kernel blocks reproduce the monolithic kernel bit-exactly") {
    const ModelSpec spec = mlp_spec();
    const ParamVector pv = init_params(spec, 73);
    const Dataset data = make_blobs(5, 4, 2.0, 79);
    const LayerMask mask = full_mask(spec);
    for (Algorithm alg :
         {Algorithm::Naive, Algorithm::JacobianContraction, Algorithm::NtkVectorProduct}) {
        const KernelMatrix whole = compute_kernel(spec, pv, data.x, data.x, KernelKind::FullNtk,
                                                  alg, PntkMode::SumLogits, mask);
        const std::size_t n = whole.rows();
        // an off-diagonal window, sliced mid-sample on purpose
        const Tensor window = kernel_block(spec, pv, data.x, data.x, KernelKind::FullNtk, alg,
                                           PntkMode::SumLogits, mask, 2, 8, 9, n, false);
        for (std::size_t r = 2; r < 8; ++r)
            for (std::size_t c = 9; c < n; ++c)
                CHECK(window.at(r - 2, c - 9) == whole.values.at(r, c));
    }
}

TEST_CASE("pntk masked by layer agrees with masked contraction") {
    const ModelSpec spec = mlp_spec();
    const ParamVector pv = init_params(spec, 83);
    const Dataset data = make_blobs(4, 4, 2.0, 89);
    for (std::uint32_t layer : {0u, 1u}) {
        const KernelMatrix a = pntk(spec, pv, data.x, data.x, PntkMode::SumLogits,
                                    LayerMask{layer}, 0, Algorithm::JacobianContraction);
        const KernelMatrix b = pntk(spec, pv, data.x, data.x, PntkMode::SumLogits,
                                    LayerMask{layer}, 0, Algorithm::NtkVectorProduct);
        CHECK(rel_frobenius_diff(a.values, b.values) <= 1e-9);
    }
}
