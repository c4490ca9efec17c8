#include "entk/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "entk/bench.hpp"
#include "entk/dataset.hpp"
#include "entk/kernel_store.hpp"

namespace entk {

namespace {

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t mid = v.size() / 2;
    return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

bool strictly_decreasing(const std::vector<double>& v) {
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (!(v[i] < v[i - 1])) return false;
    }
    return true;
}

}  // namespace

ConvergenceReport width_sweep(const WidthSweepConfig& config) {
    if (config.widths.empty()) throw Error(ErrorKind::Usage, "width sweep needs at least one width");
    for (std::size_t i = 1; i < config.widths.size(); ++i) {
        if (config.widths[i] <= config.widths[i - 1]) {
            throw Error(ErrorKind::Usage, "width sweep widths must be ascending");
        }
    }
    ConvergenceReport rep;
    rep.widths = config.widths;
    rep.seeds = config.seeds;
    const Dataset data = make_blobs(config.batch, config.input_dim, 3.0, config.data_seed);
    for (std::size_t w : config.widths) {
        std::vector<double> fro_errors, lam_errors;
        for (std::uint64_t seed : config.seeds) {
            const std::string arch =
                config.arch_template == "linear"
                    ? "linear:" + std::to_string(config.input_dim)
                    : config.arch_template + ":" + std::to_string(config.input_dim) + "," +
                          std::to_string(w);
            const ModelSpec spec = make_bench_arch(arch, config.output_count);
            const ParamVector params = init_params(spec, seed);
            const LayerMask mask = full_mask(spec);
            const KernelMatrix full = ntk_jacobian_contraction(spec, params, data.x, data.x, mask);
            const KernelMatrix p = pntk(spec, params, data.x, data.x, config.mode, mask);
            const Tensor kron = kron_with_identity(p.values, spec.output_count);
            fro_errors.push_back(rel_frobenius_diff(full.values, kron));
            const double lam_full = sym_eig_topk(full.values, 1, 1e-10).values[0];
            const double lam_p = sym_eig_topk(p.values, 1, 1e-10).values[0];
            lam_errors.push_back(std::abs(lam_full - lam_p) / lam_full);
        }
        rep.rel_frobenius.push_back(fro_errors);
        rep.rel_lambda_max.push_back(lam_errors);
        rep.median_rel_frobenius.push_back(median(fro_errors));
        rep.median_rel_lambda_max.push_back(median(lam_errors));
    }
    rep.vacuous = config.widths.size() < 2;
    rep.pass = rep.vacuous || (strictly_decreasing(rep.median_rel_frobenius) &&
                               strictly_decreasing(rep.median_rel_lambda_max));
    return rep;
}

std::string ConvergenceReport::to_text() const {
    std::ostringstream os;
    os << "width    median_rel_frobenius    median_rel_lambda_max\n";
    char buf[96];
    for (std::size_t i = 0; i < widths.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%-8zu %-23.6e %.6e\n", widths[i], median_rel_frobenius[i],
                      median_rel_lambda_max[i]);
        os << buf;
    }
    if (vacuous) os << "warning: single-width sweep, trend check is vacuous\n";
    os << (pass ? "convergence trend: PASS\n" : "convergence trend: FAIL\n");
    return os.str();
}

std::string ConvergenceReport::to_csv() const {
    std::ostringstream os;
    os << "width,seed,rel_frobenius,rel_lambda_max\n";
    char buf[96];
    for (std::size_t i = 0; i < widths.size(); ++i) {
        for (std::size_t s = 0; s < seeds.size(); ++s) {
            std::snprintf(buf, sizeof(buf), "%zu,%llu,%.17g,%.17g\n", widths[i],
                          static_cast<unsigned long long>(seeds[s]), rel_frobenius[i][s],
                          rel_lambda_max[i][s]);
            os << buf;
        }
    }
    return os.str();
}

namespace {

CheckResult check(const std::string& name, bool pass, const std::string& detail) {
    return CheckResult{name, pass, detail};
}

std::string fmt_rel(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3e", v);
    return buf;
}

ModelSpec small_conv_spec() {
    ModelSpec spec;
    spec.input_shape = {1, 6, 6};
    spec.layers = {Conv2dLayer{1, 2, 3, 3, true}, ActivationLayer{ActivationFn::Tanh},
                   FlattenLayer{}, DenseLayer{32, 3, true}};
    spec.validate();
    return spec;
}

}  // namespace

std::vector<CheckResult> run_check_suite(const CheckSuiteConfig& config) {
    std::vector<CheckResult> results;

    // analytic linear-model kernels, both pntk modes
    {
        const std::size_t d = 6, o = 4, b = 5;
        const ModelSpec spec = make_bench_arch("linear:" + std::to_string(d), o);
        const ParamVector params = init_params(spec, 7);
        const Dataset data = make_blobs(b, d, 2.0, 99);
        const LayerMask mask = full_mask(spec);
        const Tensor gram = matmul(data.x, transpose(data.x));
        const KernelMatrix full = ntk_jacobian_contraction(spec, params, data.x, data.x, mask);
        const double e_full = rel_frobenius_diff(kron_with_identity(gram, o), full.values);
        const KernelMatrix p_sum = pntk(spec, params, data.x, data.x, PntkMode::SumLogits, mask);
        const KernelMatrix p_first = pntk(spec, params, data.x, data.x, PntkMode::FirstLogit, mask);
        const double e_sum = rel_frobenius_diff(gram, p_sum.values);
        const double e_first = rel_frobenius_diff(gram, p_first.values);
        const bool ok = e_full <= 1e-12 && e_sum <= 1e-12 && e_first <= 1e-12;
        results.push_back(check("linear_kernel_exact", ok,
                                "theta=" + fmt_rel(e_full) + " pntk_sum=" + fmt_rel(e_sum) +
                                    " pntk_first=" + fmt_rel(e_first)));

        // first-logit scalarization reproduces the diagonal blocks with the
        // same summation order, so the Kronecker relation holds bit-level
        const Tensor kron_first = kron_with_identity(p_first.values, o);
        bool bit_equal = kron_first.data.size() == full.values.data.size();
        for (std::size_t i = 0; bit_equal && i < kron_first.data.size(); ++i) {
            bit_equal = kron_first.data[i] == full.values.data[i];
        }
        results.push_back(check("pntk_kron_block", bit_equal,
                                bit_equal ? "pntk (x) I equals full kernel bit-level"
                                          : "bit-level mismatch"));

        // ordering guard: a logit-major shuffle must break the zero-error case
        Tensor shuffled = Tensor::zeros({b * o, b * o});
        for (std::size_t i = 0; i < b; ++i)
            for (std::size_t j = 0; j < b; ++j)
                for (std::size_t oo = 0; oo < o; ++oo)
                    shuffled.at(oo * b + i, oo * b + j) = p_first.values.at(i, j);
        const double e_shuffled = rel_frobenius_diff(full.values, shuffled);
        results.push_back(check("kron_ordering_guard", e_shuffled > 1e-6,
                                "sample-major=" + fmt_rel(e_shuffled) +
                                    " (shuffled ordering must not match)"));
    }

    // finite-difference oracle on smooth architectures
    {
        const Dataset data = make_blobs(4, 8, 2.0, 5);
        const ModelSpec mlp = make_bench_arch("mlp:8,16", 5);
        const ParamVector params = init_params(mlp, 11);
        const Jacobian jb = jacobian_batched(mlp, params, data.x, full_mask(mlp));
        const Jacobian jf = finite_difference_jacobian(mlp, params, data.x, 1e-5);
        const double e_mlp = rel_frobenius_diff(jf.values, jb.values);

        const ModelSpec conv = small_conv_spec();
        const ParamVector cparams = init_params(conv, 13);
        const Dataset cdata = make_blobs(3, 36, 1.0, 17);
        const Tensor cx = reshape_samples(cdata.x, conv.input_shape);
        const Jacobian cjb = jacobian_batched(conv, cparams, cx, full_mask(conv));
        const Jacobian cjf = finite_difference_jacobian(conv, cparams, cx, 1e-5);
        const double e_conv = rel_frobenius_diff(cjf.values, cjb.values);
        const bool ok = e_mlp <= 1e-5 && e_conv <= 1e-5;
        results.push_back(
            check("fd_oracle", ok, "mlp=" + fmt_rel(e_mlp) + " conv=" + fmt_rel(e_conv)));
    }

    // cross-algorithm agreement + symmetry/PSD
    {
        const Dataset data = make_blobs(4, 8, 2.0, 21);
        const ModelSpec spec = make_bench_arch("mlp:8,12", 3);
        const ParamVector params = init_params(spec, 23);
        const LayerMask mask = full_mask(spec);
        const KernelMatrix kn = ntk_naive(spec, params, data.x, data.x, mask);
        const KernelMatrix kc = ntk_jacobian_contraction(spec, params, data.x, data.x, mask);
        const KernelMatrix kv = ntk_vector_products(spec, params, data.x, data.x, mask);
        const double e_nc = rel_frobenius_diff(kn.values, kc.values);
        const double e_cv = rel_frobenius_diff(kc.values, kv.values);
        results.push_back(check("cross_algorithm", e_nc <= 1e-9 && e_cv <= 1e-9,
                                "naive_vs_contraction=" + fmt_rel(e_nc) +
                                    " contraction_vs_nvp=" + fmt_rel(e_cv)));

        const auto wf = check_kernel_wellformed(kc);
        results.push_back(check("symmetry_psd", wf.ok(),
                                "sym_rel=" + fmt_rel(wf.symmetry_rel) + " lambda_min=" +
                                    fmt_rel(wf.lambda_min) + " lambda_max=" + fmt_rel(wf.lambda_max)));

        // layer additivity over the two dense layers
        const auto parts = ntk_layerwise(spec, params, data.x, data.x, KernelKind::FullNtk,
                                         PntkMode::SumLogits, mask, Algorithm::JacobianContraction);
        Tensor sum = Tensor::zeros(kc.values.shape);
        for (const auto& [ordinal, part] : parts) {
            for (std::size_t i = 0; i < sum.data.size(); ++i) sum.data[i] += part.values.data[i];
        }
        const double e_add = rel_frobenius_diff(kc.values, sum);
        results.push_back(check("layer_additivity", e_add <= 1e-10, "rel=" + fmt_rel(e_add)));
    }

    if (config.include_width_sweep) {
        results.push_back(width_check_from_report(width_sweep(config.sweep)));
    }

    return results;
}

CheckResult width_check_from_report(const ConvergenceReport& rep) {
    std::ostringstream detail;
    detail << "rel_frobenius medians:";
    for (double m : rep.median_rel_frobenius) detail << " " << fmt_rel(m);
    detail << " rel_lambda medians:";
    for (double m : rep.median_rel_lambda_max) detail << " " << fmt_rel(m);
    return check("width_convergence", rep.pass, detail.str());
}

std::vector<CheckResult> run_file_checks(const std::string& path) {
    std::vector<CheckResult> results;
    KernelStore store = KernelStore::open(path, /*writable=*/false);
    const std::size_t missing = store.missing_tiles().size();
    results.push_back(check("file_complete", missing == 0,
                            missing == 0 ? "all tiles committed"
                                         : std::to_string(missing) + " tiles missing"));
    if (missing != 0) return results;
    if (!store.header().symmetric) {
        results.push_back(check("file_symmetry", true, "skipped: kernel is not symmetric"));
        return results;
    }
    KernelMatrix k;
    k.values = store.read_full();
    k.symmetric = true;
    const auto wf = check_kernel_wellformed(k);
    results.push_back(check("file_symmetry", wf.symmetric_ok, "sym_rel=" + fmt_rel(wf.symmetry_rel)));
    results.push_back(check("file_psd", wf.psd_ok,
                            "lambda_min=" + fmt_rel(wf.lambda_min) +
                                " lambda_max=" + fmt_rel(wf.lambda_max)));
    return results;
}

}  // namespace entk
