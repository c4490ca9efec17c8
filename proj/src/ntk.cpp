#include "entk/ntk.hpp"

#include <cmath>
#include <cstring>
#include <functional>

#include "entk/alloc_stats.hpp"
#include "entk/rng.hpp"

namespace entk {

const char* algorithm_name(Algorithm a) {
    switch (a) {
        case Algorithm::Naive: return "naive";
        case Algorithm::JacobianContraction: return "contraction";
        case Algorithm::NtkVectorProduct: return "nvp";
    }
    return "?";
}

const char* kernel_kind_name(KernelKind k) {
    return k == KernelKind::FullNtk ? "ntk" : "pntk";
}

const char* pntk_mode_name(PntkMode m) { return m == PntkMode::SumLogits ? "sum" : "first"; }

Algorithm algorithm_from_name(const std::string& name) {
    if (name == "naive") return Algorithm::Naive;
    if (name == "contraction") return Algorithm::JacobianContraction;
    if (name == "nvp") return Algorithm::NtkVectorProduct;
    throw Error(ErrorKind::Usage, "unknown algorithm '" + name + "'");
}

namespace {

Tensor slice_samples(const Tensor& x, std::size_t s0, std::size_t s1) {
    std::vector<std::size_t> shape = x.shape;
    shape[0] = s1 - s0;
    const std::size_t stride = x.row_stride();
    std::vector<double> data(x.data.begin() + s0 * stride, x.data.begin() + s1 * stride);
    return Tensor(std::move(shape), std::move(data));
}

bool same_data(const Tensor& a, const Tensor& b) {
    return &a == &b || (a.shape == b.shape && a.data == b.data);
}

std::vector<double> scalarize_cotangent(PntkMode mode, std::size_t o_count) {
    std::vector<double> u(o_count, 0.0);
    if (mode == PntkMode::SumLogits) {
        const double s = 1.0 / std::sqrt(static_cast<double>(o_count));
        for (auto& v : u) v = s;
    } else {
        u[0] = 1.0;
    }
    return u;
}

double dot_n(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

// Cache-blocked Gram contraction: out(r, c) = <rows(r), cols(c)> over pm
// columns. Fixed block sizes keep a column panel resident in L2 instead of
// re-streaming whole feature matrices per output row. Every entry accumulates
// its feature blocks in the same ascending order regardless of tile shape,
// so tiled and monolithic kernels still match bit-exactly.
constexpr std::size_t kGramFeatureBlock = 2048;
constexpr std::size_t kGramColumnBlock = 32;

void gram_block_into(Tensor& out, std::size_t n_rows, std::size_t n_cols, std::size_t pm,
                     const std::function<const double*(std::size_t)>& row_ptr,
                     const std::function<const double*(std::size_t)>& col_ptr) {
    for (std::size_t cb = 0; cb < n_cols; cb += kGramColumnBlock) {
        const std::size_t ce = std::min(n_cols, cb + kGramColumnBlock);
        for (std::size_t pb = 0; pb < pm; pb += kGramFeatureBlock) {
            const std::size_t plen = std::min(kGramFeatureBlock, pm - pb);
            for (std::size_t r = 0; r < n_rows; ++r) {
                const double* gr = row_ptr(r) + pb;
                double* orow = out.row_ptr(r);
                for (std::size_t c = cb; c < ce; ++c) {
                    orow[c] += dot_n(gr, col_ptr(c) + pb, plen);
                }
            }
        }
    }
}

// Zero tangent entries outside the mask, in place.
void restrict_tangent(std::vector<double>& v, const std::vector<ColSegment>& segs) {
    std::size_t cursor = 0;
    for (const auto& s : segs) {
        if (s.param_start > cursor) {
            std::memset(v.data() + cursor, 0, (s.param_start - cursor) * sizeof(double));
        }
        cursor = s.param_start + s.length;
    }
    if (cursor < v.size()) std::memset(v.data() + cursor, 0, (v.size() - cursor) * sizeof(double));
}

void mirror_lower(Tensor& block) {
    const std::size_t n = block.shape[0];
    for (std::size_t r = 1; r < n; ++r)
        for (std::size_t c = 0; c < r; ++c) block.at(r, c) = block.at(c, r);
}

// Gradient features of the scalarized head: one vjp per sample, masked
// columns extracted row by row.
Tensor pntk_features(AdWorkspace& ws, const Tensor& x, std::size_t s0, std::size_t s1,
                     const std::vector<double>& u, const std::vector<ColSegment>& segs,
                     std::size_t p_full, std::size_t p_masked, std::vector<double>& scratch) {
    Tensor g = Tensor::zeros({s1 - s0, p_masked});
    scratch.assign(p_full, 0.0);
    for (std::size_t s = s0; s < s1; ++s) {
        ws.vjp(x.row_ptr(s), u.data(), scratch.data());
        double* dst = g.row_ptr(s - s0);
        for (const auto& seg : segs) {
            std::memcpy(dst + seg.masked_start, scratch.data() + seg.param_start,
                        seg.length * sizeof(double));
        }
    }
    return g;
}

}  // namespace

std::size_t estimate_block_bytes(const ModelSpec& spec, const ParamVector& params, KernelKind kind,
                                 Algorithm algorithm, const LayerMask& mask,
                                 std::size_t n_row_samples, std::size_t n_col_samples,
                                 bool same_slice) {
    const std::size_t p_full = params.param_count();
    const std::size_t pm = masked_param_count(spec, params, mask);
    const std::size_t o_rows = kind == KernelKind::FullNtk ? spec.output_count : 1;
    switch (algorithm) {
        case Algorithm::NtkVectorProduct:
            // one parameter-space tangent plus the O-vector it produces
            return (p_full + spec.output_count) * sizeof(double);
        case Algorithm::Naive:
        case Algorithm::JacobianContraction: {
            std::size_t floats = n_row_samples * o_rows * pm;
            if (!same_slice) floats += n_col_samples * o_rows * pm;
            if (kind == KernelKind::Pntk) {
                floats += p_full;  // full-length gradient scratch per vjp
            }
            return floats * sizeof(double);
        }
    }
    return 0;
}

Tensor kernel_block(const ModelSpec& spec, const ParamVector& params, const Tensor& x_rows,
                    const Tensor& x_cols, KernelKind kind, Algorithm algorithm, PntkMode mode,
                    const LayerMask& mask, std::uint64_t r0, std::uint64_t r1, std::uint64_t c0,
                    std::uint64_t c1, bool mirror_diagonal, std::size_t budget_bytes) {
    validate_mask(spec, mask);
    if (r1 <= r0 || c1 <= c0) throw Error(ErrorKind::Dimension, "kernel block window is empty");
    if (mirror_diagonal && (r0 != c0 || r1 != c1)) {
        throw Error(ErrorKind::Dimension, "diagonal mirroring requires a square diagonal window");
    }
    const std::size_t o_count = spec.output_count;
    const std::size_t ok = kind == KernelKind::FullNtk ? o_count : 1;
    const std::size_t sr0 = r0 / ok, sr1 = (r1 + ok - 1) / ok;
    const std::size_t sc0 = c0 / ok, sc1 = (c1 + ok - 1) / ok;
    if (sr1 > x_rows.shape[0] || sc1 > x_cols.shape[0]) {
        throw Error(ErrorKind::Dimension, "kernel block window exceeds dataset extents");
    }
    const bool same_slice = same_data(x_rows, x_cols) && sr0 == sc0 && sr1 == sc1;

    const std::size_t est = estimate_block_bytes(spec, params, kind, algorithm, mask, sr1 - sr0,
                                                 sc1 - sc0, same_slice);
    if (budget_bytes > 0 && est > budget_bytes) {
        throw Error(ErrorKind::Budget,
                    "estimated intermediate size " + std::to_string(est) + " bytes exceeds budget " +
                        std::to_string(budget_bytes) +
                        "; use a smaller chunk (tiled computation) or the nvp algorithm");
    }

    const auto segs = mask_segments(spec, params, mask);
    std::size_t pm = 0;
    for (const auto& s : segs) pm += s.length;
    const std::size_t p_full = params.param_count();

    Tensor out = Tensor::zeros({static_cast<std::size_t>(r1 - r0), static_cast<std::size_t>(c1 - c0)});

    if (kind == KernelKind::FullNtk && algorithm != Algorithm::NtkVectorProduct) {
        alloc_stats::Scoped acct_rows((sr1 - sr0) * o_count * pm * sizeof(double));
        const Tensor rows_slice = slice_samples(x_rows, sr0, sr1);
        const Jacobian j_rows = algorithm == Algorithm::Naive
                                    ? jacobian_naive(spec, params, rows_slice, mask)
                                    : jacobian_batched(spec, params, rows_slice, mask);
        Jacobian j_cols_storage;
        const Jacobian* j_cols = &j_rows;
        alloc_stats::Scoped acct_cols(same_slice ? 0 : (sc1 - sc0) * o_count * pm * sizeof(double));
        if (!same_slice) {
            const Tensor cols_slice = slice_samples(x_cols, sc0, sc1);
            j_cols_storage = algorithm == Algorithm::Naive
                                 ? jacobian_naive(spec, params, cols_slice, mask)
                                 : jacobian_batched(spec, params, cols_slice, mask);
            j_cols = &j_cols_storage;
        }
        const Jacobian* jc = j_cols;
        gram_block_into(
            out, r1 - r0, c1 - c0, pm,
            [&](std::size_t r) { return j_rows.row((r + r0) / ok - sr0, (r + r0) % ok); },
            [&](std::size_t c) { return jc->row((c + c0) / ok - sc0, (c + c0) % ok); });
    } else if (kind == KernelKind::FullNtk) {  // vector products
        AdWorkspace ws(spec, params);
        alloc_stats::Scoped acct((p_full + o_count) * sizeof(double));
        std::vector<double> v(p_full);
        std::vector<double> jv(o_count);
        std::vector<double> cot(o_count);
        const bool full = mask_is_full(spec, mask);
        for (std::uint64_t c = c0; c < c1; ++c) {
            const std::size_t j = c / ok, op = c % ok;
            std::fill(cot.begin(), cot.end(), 0.0);
            cot[op] = 1.0;
            ws.vjp(x_cols.row_ptr(j), cot.data(), v.data());
            if (!full) restrict_tangent(v, segs);
            const std::uint64_t r_end = mirror_diagonal ? std::min<std::uint64_t>(r1, c + 1) : r1;
            for (std::size_t i = sr0; i * ok < r_end; ++i) {
                ws.jvp(x_rows.row_ptr(i), v.data(), jv.data());
                const std::uint64_t lo = std::max<std::uint64_t>(r0, i * ok);
                const std::uint64_t hi = std::min<std::uint64_t>(r_end, (i + 1) * ok);
                for (std::uint64_t r = lo; r < hi; ++r) out.at(r - r0, c - c0) = jv[r % ok];
            }
        }
    } else if (algorithm != Algorithm::NtkVectorProduct) {  // pntk via gradient Gram
        AdWorkspace ws(spec, params);
        const auto u = scalarize_cotangent(mode, o_count);
        alloc_stats::Scoped acct_scratch(p_full * sizeof(double));
        std::vector<double> scratch;
        alloc_stats::Scoped acct_rows((sr1 - sr0) * pm * sizeof(double));
        const Tensor g_rows = pntk_features(ws, x_rows, sr0, sr1, u, segs, p_full, pm, scratch);
        alloc_stats::Scoped acct_cols(same_slice ? 0 : (sc1 - sc0) * pm * sizeof(double));
        Tensor g_cols_storage;
        const Tensor* g_cols = &g_rows;
        if (!same_slice) {
            g_cols_storage = pntk_features(ws, x_cols, sc0, sc1, u, segs, p_full, pm, scratch);
            g_cols = &g_cols_storage;
        }
        const Tensor* gc = g_cols;
        gram_block_into(
            out, r1 - r0, c1 - c0, pm,
            [&](std::size_t r) { return g_rows.row_ptr(r + r0 - sr0); },
            [&](std::size_t c) { return gc->row_ptr(c + c0 - sc0); });
    } else {  // pntk via vector products
        AdWorkspace ws(spec, params);
        const auto u = scalarize_cotangent(mode, o_count);
        alloc_stats::Scoped acct((p_full + o_count) * sizeof(double));
        std::vector<double> v(p_full);
        std::vector<double> jv(o_count);
        const bool full = mask_is_full(spec, mask);
        for (std::uint64_t c = c0; c < c1; ++c) {
            ws.vjp(x_cols.row_ptr(c), u.data(), v.data());
            if (!full) restrict_tangent(v, segs);
            const std::uint64_t r_end = mirror_diagonal ? std::min<std::uint64_t>(r1, c + 1) : r1;
            for (std::uint64_t r = r0; r < r_end; ++r) {
                ws.jvp(x_rows.row_ptr(r), v.data(), jv.data());
                out.at(r - r0, c - c0) = dot_n(u.data(), jv.data(), o_count);
            }
        }
    }

    if (mirror_diagonal) mirror_lower(out);
    return out;
}

namespace {

KernelMatrix finish_kernel(const ModelSpec& spec, const ParamVector& params, const Tensor& x1,
                           const Tensor& x2, KernelKind kind, Algorithm algorithm, PntkMode mode,
                           const LayerMask& mask, std::size_t budget) {
    const bool symmetric = same_data(x1, x2);
    const std::size_t ok = kind == KernelKind::FullNtk ? spec.output_count : 1;
    KernelMatrix k;
    k.kind = kind;
    k.algorithm = algorithm;
    k.pntk_mode = mode;
    k.layer_mask = mask;
    k.symmetric = symmetric;
    k.output_count = static_cast<std::uint32_t>(spec.output_count);
    k.model_fingerprint = model_fingerprint(spec, params);
    k.data_fingerprint_rows = data_fingerprint(x1);
    k.data_fingerprint_cols = symmetric ? k.data_fingerprint_rows : data_fingerprint(x2);
    k.values = kernel_block(spec, params, x1, x2, kind, algorithm, mode, mask, 0,
                            x1.shape[0] * ok, 0, x2.shape[0] * ok, symmetric, budget);
    return k;
}

}  // namespace

KernelMatrix ntk_jacobian_contraction(const ModelSpec& spec, const ParamVector& params,
                                      const Tensor& x1, const Tensor& x2, const LayerMask& mask,
                                      std::size_t budget_bytes) {
    return finish_kernel(spec, params, x1, x2, KernelKind::FullNtk,
                         Algorithm::JacobianContraction, PntkMode::SumLogits, mask, budget_bytes);
}

KernelMatrix ntk_naive(const ModelSpec& spec, const ParamVector& params, const Tensor& x1,
                       const Tensor& x2, const LayerMask& mask, std::size_t budget_bytes) {
    return finish_kernel(spec, params, x1, x2, KernelKind::FullNtk, Algorithm::Naive,
                         PntkMode::SumLogits, mask, budget_bytes);
}

KernelMatrix ntk_vector_products(const ModelSpec& spec, const ParamVector& params, const Tensor& x1,
                                 const Tensor& x2, const LayerMask& mask, std::size_t budget_bytes) {
    return finish_kernel(spec, params, x1, x2, KernelKind::FullNtk, Algorithm::NtkVectorProduct,
                         PntkMode::SumLogits, mask, budget_bytes);
}

KernelMatrix pntk(const ModelSpec& spec, const ParamVector& params, const Tensor& x1,
                  const Tensor& x2, PntkMode mode, const LayerMask& mask, std::size_t budget_bytes,
                  Algorithm algorithm) {
    return finish_kernel(spec, params, x1, x2, KernelKind::Pntk, algorithm, mode, mask,
                         budget_bytes);
}

KernelMatrix compute_kernel(const ModelSpec& spec, const ParamVector& params, const Tensor& x1,
                            const Tensor& x2, KernelKind kind, Algorithm algorithm, PntkMode mode,
                            const LayerMask& mask, std::size_t budget_bytes) {
    return finish_kernel(spec, params, x1, x2, kind, algorithm, mode, mask, budget_bytes);
}

std::vector<std::pair<std::uint32_t, KernelMatrix>> ntk_layerwise(
    const ModelSpec& spec, const ParamVector& params, const Tensor& x1, const Tensor& x2,
    KernelKind kind, PntkMode mode, const LayerMask& layers, Algorithm algorithm,
    std::size_t budget_bytes) {
    validate_mask(spec, layers);
    std::vector<std::pair<std::uint32_t, KernelMatrix>> result;
    result.reserve(layers.size());
    for (std::uint32_t ordinal : layers) {
        const LayerMask single{ordinal};
        result.emplace_back(ordinal, compute_kernel(spec, params, x1, x2, kind, algorithm, mode,
                                                    single, budget_bytes));
    }
    return result;
}

Tensor kron_with_identity(const Tensor& p, std::size_t o_count) {
    detail::require_rank(p, 2, "kron_with_identity");
    const std::size_t b1 = p.shape[0], b2 = p.shape[1];
    Tensor out = Tensor::zeros({b1 * o_count, b2 * o_count});
    for (std::size_t i = 0; i < b1; ++i)
        for (std::size_t j = 0; j < b2; ++j) {
            const double v = p.at(i, j);
            for (std::size_t o = 0; o < o_count; ++o) out.at(i * o_count + o, j * o_count + o) = v;
        }
    return out;
}

double rel_frobenius_diff(const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape) {
        throw Error(ErrorKind::Dimension,
                    "rel_frobenius_diff: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        num += d * d;
        den += a.data[i] * a.data[i];
    }
    if (den == 0.0) return std::sqrt(num);
    return std::sqrt(num) / std::sqrt(den);
}

double sym_lambda_min(const Tensor& a, double tol) {
    const double lmax = sym_eig_topk(a, 1, tol).values[0];
    const std::size_t n = a.shape[0];
    // best-effort Rayleigh estimate on lmax*I - a; near-zero eigenvalue
    // clusters make tight convergence impractical, so no cap error here
    std::vector<double> b(a.data.size());
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = -a.data[i];
    for (std::size_t i = 0; i < n; ++i) b[i * n + i] += lmax;
    GaussianStream gauss(0x5eedf00du);
    std::vector<double> v(n), w(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = gauss.next();
    double vn = 0.0;
    for (double x : v) vn += x * x;
    vn = std::sqrt(vn);
    for (auto& x : v) x /= vn;
    double mu = 0.0;
    for (int it = 0; it < 2000; ++it) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            const double* row = b.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) s += row[j] * v[j];
            w[i] = s;
        }
        mu = 0.0;
        for (std::size_t i = 0; i < n; ++i) mu += v[i] * w[i];
        double wn = 0.0;
        for (double x : w) wn += x * x;
        wn = std::sqrt(wn);
        if (wn == 0.0) break;
        double resid = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double r = w[i] - mu * v[i];
            resid += r * r;
        }
        if (std::sqrt(resid) <= tol * std::max(lmax, 1.0)) break;
        for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / wn;
    }
    return lmax - mu;
}

// PSD is certified by a Cholesky probe of v + psd_tol*lambda_max*I, which is
// robust where power iteration stalls on near-zero eigenvalue clusters.
WellformedReport check_kernel_wellformed(const KernelMatrix& k, double sym_tol, double psd_tol) {
    WellformedReport rep;
    const Tensor& v = k.values;
    if (v.shape[0] != v.shape[1]) return rep;  // not square: fails both checks
    double num = 0.0;
    const double den = frobenius_norm(v);
    for (std::size_t i = 0; i < v.shape[0]; ++i)
        for (std::size_t j = i + 1; j < v.shape[1]; ++j) {
            const double d = v.at(i, j) - v.at(j, i);
            num += 2.0 * d * d;
        }
    rep.symmetry_rel = den > 0.0 ? std::sqrt(num) / den : std::sqrt(num);
    rep.symmetric_ok = rep.symmetry_rel <= sym_tol;
    if (!rep.symmetric_ok) return rep;
    rep.lambda_max = sym_eig_topk(v, 1, 1e-9).values[0];
    rep.lambda_min = sym_lambda_min(v, 1e-6);
    const std::size_t n = v.shape[0];
    Tensor probe = v;
    const double eps = psd_tol * std::max(rep.lambda_max, 0.0);
    for (std::size_t i = 0; i < n; ++i) probe.at(i, i) += eps;
    try {
        cholesky_solve(probe, Tensor::zeros({n, 1}));
        rep.psd_ok = true;
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::NotPositiveDefinite) throw;
        rep.psd_ok = false;
    }
    return rep;
}

}  // namespace entk
