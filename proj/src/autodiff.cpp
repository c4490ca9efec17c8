#include "entk/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#if defined(__SSE2__) || defined(_M_X64) || defined(_M_AMD64)
#include <emmintrin.h>
#define ENTK_HAVE_SSE2 1
#endif

namespace entk {

LayerMask full_mask(const ModelSpec& spec) {
    LayerMask m;
    const std::size_t n = spec.param_layer_indices().size();
    m.reserve(n);
    for (std::size_t i = 0; i < n; ++i) m.push_back(static_cast<std::uint32_t>(i));
    return m;
}

void validate_mask(const ModelSpec& spec, const LayerMask& mask) {
    if (mask.empty()) {
        throw Error(ErrorKind::Dimension, "layer mask selects no parameterized layers");
    }
    const std::size_t n = spec.param_layer_indices().size();
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i] >= n) {
            throw Error(ErrorKind::Dimension,
                        "layer mask ordinal " + std::to_string(mask[i]) + " out of range (model has " +
                            std::to_string(n) + " parameterized layers)");
        }
        if (i > 0 && mask[i] <= mask[i - 1]) {
            throw Error(ErrorKind::Dimension, "layer mask must be strictly ascending");
        }
    }
}

bool mask_is_full(const ModelSpec& spec, const LayerMask& mask) {
    return mask.size() == spec.param_layer_indices().size();
}

std::vector<ColSegment> mask_segments(const ModelSpec& spec, const ParamVector& params,
                                      const LayerMask& mask) {
    validate_mask(spec, mask);
    std::vector<ColSegment> segs;
    segs.reserve(mask.size());
    std::size_t cursor = 0;
    for (std::uint32_t ordinal : mask) {
        const auto [start, length] = params.layer_span(ordinal);
        segs.push_back({cursor, start, length});
        cursor += length;
    }
    return segs;
}

std::size_t masked_param_count(const ModelSpec& spec, const ParamVector& params,
                               const LayerMask& mask) {
    std::size_t n = 0;
    for (const auto& s : mask_segments(spec, params, mask)) n += s.length;
    return n;
}

namespace {

std::size_t product(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (auto e : s) n *= e;
    return n;
}

// dst[j] = c * a[j] with non-temporal stores where available: Jacobian rows
// are written once and never re-read before eviction, so bypassing the cache
// avoids the read-for-ownership traffic on B*O*P-sized outputs. Values are
// identical to the scalar loop.
inline void scale_row_into(double* dst, const double* a, double c, std::size_t n) {
#ifdef ENTK_HAVE_SSE2
    std::size_t j = 0;
    while (j < n && (reinterpret_cast<std::uintptr_t>(dst + j) & 15u)) {
        dst[j] = c * a[j];
        ++j;
    }
    const __m128d vc = _mm_set1_pd(c);
    for (; j + 2 <= n; j += 2) {
        _mm_stream_pd(dst + j, _mm_mul_pd(vc, _mm_loadu_pd(a + j)));
    }
    for (; j < n; ++j) dst[j] = c * a[j];
#else
    for (std::size_t j = 0; j < n; ++j) dst[j] = c * a[j];
#endif
}

inline void store_fence() {
#ifdef ENTK_HAVE_SSE2
    _mm_sfence();
#endif
}

// Multi-cotangent pullback through one dense layer with the cotangent count
// fixed at compile time, so the per-column accumulators live in registers.
// Accumulation over r stays ascending: bit-identical to the per-cotangent
// backward pass.
template <int NO>
void dense_pullback_fixed(const double* wt, const double* cot, double* cotp, std::size_t n_in,
                          std::size_t n_out) {
    for (std::size_t j = 0; j < n_in; ++j) {
        double acc[NO] = {0};
        const double* wtrow = wt + j * n_out;
        for (std::size_t r = 0; r < n_out; ++r) {
            const double wv = wtrow[r];
            const double* crow = cot + r * NO;
            for (int o = 0; o < NO; ++o) acc[o] += wv * crow[o];
        }
        std::memcpy(cotp + j * NO, acc, sizeof(acc));
    }
}

using DensePullbackFn = void (*)(const double*, const double*, double*, std::size_t, std::size_t);

template <int... NOs>
DensePullbackFn pick_dense_pullback(std::size_t no, std::integer_sequence<int, NOs...>) {
    DensePullbackFn fn = nullptr;
    (void)((no == std::size_t(NOs) + 1 && (fn = &dense_pullback_fixed<NOs + 1>, true)) || ...);
    return fn;
}

// Fixed-size kernels up to 16 cotangents; larger counts take the generic path.
DensePullbackFn dense_pullback_for(std::size_t no) {
    return pick_dense_pullback(no, std::make_integer_sequence<int, 16>{});
}

void check_batch(const ModelSpec& spec, const Tensor& x_batch) {
    if (x_batch.rank() < 2) {
        throw Error(ErrorKind::Dimension, "expected a batched input with a leading extent");
    }
    std::vector<std::size_t> sample(x_batch.shape.begin() + 1, x_batch.shape.end());
    if (sample != spec.input_shape) {
        throw Error(ErrorKind::Dimension, "sample shape does not match model input shape");
    }
}

void check_sample(const ModelSpec& spec, const Tensor& x) {
    if (x.shape != spec.input_shape) {
        throw Error(ErrorKind::Dimension,
                    "sample shape " + x.shape_str() + " does not match model input shape");
    }
}

// Shared forward/backward machinery over one model. Buffers are reused
// across calls; the computation itself is re-run as each entry point states.
class Engine {
public:
    Engine(const ModelSpec& spec, const ParamVector& params)
        : spec_(spec),
          lp_(detail::layer_param_ptrs(spec, params)),
          shapes_(detail::layer_io_shapes(spec)),
          n_layers_(spec.layers.size()),
          out_count_(spec.output_count),
          param_count_(params.param_count()) {
        sizes_.reserve(shapes_.size());
        for (const auto& s : shapes_) sizes_.push_back(product(s));
        acts_.resize(n_layers_ + 1);
        for (std::size_t i = 0; i <= n_layers_; ++i) acts_[i].assign(sizes_[i], 0.0);
        // per-layer parameter spans, for tangent slicing in jvp
        w_span_.assign(n_layers_, {0, 0});
        b_span_.assign(n_layers_, {0, 0});
        for (const auto& block : params.offsets) {
            (block.is_bias ? b_span_ : w_span_)[block.layer] = {block.start, block.length};
        }
    }

    std::size_t outputs() const { return out_count_; }
    std::size_t params() const { return param_count_; }

    void forward_trace(const double* x) {
        std::memcpy(acts_[0].data(), x, sizes_[0] * sizeof(double));
        for (std::size_t i = 0; i < n_layers_; ++i) {
            detail::apply_layer(spec_.layers[i], lp_[i].w, lp_[i].b, shapes_[i], acts_[i].data(),
                                acts_[i + 1].data());
        }
    }

    const double* output() const { return acts_[n_layers_].data(); }

    // Reverse pass for a single cotangent; grad must be zeroed, length P.
    void backward_one(const double* cot_out, double* grad) {
        cot_a_.assign(cot_out, cot_out + out_count_);
        std::vector<double>* cot = &cot_a_;
        std::vector<double>* cotp = &cot_b_;
        for (std::size_t i = n_layers_; i-- > 0;) {
            const auto& layer = spec_.layers[i];
            const std::size_t n_in = sizes_[i];
            cotp->assign(n_in, 0.0);
            if (const auto* d = std::get_if<DenseLayer>(&layer)) {
                const double* a = acts_[i].data();
                const double* w = lp_[i].w;
                double* gw = grad + w_span_[i].first;
                double* gb = d->bias ? grad + b_span_[i].first : nullptr;
                for (std::size_t r = 0; r < d->out; ++r) {
                    const double c = (*cot)[r];
                    const double* wrow = w + r * d->in;
                    double* gwrow = gw + r * d->in;
                    double* cp = cotp->data();
                    for (std::size_t j = 0; j < d->in; ++j) {
                        gwrow[j] = c * a[j];
                        cp[j] += c * wrow[j];
                    }
                    if (gb) gb[r] = c;
                }
            } else if (const auto* cv = std::get_if<Conv2dLayer>(&layer)) {
                conv_backward(*cv, i, cot->data(), grad + w_span_[i].first,
                              cv->bias ? grad + b_span_[i].first : nullptr, cotp->data());
            } else if (const auto* a = std::get_if<ActivationLayer>(&layer)) {
                const double* z = acts_[i].data();
                const double* y = acts_[i + 1].data();
                if (a->fn == ActivationFn::Relu) {
                    for (std::size_t p = 0; p < n_in; ++p)
                        (*cotp)[p] = z[p] > 0.0 ? (*cot)[p] : 0.0;
                } else {
                    for (std::size_t p = 0; p < n_in; ++p) (*cotp)[p] = (1.0 - y[p] * y[p]) * (*cot)[p];
                }
            } else {  // flatten
                std::memcpy(cotp->data(), cot->data(), n_in * sizeof(double));
            }
            std::swap(cot, cotp);
        }
    }

    // Reverse pass pulling back all n_cot basis cotangents together.
    // jac rows live at jac + o*stride; wdst/bdst give each layer's weight and
    // bias column offsets within a row, or -1 when the layer is masked out.
    // Cotangent buffers use [position*n_cot + o] layout so the innermost loop
    // runs contiguously over cotangents while each weight is loaded once.
    void backward_multi(double* jac, std::size_t stride, const std::vector<std::ptrdiff_t>& wdst,
                        const std::vector<std::ptrdiff_t>& bdst) {
        const std::size_t no = out_count_;
        mcot_a_.assign(no * no, 0.0);
        for (std::size_t o = 0; o < no; ++o) mcot_a_[o * no + o] = 1.0;
        std::vector<double>* cot = &mcot_a_;
        std::vector<double>* cotp = &mcot_b_;
        for (std::size_t i = n_layers_; i-- > 0;) {
            const auto& layer = spec_.layers[i];
            const std::size_t n_in = sizes_[i];
            cotp->assign(n_in * no, 0.0);
            if (const auto* d = std::get_if<DenseLayer>(&layer)) {
                const double* a = acts_[i].data();
                const double* w = lp_[i].w;
                if (wdst[i] >= 0) {
                    // o-outer keeps every Jacobian row write fully sequential
                    for (std::size_t o = 0; o < no; ++o) {
                        double* row = jac + o * stride;
                        for (std::size_t r = 0; r < d->out; ++r) {
                            const double c = (*cot)[r * no + o];
                            scale_row_into(row + wdst[i] + r * d->in, a, c, d->in);
                            if (bdst[i] >= 0) row[bdst[i] + r] = c;
                        }
                    }
                    store_fence();
                }
                if (DensePullbackFn kern = dense_pullback_for(no)) {
                    kern(transposed_weights(i, *d), cot->data(), cotp->data(), d->in, d->out);
                } else {
                    // generic path: one streaming pass over W updates every row
                    for (std::size_t r = 0; r < d->out; ++r) {
                        const double* wrow = w + r * d->in;
                        const double* crow = cot->data() + r * no;
                        double* cp = cotp->data();
                        for (std::size_t j = 0; j < d->in; ++j) {
                            const double wv = wrow[j];
                            double* dst = cp + j * no;
                            for (std::size_t o = 0; o < no; ++o) dst[o] += wv * crow[o];
                        }
                    }
                }
            } else if (const auto* cv = std::get_if<Conv2dLayer>(&layer)) {
                // small convolutions: reuse the scalar path per cotangent
                const std::size_t n_out = sizes_[i + 1];
                scratch_out_.assign(n_out, 0.0);
                scratch_in_.assign(n_in, 0.0);
                for (std::size_t o = 0; o < no; ++o) {
                    for (std::size_t p = 0; p < n_out; ++p) scratch_out_[p] = (*cot)[p * no + o];
                    std::fill(scratch_in_.begin(), scratch_in_.end(), 0.0);
                    double* gw = wdst[i] >= 0 ? jac + o * stride + wdst[i] : conv_gw_sink(*cv);
                    double* gb = (cv->bias && bdst[i] >= 0) ? jac + o * stride + bdst[i]
                                                            : (cv->bias ? conv_gb_sink(*cv) : nullptr);
                    if (wdst[i] >= 0) {
                        std::memset(gw, 0, cv->out_channels * cv->in_channels * cv->kh * cv->kw *
                                               sizeof(double));
                        if (gb) std::memset(gb, 0, cv->out_channels * sizeof(double));
                    }
                    conv_backward(*cv, i, scratch_out_.data(), gw, gb, scratch_in_.data());
                    for (std::size_t p = 0; p < n_in; ++p) (*cotp)[p * no + o] = scratch_in_[p];
                }
            } else if (const auto* a = std::get_if<ActivationLayer>(&layer)) {
                const double* z = acts_[i].data();
                const double* y = acts_[i + 1].data();
                if (a->fn == ActivationFn::Relu) {
                    for (std::size_t p = 0; p < n_in; ++p) {
                        const bool on = z[p] > 0.0;
                        const double* src = cot->data() + p * no;
                        double* dst = cotp->data() + p * no;
                        for (std::size_t o = 0; o < no; ++o) dst[o] = on ? src[o] : 0.0;
                    }
                } else {
                    for (std::size_t p = 0; p < n_in; ++p) {
                        const double dz = 1.0 - y[p] * y[p];
                        const double* src = cot->data() + p * no;
                        double* dst = cotp->data() + p * no;
                        for (std::size_t o = 0; o < no; ++o) dst[o] = dz * src[o];
                    }
                }
            } else {
                std::memcpy(cotp->data(), cot->data(), n_in * no * sizeof(double));
            }
            std::swap(cot, cotp);
        }
    }

    // Forward-mode dual pass; tangent is a full-length parameter vector.
    void jvp_run(const double* x, const double* tangent, double* out_dot) {
        std::memcpy(acts_[0].data(), x, sizes_[0] * sizeof(double));
        dual_a_.assign(sizes_[0], 0.0);
        std::vector<double>* dot = &dual_a_;
        std::vector<double>* dotn = &dual_b_;
        for (std::size_t i = 0; i < n_layers_; ++i) {
            const auto& layer = spec_.layers[i];
            const std::size_t n_out = sizes_[i + 1];
            dotn->assign(n_out, 0.0);
            const double* a = acts_[i].data();
            double* nexta = acts_[i + 1].data();
            if (const auto* d = std::get_if<DenseLayer>(&layer)) {
                const double* w = lp_[i].w;
                const double* vw = tangent + w_span_[i].first;
                const double* vb = d->bias ? tangent + b_span_[i].first : nullptr;
                for (std::size_t r = 0; r < d->out; ++r) {
                    double s = lp_[i].b ? lp_[i].b[r] : 0.0;
                    double sd = vb ? vb[r] : 0.0;
                    const double* wrow = w + r * d->in;
                    const double* vrow = vw + r * d->in;
                    for (std::size_t j = 0; j < d->in; ++j) {
                        s += wrow[j] * a[j];
                        sd += vrow[j] * a[j] + wrow[j] * (*dot)[j];
                    }
                    nexta[r] = s;
                    (*dotn)[r] = sd;
                }
            } else if (const auto* cv = std::get_if<Conv2dLayer>(&layer)) {
                const std::size_t h = shapes_[i][1], w2 = shapes_[i][2];
                const std::size_t oh = h - cv->kh + 1, ow = w2 - cv->kw + 1;
                const double* w = lp_[i].w;
                const double* vw = tangent + w_span_[i].first;
                const double* vb = cv->bias ? tangent + b_span_[i].first : nullptr;
                for (std::size_t oc = 0; oc < cv->out_channels; ++oc) {
                    for (std::size_t y = 0; y < oh; ++y) {
                        for (std::size_t xx = 0; xx < ow; ++xx) {
                            double s = lp_[i].b ? lp_[i].b[oc] : 0.0;
                            double sd = vb ? vb[oc] : 0.0;
                            for (std::size_t ic = 0; ic < cv->in_channels; ++ic) {
                                for (std::size_t ky = 0; ky < cv->kh; ++ky) {
                                    const std::size_t wbase =
                                        ((oc * cv->in_channels + ic) * cv->kh + ky) * cv->kw;
                                    const std::size_t ibase = (ic * h + y + ky) * w2 + xx;
                                    for (std::size_t kx = 0; kx < cv->kw; ++kx) {
                                        s += w[wbase + kx] * a[ibase + kx];
                                        sd += vw[wbase + kx] * a[ibase + kx] +
                                              w[wbase + kx] * (*dot)[ibase + kx];
                                    }
                                }
                            }
                            nexta[(oc * oh + y) * ow + xx] = s;
                            (*dotn)[(oc * oh + y) * ow + xx] = sd;
                        }
                    }
                }
            } else if (const auto* av = std::get_if<ActivationLayer>(&layer)) {
                if (av->fn == ActivationFn::Relu) {
                    for (std::size_t p = 0; p < n_out; ++p) {
                        nexta[p] = a[p] > 0.0 ? a[p] : 0.0;
                        (*dotn)[p] = a[p] > 0.0 ? (*dot)[p] : 0.0;
                    }
                } else {
                    for (std::size_t p = 0; p < n_out; ++p) {
                        const double y = std::tanh(a[p]);
                        nexta[p] = y;
                        (*dotn)[p] = (1.0 - y * y) * (*dot)[p];
                    }
                }
            } else {
                std::memcpy(nexta, a, n_out * sizeof(double));
                std::memcpy(dotn->data(), dot->data(), n_out * sizeof(double));
            }
            std::swap(dot, dotn);
        }
        std::memcpy(out_dot, dot->data(), out_count_ * sizeof(double));
    }

private:
    void conv_backward(const Conv2dLayer& cv, std::size_t i, const double* cot, double* gw,
                       double* gb, double* cot_in) {
        const std::size_t h = shapes_[i][1], w2 = shapes_[i][2];
        const std::size_t oh = h - cv.kh + 1, ow = w2 - cv.kw + 1;
        const double* a = acts_[i].data();
        const double* w = lp_[i].w;
        for (std::size_t oc = 0; oc < cv.out_channels; ++oc) {
            for (std::size_t y = 0; y < oh; ++y) {
                for (std::size_t xx = 0; xx < ow; ++xx) {
                    const double c = cot[(oc * oh + y) * ow + xx];
                    if (gb) gb[oc] += c;
                    for (std::size_t ic = 0; ic < cv.in_channels; ++ic) {
                        for (std::size_t ky = 0; ky < cv.kh; ++ky) {
                            const std::size_t wbase =
                                ((oc * cv.in_channels + ic) * cv.kh + ky) * cv.kw;
                            const std::size_t ibase = (ic * h + y + ky) * w2 + xx;
                            for (std::size_t kx = 0; kx < cv.kw; ++kx) {
                                gw[wbase + kx] += c * a[ibase + kx];
                                cot_in[ibase + kx] += c * w[wbase + kx];
                            }
                        }
                    }
                }
            }
        }
    }

    // Lazily transposed dense weights (n_in x n_out), shared across samples.
    const double* transposed_weights(std::size_t i, const DenseLayer& d) {
        if (wt_.size() != spec_.layers.size()) wt_.resize(spec_.layers.size());
        if (wt_[i].empty()) {
            const double* w = lp_[i].w;
            wt_[i].resize(d.in * d.out);
            for (std::size_t r = 0; r < d.out; ++r)
                for (std::size_t j = 0; j < d.in; ++j) wt_[i][j * d.out + r] = w[r * d.in + j];
        }
        return wt_[i].data();
    }

    double* conv_gw_sink(const Conv2dLayer& cv) {
        gw_sink_.assign(cv.out_channels * cv.in_channels * cv.kh * cv.kw, 0.0);
        return gw_sink_.data();
    }
    double* conv_gb_sink(const Conv2dLayer& cv) {
        gb_sink_.assign(cv.out_channels, 0.0);
        return gb_sink_.data();
    }

    const ModelSpec& spec_;
    std::vector<detail::LayerPtrs> lp_;
    std::vector<std::vector<std::size_t>> shapes_;
    std::vector<std::size_t> sizes_;
    std::size_t n_layers_, out_count_, param_count_;
    std::vector<std::pair<std::size_t, std::size_t>> w_span_, b_span_;
    std::vector<std::vector<double>> acts_;
    std::vector<std::vector<double>> wt_;
    std::vector<double> cot_a_, cot_b_, mcot_a_, mcot_b_, dual_a_, dual_b_;
    std::vector<double> scratch_out_, scratch_in_, gw_sink_, gb_sink_;
};

}  // namespace

struct AdWorkspace::Impl {
    Impl(const ModelSpec& spec, const ParamVector& params)
        : eng(spec, params), param_count(params.param_count()) {}
    Engine eng;
    std::size_t param_count;
};

AdWorkspace::AdWorkspace(const ModelSpec& spec, const ParamVector& params)
    : impl_(std::make_unique<Impl>(spec, params)) {}
AdWorkspace::~AdWorkspace() = default;
AdWorkspace::AdWorkspace(AdWorkspace&&) noexcept = default;
AdWorkspace& AdWorkspace::operator=(AdWorkspace&&) noexcept = default;

void AdWorkspace::vjp(const double* x, const double* cotangent, double* grad) {
    std::memset(grad, 0, impl_->param_count * sizeof(double));
    impl_->eng.forward_trace(x);
    impl_->eng.backward_one(cotangent, grad);
}

void AdWorkspace::jvp(const double* x, const double* tangent, double* out) {
    impl_->eng.jvp_run(x, tangent, out);
}

std::vector<double> vjp(const ModelSpec& spec, const ParamVector& params, const Tensor& x,
                        const std::vector<double>& cotangent) {
    check_sample(spec, x);
    if (cotangent.size() != spec.output_count) {
        throw Error(ErrorKind::Dimension,
                    "vjp: cotangent length " + std::to_string(cotangent.size()) +
                        " does not match output count " + std::to_string(spec.output_count));
    }
    AdWorkspace ws(spec, params);
    std::vector<double> grad(params.param_count(), 0.0);
    ws.vjp(x.data.data(), cotangent.data(), grad.data());
    return grad;
}

std::vector<double> jvp(const ModelSpec& spec, const ParamVector& params, const Tensor& x,
                        const std::vector<double>& tangent) {
    check_sample(spec, x);
    if (tangent.size() != params.param_count()) {
        throw Error(ErrorKind::Dimension,
                    "jvp: tangent length " + std::to_string(tangent.size()) +
                        " does not match parameter count " + std::to_string(params.param_count()));
    }
    AdWorkspace ws(spec, params);
    std::vector<double> out(spec.output_count, 0.0);
    ws.jvp(x.data.data(), tangent.data(), out.data());
    return out;
}

namespace {

void make_jacobian_shell(const ModelSpec& spec, const ParamVector& params, const Tensor& x_batch,
                         const LayerMask& mask, Jacobian& jac) {
    check_batch(spec, x_batch);
    jac.mask = mask;
    jac.columns = mask_segments(spec, params, mask);
    std::size_t pm = 0;
    for (const auto& s : jac.columns) pm += s.length;
    const std::vector<std::size_t> shape{x_batch.shape[0], spec.output_count, pm};
    if (jac.values.shape != shape) jac.values = Tensor::zeros(shape);
}

}  // namespace

void jacobian_naive_into(const ModelSpec& spec, const ParamVector& params, const Tensor& x_batch,
                         const LayerMask& mask, Jacobian& jac) {
    make_jacobian_shell(spec, params, x_batch, mask, jac);
    const std::size_t batch = x_batch.shape[0];
    const std::size_t no = spec.output_count;
    const std::size_t pm = jac.cols();
    const std::size_t sample_len = x_batch.row_stride();
    std::vector<std::size_t> sample_shape(x_batch.shape.begin() + 1, x_batch.shape.end());
    std::vector<double> cot(no);
    for (std::size_t i = 0; i < batch; ++i) {
        Tensor x(sample_shape, std::vector<double>(x_batch.row_ptr(i),
                                                   x_batch.row_ptr(i) + sample_len));
        for (std::size_t o = 0; o < no; ++o) {
            std::fill(cot.begin(), cot.end(), 0.0);
            cot[o] = 1.0;
            // one independent vjp call per logit, with its own forward pass
            const std::vector<double> grad = vjp(spec, params, x, cot);
            double* dst = jac.values.data.data() + (i * no + o) * pm;
            for (const auto& seg : jac.columns) {
                std::memcpy(dst + seg.masked_start, grad.data() + seg.param_start,
                            seg.length * sizeof(double));
            }
        }
    }
}

Jacobian jacobian_naive(const ModelSpec& spec, const ParamVector& params, const Tensor& x_batch,
                        const LayerMask& mask) {
    Jacobian jac;
    jacobian_naive_into(spec, params, x_batch, mask, jac);
    return jac;
}

void jacobian_batched_into(const ModelSpec& spec, const ParamVector& params, const Tensor& x_batch,
                           const LayerMask& mask, Jacobian& jac) {
    make_jacobian_shell(spec, params, x_batch, mask, jac);
    Engine eng(spec, params);
    const std::size_t batch = x_batch.shape[0];
    const std::size_t no = spec.output_count;
    const std::size_t pm = jac.cols();

    // destination column of each layer's weight/bias block, -1 if unmasked
    const auto param_layers = spec.param_layer_indices();
    std::vector<std::ptrdiff_t> wdst(spec.layers.size(), -1), bdst(spec.layers.size(), -1);
    for (std::size_t mi = 0; mi < mask.size(); ++mi) {
        const std::size_t layer = param_layers[mask[mi]];
        const auto& seg = jac.columns[mi];
        std::size_t wlen = 0;
        if (const auto* d = std::get_if<DenseLayer>(&spec.layers[layer])) {
            wlen = d->in * d->out;
            if (d->bias) bdst[layer] = static_cast<std::ptrdiff_t>(seg.masked_start + wlen);
        } else if (const auto* c = std::get_if<Conv2dLayer>(&spec.layers[layer])) {
            wlen = c->out_channels * c->in_channels * c->kh * c->kw;
            if (c->bias) bdst[layer] = static_cast<std::ptrdiff_t>(seg.masked_start + wlen);
        }
        wdst[layer] = static_cast<std::ptrdiff_t>(seg.masked_start);
    }

    for (std::size_t i = 0; i < batch; ++i) {
        eng.forward_trace(x_batch.row_ptr(i));  // one shared forward trace per sample
        eng.backward_multi(jac.values.data.data() + i * no * pm, pm, wdst, bdst);
    }
}

Jacobian jacobian_batched(const ModelSpec& spec, const ParamVector& params, const Tensor& x_batch,
                          const LayerMask& mask) {
    Jacobian jac;
    jacobian_batched_into(spec, params, x_batch, mask, jac);
    return jac;
}

Jacobian finite_difference_jacobian(const ModelSpec& spec, const ParamVector& params,
                                    const Tensor& x_batch, double h) {
    if (!(h > 0.0)) throw Error(ErrorKind::Dimension, "finite differences need a step h > 0");
    const LayerMask mask = full_mask(spec);
    Jacobian jac;
    make_jacobian_shell(spec, params, x_batch, mask, jac);
    const std::size_t batch = x_batch.shape[0];
    const std::size_t no = spec.output_count;
    const std::size_t p = params.param_count();
    ParamVector perturbed = params;
    for (std::size_t pi = 0; pi < p; ++pi) {
        const double saved = perturbed.data[pi];
        perturbed.data[pi] = saved + h;
        const Tensor plus = forward(spec, perturbed, x_batch);
        perturbed.data[pi] = saved - h;
        const Tensor minus = forward(spec, perturbed, x_batch);
        perturbed.data[pi] = saved;
        for (std::size_t i = 0; i < batch; ++i) {
            for (std::size_t o = 0; o < no; ++o) {
                jac.values.data[(i * no + o) * p + pi] = (plus.at(i, o) - minus.at(i, o)) / (2.0 * h);
            }
        }
    }
    return jac;
}

}  // namespace entk
