#include "entk/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "entk/rng.hpp"

namespace entk {

bool layer_has_params(const LayerSpec& layer) {
    return std::holds_alternative<DenseLayer>(layer) || std::holds_alternative<Conv2dLayer>(layer);
}

std::size_t layer_param_count(const LayerSpec& layer) {
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
        return d->in * d->out + (d->bias ? d->out : 0);
    }
    if (const auto* c = std::get_if<Conv2dLayer>(&layer)) {
        return c->out_channels * c->in_channels * c->kh * c->kw +
               (c->bias ? c->out_channels : 0);
    }
    return 0;
}

namespace {

std::string shape_to_string(const std::vector<std::size_t>& s) {
    std::ostringstream os;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << "x";
        os << s[i];
    }
    return os.str();
}

std::size_t shape_product(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (auto e : s) n *= e;
    return n;
}

std::vector<std::size_t> layer_output_shape(const LayerSpec& layer,
                                            const std::vector<std::size_t>& in,
                                            std::size_t index) {
    auto fail = [&](const std::string& why) -> std::vector<std::size_t> {
        throw Error(ErrorKind::Spec,
                    "layer " + std::to_string(index) + ": " + why + " (incoming shape " +
                        shape_to_string(in) + ")");
    };
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
        if (d->in < 1 || d->out < 1) return fail("dense extents must be >= 1");
        if (in.size() != 1 || in[0] != d->in)
            return fail("dense expects a length-" + std::to_string(d->in) + " vector");
        return {d->out};
    }
    if (const auto* c = std::get_if<Conv2dLayer>(&layer)) {
        if (c->in_channels < 1 || c->out_channels < 1 || c->kh < 1 || c->kw < 1)
            return fail("conv2d extents must be >= 1");
        if (in.size() != 3 || in[0] != c->in_channels)
            return fail("conv2d expects [" + std::to_string(c->in_channels) + ",H,W] input");
        if (in[1] < c->kh || in[2] < c->kw) return fail("conv2d kernel larger than input");
        return {c->out_channels, in[1] - c->kh + 1, in[2] - c->kw + 1};
    }
    if (std::holds_alternative<FlattenLayer>(layer)) {
        return {shape_product(in)};
    }
    return in;  // activation
}

}  // namespace

void ModelSpec::validate() {
    if (input_shape.empty() || input_shape.size() > 3) {
        throw Error(ErrorKind::Spec, "input shape must have 1 to 3 extents");
    }
    for (auto e : input_shape) {
        if (e == 0) throw Error(ErrorKind::Spec, "input extents must be >= 1");
    }
    if (layers.empty()) throw Error(ErrorKind::Spec, "model has no layers");
    std::vector<std::size_t> shape = input_shape;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        shape = layer_output_shape(layers[i], shape, i);
    }
    if (shape.size() != 1) {
        throw Error(ErrorKind::Spec,
                    "final layer must produce a flat logit vector, got shape " +
                        shape_to_string(shape) + " (add a flatten layer)");
    }
    output_count = shape[0];
}

std::vector<std::size_t> ModelSpec::shape_after(std::size_t layer_index) const {
    std::vector<std::size_t> shape = input_shape;
    for (std::size_t i = 0; i <= layer_index && i < layers.size(); ++i) {
        shape = layer_output_shape(layers[i], shape, i);
    }
    return shape;
}

std::vector<std::size_t> ModelSpec::param_layer_indices() const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layer_has_params(layers[i])) idx.push_back(i);
    }
    return idx;
}

std::size_t ModelSpec::param_count() const {
    std::size_t p = 0;
    for (const auto& l : layers) p += layer_param_count(l);
    return p;
}

ModelSpec ModelSpec::parse(const std::string& text) {
    ModelSpec spec;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    bool have_input = false;
    while (std::getline(in, line)) {
        ++lineno;
        // strip comments and whitespace
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        std::istringstream ls(line);
        std::string word;
        if (!(ls >> word)) continue;
        auto fail = [&](const std::string& why) {
            throw Error(ErrorKind::Spec, "model spec line " + std::to_string(lineno) + ": " + why);
        };
        if (word == "input") {
            std::string rest;
            if (!(ls >> rest)) fail("input needs extents D1[,D2,D3]");
            std::istringstream es(rest);
            std::string tok;
            while (std::getline(es, tok, ',')) {
                spec.input_shape.push_back(std::stoull(tok));
            }
            have_input = true;
        } else if (word == "dense") {
            DenseLayer d;
            if (!(ls >> d.in >> d.out)) fail("dense needs IN OUT");
            std::string opt;
            if (ls >> opt) {
                if (opt != "bias") fail("unknown dense option '" + opt + "'");
                d.bias = true;
            }
            spec.layers.emplace_back(d);
        } else if (word == "conv2d") {
            Conv2dLayer c;
            if (!(ls >> c.in_channels >> c.out_channels >> c.kh >> c.kw))
                fail("conv2d needs CIN COUT KH KW");
            std::string opt;
            if (ls >> opt) {
                if (opt != "bias") fail("unknown conv2d option '" + opt + "'");
                c.bias = true;
            }
            spec.layers.emplace_back(c);
        } else if (word == "relu") {
            spec.layers.emplace_back(ActivationLayer{ActivationFn::Relu});
        } else if (word == "tanh") {
            spec.layers.emplace_back(ActivationLayer{ActivationFn::Tanh});
        } else if (word == "flatten") {
            spec.layers.emplace_back(FlattenLayer{});
        } else {
            fail("unknown layer kind '" + word + "'");
        }
    }
    if (!have_input) throw Error(ErrorKind::Spec, "model spec is missing an 'input' line");
    spec.validate();
    return spec;
}

ModelSpec ModelSpec::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open model spec file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::string ModelSpec::to_text() const {
    std::ostringstream os;
    os << "input ";
    for (std::size_t i = 0; i < input_shape.size(); ++i) {
        if (i) os << ",";
        os << input_shape[i];
    }
    os << "\n";
    for (const auto& layer : layers) {
        if (const auto* d = std::get_if<DenseLayer>(&layer)) {
            os << "dense " << d->in << " " << d->out << (d->bias ? " bias" : "") << "\n";
        } else if (const auto* c = std::get_if<Conv2dLayer>(&layer)) {
            os << "conv2d " << c->in_channels << " " << c->out_channels << " " << c->kh << " "
               << c->kw << (c->bias ? " bias" : "") << "\n";
        } else if (const auto* a = std::get_if<ActivationLayer>(&layer)) {
            os << (a->fn == ActivationFn::Relu ? "relu" : "tanh") << "\n";
        } else {
            os << "flatten\n";
        }
    }
    return os.str();
}

std::pair<std::size_t, std::size_t> ParamVector::layer_span(std::size_t param_layer) const {
    std::size_t start = 0, length = 0;
    bool found = false;
    for (const auto& b : offsets) {
        if (b.param_layer == param_layer) {
            if (!found) start = b.start;
            length += b.length;
            found = true;
        }
    }
    if (!found) {
        throw Error(ErrorKind::Dimension,
                    "no parameterized layer with ordinal " + std::to_string(param_layer));
    }
    return {start, length};
}

ParamVector make_param_layout(const ModelSpec& spec) {
    ParamVector pv;
    std::size_t cursor = 0;
    std::size_t ordinal = 0;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const auto& layer = spec.layers[i];
        if (!layer_has_params(layer)) continue;
        std::size_t weights = 0, biases = 0;
        if (const auto* d = std::get_if<DenseLayer>(&layer)) {
            weights = d->in * d->out;
            biases = d->bias ? d->out : 0;
        } else if (const auto* c = std::get_if<Conv2dLayer>(&layer)) {
            weights = c->out_channels * c->in_channels * c->kh * c->kw;
            biases = c->bias ? c->out_channels : 0;
        }
        pv.offsets.push_back({i, ordinal, cursor, weights, false});
        cursor += weights;
        if (biases > 0) {
            pv.offsets.push_back({i, ordinal, cursor, biases, true});
            cursor += biases;
        }
        ++ordinal;
    }
    pv.data.assign(cursor, 0.0);
    return pv;
}

namespace {

// A parameterized layer "feeds relu" when the next activation downstream
// (looking through flatten) is a relu.
bool feeds_relu(const ModelSpec& spec, std::size_t layer_index) {
    for (std::size_t j = layer_index + 1; j < spec.layers.size(); ++j) {
        if (const auto* a = std::get_if<ActivationLayer>(&spec.layers[j])) {
            return a->fn == ActivationFn::Relu;
        }
        if (layer_has_params(spec.layers[j])) return false;
    }
    return false;
}

std::size_t layer_fan_in(const LayerSpec& layer) {
    if (const auto* d = std::get_if<DenseLayer>(&layer)) return d->in;
    if (const auto* c = std::get_if<Conv2dLayer>(&layer)) return c->in_channels * c->kh * c->kw;
    return 1;
}

}  // namespace

ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
    ModelSpec checked = spec;
    checked.validate();
    ParamVector pv = make_param_layout(spec);
    pv.seed = seed;
    GaussianStream gauss(seed);
    for (const auto& block : pv.offsets) {
        if (block.is_bias) continue;  // biases stay zero, no stream consumption
        const auto& layer = spec.layers[block.layer];
        const double fan_in = static_cast<double>(layer_fan_in(layer));
        const double std_dev =
            feeds_relu(spec, block.layer) ? std::sqrt(2.0 / fan_in) : std::sqrt(1.0 / fan_in);
        for (std::size_t i = 0; i < block.length; ++i) {
            pv.data[block.start + i] = std_dev * gauss.next();
        }
    }
    return pv;
}

namespace detail {

std::vector<LayerPtrs> layer_param_ptrs(const ModelSpec& spec, const ParamVector& params) {
    std::vector<LayerPtrs> lp(spec.layers.size());
    for (const auto& block : params.offsets) {
        if (block.is_bias)
            lp[block.layer].b = params.data.data() + block.start;
        else
            lp[block.layer].w = params.data.data() + block.start;
    }
    return lp;
}

std::vector<std::vector<std::size_t>> layer_io_shapes(const ModelSpec& spec) {
    std::vector<std::vector<std::size_t>> shapes;
    shapes.reserve(spec.layers.size() + 1);
    shapes.push_back(spec.input_shape);
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        shapes.push_back(layer_output_shape(spec.layers[i], shapes.back(), i));
    }
    return shapes;
}

// Per-sample forward through one layer; buffers sized by the caller.
void apply_layer(const LayerSpec& layer, const double* params_w, const double* params_b,
                 const std::vector<std::size_t>& in_shape, const double* in, double* out) {
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
        for (std::size_t i = 0; i < d->out; ++i) {
            double s = params_b ? params_b[i] : 0.0;
            const double* wrow = params_w + i * d->in;
            for (std::size_t j = 0; j < d->in; ++j) s += wrow[j] * in[j];
            out[i] = s;
        }
    } else if (const auto* c = std::get_if<Conv2dLayer>(&layer)) {
        const std::size_t h = in_shape[1], w = in_shape[2];
        const std::size_t oh = h - c->kh + 1, ow = w - c->kw + 1;
        for (std::size_t oc = 0; oc < c->out_channels; ++oc) {
            for (std::size_t y = 0; y < oh; ++y) {
                for (std::size_t x = 0; x < ow; ++x) {
                    double s = params_b ? params_b[oc] : 0.0;
                    for (std::size_t ic = 0; ic < c->in_channels; ++ic) {
                        for (std::size_t ky = 0; ky < c->kh; ++ky) {
                            const double* wrow =
                                params_w + ((oc * c->in_channels + ic) * c->kh + ky) * c->kw;
                            const double* irow = in + (ic * h + y + ky) * w + x;
                            for (std::size_t kx = 0; kx < c->kw; ++kx) s += wrow[kx] * irow[kx];
                        }
                    }
                    out[(oc * oh + y) * ow + x] = s;
                }
            }
        }
    } else if (const auto* a = std::get_if<ActivationLayer>(&layer)) {
        const std::size_t n = shape_product(in_shape);
        if (a->fn == ActivationFn::Relu) {
            for (std::size_t i = 0; i < n; ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
        } else {
            for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(in[i]);
        }
    } else {  // flatten: plain copy
        const std::size_t n = shape_product(in_shape);
        std::memcpy(out, in, n * sizeof(double));
    }
}

}  // namespace detail

Tensor forward(const ModelSpec& spec, const ParamVector& params, const Tensor& x_batch) {
    if (x_batch.rank() < 2) {
        throw Error(ErrorKind::Dimension, "forward: x_batch needs a leading batch extent");
    }
    std::vector<std::size_t> sample_shape(x_batch.shape.begin() + 1, x_batch.shape.end());
    if (sample_shape != spec.input_shape) {
        throw Error(ErrorKind::Dimension,
                    "forward: sample shape " + shape_to_string(sample_shape) +
                        " does not match model input " + shape_to_string(spec.input_shape));
    }
    if (params.param_count() != spec.param_count()) {
        throw Error(ErrorKind::Dimension, "forward: parameter vector length mismatch");
    }
    const std::size_t batch = x_batch.shape[0];
    const std::size_t out_count = spec.output_count;
    Tensor logits = Tensor::zeros({batch, out_count});
    const auto lp = detail::layer_param_ptrs(spec, params);

    std::vector<double> bufa, bufb;
    const std::size_t sample_len = shape_product(sample_shape);
    for (std::size_t s = 0; s < batch; ++s) {
        bufa.assign(x_batch.row_ptr(s), x_batch.row_ptr(s) + sample_len);
        std::vector<std::size_t> shape = spec.input_shape;
        for (std::size_t i = 0; i < spec.layers.size(); ++i) {
            auto out_shape = layer_output_shape(spec.layers[i], shape, i);
            bufb.assign(shape_product(out_shape), 0.0);
            detail::apply_layer(spec.layers[i], lp[i].w, lp[i].b, shape, bufa.data(), bufb.data());
            bufa.swap(bufb);
            shape = std::move(out_shape);
        }
        std::memcpy(logits.row_ptr(s), bufa.data(), out_count * sizeof(double));
    }
    return logits;
}

namespace {

void append_le_doubles(Sha256& h, const double* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        const auto bits = std::bit_cast<std::uint64_t>(p[i]);
        std::uint8_t le[8];
        for (int b = 0; b < 8; ++b) le[b] = std::uint8_t(bits >> (8 * b));
        h.update(le, 8);
    }
}

}  // namespace

Digest model_fingerprint(const ModelSpec& spec, const ParamVector& params) {
    Sha256 h;
    const std::string text = spec.to_text();
    h.update(text.data(), text.size());
    append_le_doubles(h, params.data.data(), params.data.size());
    return h.finish();
}

Digest data_fingerprint(const Tensor& x) {
    Sha256 h;
    append_le_doubles(h, x.data.data(), x.data.size());
    return h.finish();
}

}  // namespace entk
