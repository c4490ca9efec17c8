#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "entk/sha256.hpp"
#include "entk/tensor.hpp"

namespace entk {

enum class ActivationFn { Relu, Tanh };

struct DenseLayer {
    std::size_t in = 0, out = 0;
    bool bias = false;
};

// Stride 1, valid padding, channels-first [C,H,W].
struct Conv2dLayer {
    std::size_t in_channels = 0, out_channels = 0;
    std::size_t kh = 0, kw = 0;
    bool bias = false;
};

struct ActivationLayer {
    ActivationFn fn = ActivationFn::Relu;
};

struct FlattenLayer {};

using LayerSpec = std::variant<DenseLayer, Conv2dLayer, ActivationLayer, FlattenLayer>;

bool layer_has_params(const LayerSpec& layer);
std::size_t layer_param_count(const LayerSpec& layer);

// Declarative stack of layers. output_count (O) is derived by validate().
struct ModelSpec {
    std::vector<LayerSpec> layers;
    std::vector<std::size_t> input_shape;  // [d] or [c,h,w]
    std::size_t output_count = 0;

    // Throws a spec error naming the first incompatible layer pair.
    void validate();

    // Shape flowing out of layers[0..i], or the input shape for i == npos.
    std::vector<std::size_t> shape_after(std::size_t layer_index) const;

    // Indices into `layers` of parameterized layers, in stack order.
    std::vector<std::size_t> param_layer_indices() const;
    std::size_t param_layer_count() const { return param_layer_indices().size(); }
    std::size_t param_count() const;

    // One-layer-per-line text format; parse() round-trips to_text().
    static ModelSpec parse(const std::string& text);
    static ModelSpec load(const std::string& path);
    std::string to_text() const;
};

// One contiguous slice of the flat parameter vector: a weight or bias tensor.
struct ParamBlock {
    std::size_t layer;        // index into spec.layers
    std::size_t param_layer;  // ordinal among parameterized layers
    std::size_t start;
    std::size_t length;
    bool is_bias;
};

struct ParamVector {
    std::vector<double> data;        // length P
    std::vector<ParamBlock> offsets; // ascending, disjoint, tiling [0, P)
    std::uint64_t seed = 0;

    std::size_t param_count() const { return data.size(); }

    // Contiguous [start, start+length) span owned by one parameterized layer.
    std::pair<std::size_t, std::size_t> layer_span(std::size_t param_layer) const;
};

// Layout (and RNG consumption) order: layer by layer, weights row-major,
// then biases. Weights ~ N(0, 2/fan_in) when the layer feeds a relu,
// N(0, 1/fan_in) otherwise; biases are zero and consume no randomness.
ParamVector init_params(const ModelSpec& spec, std::uint64_t seed);

// Block layout without the random fill, for loading params from a file.
ParamVector make_param_layout(const ModelSpec& spec);

// Batched forward pass. x_batch is [B x input_shape...]; result is [B x O].
// Rows are processed independently sample by sample.
Tensor forward(const ModelSpec& spec, const ParamVector& params, const Tensor& x_batch);

// SHA-256 over the canonical spec text followed by the raw param bytes.
Digest model_fingerprint(const ModelSpec& spec, const ParamVector& params);

// SHA-256 over raw row-major sample bytes (little-endian doubles).
Digest data_fingerprint(const Tensor& x);

namespace detail {

struct LayerPtrs {
    const double* w = nullptr;
    const double* b = nullptr;
};

// Weight/bias pointers per layer index (null where absent).
std::vector<LayerPtrs> layer_param_ptrs(const ModelSpec& spec, const ParamVector& params);

// shapes[i] is the input shape of layers[i]; shapes[L] is the output shape.
std::vector<std::vector<std::size_t>> layer_io_shapes(const ModelSpec& spec);

void apply_layer(const LayerSpec& layer, const double* params_w, const double* params_b,
                 const std::vector<std::size_t>& in_shape, const double* in, double* out);

}  // namespace detail

}  // namespace entk
