#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "entk/model.hpp"
#include "entk/tensor.hpp"

namespace entk {

// Sorted, duplicate-free ordinals of parameterized layers (0-based in stack
// order). A kernel or Jacobian restricted by a mask only carries parameter
// columns belonging to the selected layers.
using LayerMask = std::vector<std::uint32_t>;

LayerMask full_mask(const ModelSpec& spec);
void validate_mask(const ModelSpec& spec, const LayerMask& mask);
bool mask_is_full(const ModelSpec& spec, const LayerMask& mask);

// Maps a contiguous run of masked columns back to parameter space.
struct ColSegment {
    std::size_t masked_start;
    std::size_t param_start;
    std::size_t length;
};

std::vector<ColSegment> mask_segments(const ModelSpec& spec, const ParamVector& params,
                                      const LayerMask& mask);
std::size_t masked_param_count(const ModelSpec& spec, const ParamVector& params,
                               const LayerMask& mask);

// B x O x Pm array of per-logit parameter gradients, columns restricted to
// the layer mask (Pm == P when the mask is full).
struct Jacobian {
    Tensor values;  // [B x O x Pm]
    LayerMask mask;
    std::vector<ColSegment> columns;

    std::size_t batch() const { return values.shape[0]; }
    std::size_t outputs() const { return values.shape[1]; }
    std::size_t cols() const { return values.shape[2]; }
    const double* row(std::size_t i, std::size_t o) const {
        return values.data.data() + (i * outputs() + o) * cols();
    }
};

// Reusable workspace for repeated vjp/jvp calls against one model. Buffers
// persist across calls; every call re-runs its own forward pass.
class AdWorkspace {
public:
    AdWorkspace(const ModelSpec& spec, const ParamVector& params);
    ~AdWorkspace();
    AdWorkspace(AdWorkspace&&) noexcept;
    AdWorkspace& operator=(AdWorkspace&&) noexcept;

    // grad has length P and is zeroed inside.
    void vjp(const double* x, const double* cotangent, double* grad);
    // out has length O.
    void jvp(const double* x, const double* tangent, double* out);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// u^T J(x): gradient of <u, f(x)> with respect to all P parameters.
// One reverse-mode pass over a fresh forward trace.
std::vector<double> vjp(const ModelSpec& spec, const ParamVector& params, const Tensor& x,
                        const std::vector<double>& cotangent);

// J(x) v via forward-mode dual numbers, one pass.
std::vector<double> jvp(const ModelSpec& spec, const ParamVector& params, const Tensor& x,
                        const std::vector<double>& tangent);

// Baseline: B*O independent vjp calls with basis cotangents, each running
// its own forward pass. Deliberately unshared.
Jacobian jacobian_naive(const ModelSpec& spec, const ParamVector& params, const Tensor& x_batch,
                        const LayerMask& mask);

// One shared forward trace per sample; all O cotangent rows pulled back
// together. Bit-identical values to jacobian_naive, different cost only.
Jacobian jacobian_batched(const ModelSpec& spec, const ParamVector& params, const Tensor& x_batch,
                          const LayerMask& mask);

// Buffer-reusing variants: `out` is reallocated only when its shape does not
// already match, so repeated calls (timing loops, tile sweeps) measure the
// algorithm rather than the allocator.
void jacobian_naive_into(const ModelSpec& spec, const ParamVector& params, const Tensor& x_batch,
                         const LayerMask& mask, Jacobian& out);
void jacobian_batched_into(const ModelSpec& spec, const ParamVector& params, const Tensor& x_batch,
                           const LayerMask& mask, Jacobian& out);

// Central differences (f(t+h e_p) - f(t-h e_p)) / 2h, the verification
// oracle. Always full-mask.
Jacobian finite_difference_jacobian(const ModelSpec& spec, const ParamVector& params,
                                    const Tensor& x_batch, double h = 1e-5);

}  // namespace entk
