#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "entk/autodiff.hpp"
#include "entk/model.hpp"
#include "entk/tensor.hpp"

namespace entk {

enum class KernelKind : std::uint8_t { FullNtk = 0, Pntk = 1 };

enum class Algorithm : std::uint8_t {
    Naive = 0,               // per-logit gradients, forward pass per logit
    JacobianContraction = 1, // batched Jacobians, then J1 * J2^T
    NtkVectorProduct = 2,    // vjp column seeds pushed through jvp, no B*O*P array
};

enum class PntkMode : std::uint8_t {
    SumLogits = 0,  // g(x) = O^(-1/2) * sum_o f_o(x)
    FirstLogit = 1, // g(x) = f_0(x)
};

const char* algorithm_name(Algorithm a);
const char* kernel_kind_name(KernelKind k);
const char* pntk_mode_name(PntkMode m);
Algorithm algorithm_from_name(const std::string& name);

// A computed kernel plus the metadata that identifies what it is a kernel
// of. Full NTK rows/cols are sample-major, logit-minor: (i, o) -> i*O + o.
struct KernelMatrix {
    Tensor values;  // [R x C]
    KernelKind kind = KernelKind::Pntk;
    Algorithm algorithm = Algorithm::JacobianContraction;
    PntkMode pntk_mode = PntkMode::SumLogits;
    LayerMask layer_mask;
    Digest model_fingerprint{};
    Digest data_fingerprint_rows{};
    Digest data_fingerprint_cols{};
    bool symmetric = false;
    std::uint32_t output_count = 0;

    std::size_t rows() const { return values.shape[0]; }
    std::size_t cols() const { return values.shape[1]; }
};

// Full empirical NTK via batched Jacobians contracted as J1 * J2^T.
KernelMatrix ntk_jacobian_contraction(const ModelSpec& spec, const ParamVector& params,
                                      const Tensor& x1, const Tensor& x2, const LayerMask& mask,
                                      std::size_t budget_bytes = 0);

// Same values via per-logit naive Jacobians (the double-loop baseline).
KernelMatrix ntk_naive(const ModelSpec& spec, const ParamVector& params, const Tensor& x1,
                       const Tensor& x2, const LayerMask& mask, std::size_t budget_bytes = 0);

// Same values without ever materializing a B x O x P Jacobian: one vjp per
// kernel column seeds a jvp per row sample.
KernelMatrix ntk_vector_products(const ModelSpec& spec, const ParamVector& params, const Tensor& x1,
                                 const Tensor& x2, const LayerMask& mask,
                                 std::size_t budget_bytes = 0);

// B1 x B2 pseudo-NTK of the scalarized head g(x); one vjp per sample, then
// a Gram contraction.
KernelMatrix pntk(const ModelSpec& spec, const ParamVector& params, const Tensor& x1,
                  const Tensor& x2, PntkMode mode, const LayerMask& mask,
                  std::size_t budget_bytes = 0, Algorithm algorithm = Algorithm::JacobianContraction);

// Dispatch by kind + algorithm.
KernelMatrix compute_kernel(const ModelSpec& spec, const ParamVector& params, const Tensor& x1,
                            const Tensor& x2, KernelKind kind, Algorithm algorithm, PntkMode mode,
                            const LayerMask& mask, std::size_t budget_bytes = 0);

// One kernel per selected parameterized layer; they sum to the unmasked
// kernel because parameter blocks are disjoint.
std::vector<std::pair<std::uint32_t, KernelMatrix>> ntk_layerwise(
    const ModelSpec& spec, const ParamVector& params, const Tensor& x1, const Tensor& x2,
    KernelKind kind, PntkMode mode, const LayerMask& layers, Algorithm algorithm,
    std::size_t budget_bytes = 0);

// Rectangular window [r0,r1) x [c0,c1) of the kernel, in kernel-row indices.
// `mirror_diagonal` marks a diagonal tile of a symmetric kernel: entries
// below the global diagonal are mirrored from above instead of recomputed.
Tensor kernel_block(const ModelSpec& spec, const ParamVector& params, const Tensor& x_rows,
                    const Tensor& x_cols, KernelKind kind, Algorithm algorithm, PntkMode mode,
                    const LayerMask& mask, std::uint64_t r0, std::uint64_t r1, std::uint64_t c0,
                    std::uint64_t c1, bool mirror_diagonal, std::size_t budget_bytes = 0);

// Estimated intermediate bytes for one block, mirroring what the algorithms
// register with alloc_stats. Used for budget checks before any allocation.
std::size_t estimate_block_bytes(const ModelSpec& spec, const ParamVector& params, KernelKind kind,
                                 Algorithm algorithm, const LayerMask& mask, std::size_t n_row_samples,
                                 std::size_t n_col_samples, bool same_slice);

// (p kron I_O)[(i,o),(j,o')] = p[i,j] * delta(o,o'), the block comparison
// behind pNTK convergence checks.
Tensor kron_with_identity(const Tensor& p, std::size_t o_count);

// ||a - b||_F / ||a||_F (0 when both are zero).
double rel_frobenius_diff(const Tensor& a, const Tensor& b);

struct WellformedReport {
    bool symmetric_ok = false;
    bool psd_ok = false;
    double symmetry_rel = 0.0;
    double lambda_min = 0.0;
    double lambda_max = 0.0;
    bool ok() const { return symmetric_ok && psd_ok; }
};

// Symmetry within sym_tol relative Frobenius and lambda_min >= -psd_tol * lambda_max.
WellformedReport check_kernel_wellformed(const KernelMatrix& k, double sym_tol = 1e-10,
                                         double psd_tol = 1e-8);

// Smallest eigenvalue of a symmetric matrix via a spectral shift and two
// power iterations.
double sym_lambda_min(const Tensor& a, double tol = 1e-9);

}  // namespace entk
