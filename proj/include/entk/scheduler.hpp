#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <vector>

#include "entk/kernel_store.hpp"
#include "entk/ntk.hpp"

namespace entk {

// One tile of kernel work: the unit handed to a worker. Sample ranges are in
// dataset indices; the output region is the tile rectangle, so jobs within
// one run are pairwise disjoint.
struct TileJob {
    std::size_t tile_id = 0;
    std::uint64_t row_sample_begin = 0, row_sample_end = 0;
    std::uint64_t col_sample_begin = 0, col_sample_end = 0;
    Algorithm algorithm = Algorithm::JacobianContraction;
    LayerMask mask;
    bool diagonal = false;  // diagonal tile of a symmetric kernel
};

struct RunReport {
    std::size_t tiles_computed = 0;
    double wall_seconds = 0.0;
    std::vector<std::size_t> per_worker_tiles;
    std::size_t peak_intermediate_bytes = 0;
};

using TileComputeFn = std::function<Tensor(const TileJob&)>;
using TileEstimateFn = std::function<std::size_t(const TileJob&)>;

struct RunOptions {
    unsigned workers = 1;
    std::size_t budget_bytes = 0;       // 0 = unlimited
    std::size_t max_tiles = 0;          // 0 = all; otherwise stop after N commits
    const std::atomic<bool>* stop = nullptr;  // cooperative interruption
};

// Executes jobs over a worker pool and commits results through the single
// store writer. Output bytes are identical for any worker count: each tile
// is a pure function of its job and tiles land in disjoint regions.
RunReport run_tiles(KernelStore& store, const std::vector<TileJob>& jobs,
                    const TileComputeFn& compute, const TileEstimateFn& estimate,
                    const RunOptions& options);

// Jobs for the given tile ids (computable ids expected), ascending.
std::vector<TileJob> make_tile_jobs(const TilePlan& plan, const std::vector<std::size_t>& tile_ids,
                                    KernelKind kind, std::uint32_t output_count,
                                    Algorithm algorithm, const LayerMask& mask);

}  // namespace entk
