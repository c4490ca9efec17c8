#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "entk/model.hpp"
#include "entk/ntk.hpp"

namespace entk {

// One timing measurement of one algorithm at one grid point.
struct BenchRecord {
    std::string arch;
    std::size_t batch = 0;
    std::size_t outputs = 0;
    std::size_t params = 0;
    std::size_t chunk = 0;
    std::string algorithm;
    unsigned workers = 1;
    std::size_t repeats = 0;
    double wall_seconds_median = 0.0;
    std::size_t peak_intermediate_bytes = 0;
    std::string error;

    bool operator==(const BenchRecord&) const = default;
};

struct BenchGrid {
    std::vector<std::string> architectures;  // "linear:D" | "mlp:D,W" | "mlp3:D,W"
    std::vector<std::size_t> batch_sizes;
    std::vector<std::size_t> output_counts;
    std::vector<Algorithm> algorithms;
    KernelKind kind = KernelKind::FullNtk;
    PntkMode mode = PntkMode::SumLogits;
    std::size_t budget_bytes = 0;
};

// Instantiates a benchmark architecture template for a given logit count.
ModelSpec make_bench_arch(const std::string& id, std::size_t output_count);

// Median wall seconds over `repeats` runs after `warmup` unmeasured runs.
double time_function(const std::function<void()>& fn, std::size_t repeats, std::size_t warmup = 1);

// Grid sweep in deterministic grid order. Before timing a point, all of its
// algorithms are checked for value agreement (1e-9 relative Frobenius); a
// mismatch aborts the sweep. Per-point failures (e.g. budget) land in the
// record's error column instead of stopping the run.
std::vector<BenchRecord> sweep(const BenchGrid& grid, std::size_t repeats, unsigned workers,
                               std::uint64_t seed);

std::string records_to_csv(const std::vector<BenchRecord>& records);
std::vector<BenchRecord> records_from_csv(const std::string& csv);

struct Recommendation {
    struct Winner {
        std::string arch;
        std::size_t batch, outputs, params;
        std::string algorithm;
        double wall_seconds;
    };
    std::vector<Winner> winners;              // argmin per grid point
    std::vector<std::string> flip_boundaries; // human-readable regime flips
    std::string to_text() const;
};

// Fastest algorithm per grid point plus the boundaries where the winner
// flips along the O and B axes.
Recommendation recommend(const std::vector<BenchRecord>& records);

}  // namespace entk
