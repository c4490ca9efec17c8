#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "entk/ntk.hpp"

namespace entk {

// Width-sweep measurement of how closely pTheta (x) I_O tracks the full
// kernel, per width and seed, with per-width medians.
struct ConvergenceReport {
    std::vector<std::size_t> widths;
    std::vector<std::vector<double>> rel_frobenius;   // [width][seed]
    std::vector<std::vector<double>> rel_lambda_max;  // [width][seed]
    std::vector<double> median_rel_frobenius;         // per width
    std::vector<double> median_rel_lambda_max;        // per width
    std::vector<std::uint64_t> seeds;
    bool pass = false;
    bool vacuous = false;  // single-width sweep: pass is trivially true

    std::string to_text() const;
    std::string to_csv() const;  // width,seed,rel_frobenius,rel_lambda_max
};

struct WidthSweepConfig {
    std::size_t input_dim = 8;
    std::vector<std::size_t> widths = {16, 64, 256};
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    std::size_t batch = 16;
    std::size_t output_count = 10;
    PntkMode mode = PntkMode::SumLogits;
    std::uint64_t data_seed = 1234;
    // "mlp" sweeps a two-layer tanh net over the widths; "linear" ignores the
    // width, where the block relation is exact at every point.
    std::string arch_template = "mlp";
};

// Two-layer tanh MLP of the given width per sweep point; full NTK and pNTK
// computed independently, then compared. PASS means both median error
// sequences strictly decrease across the widths.
ConvergenceReport width_sweep(const WidthSweepConfig& config);

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct CheckSuiteConfig {
    bool include_width_sweep = true;
    WidthSweepConfig sweep;
};

// The invariant suite behind `entk verify`: analytic linear-model kernels,
// finite-difference oracle, cross-algorithm agreement, layer additivity,
// symmetry/PSD, Kronecker ordering guard and (optionally) the width sweep.
std::vector<CheckResult> run_check_suite(const CheckSuiteConfig& config);

// The width-sweep check line for a report computed elsewhere.
CheckResult width_check_from_report(const ConvergenceReport& report);

// File-level checks: completeness, symmetry and PSD of a stored kernel.
std::vector<CheckResult> run_file_checks(const std::string& path);

}  // namespace entk
