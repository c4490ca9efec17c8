#include "entk/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <map>
#include <sstream>
#include <thread>
#include <tuple>

#include "entk/alloc_stats.hpp"
#include "entk/dataset.hpp"

namespace entk {

ModelSpec make_bench_arch(const std::string& id, std::size_t output_count) {
    const auto colon = id.find(':');
    const std::string kind = id.substr(0, colon);
    std::vector<std::size_t> args;
    if (colon != std::string::npos) {
        std::istringstream ss(id.substr(colon + 1));
        std::string tok;
        while (std::getline(ss, tok, ',')) args.push_back(std::stoull(tok));
    }
    ModelSpec spec;
    if (kind == "linear" && args.size() == 1) {
        spec.input_shape = {args[0]};
        spec.layers = {DenseLayer{args[0], output_count, false}};
    } else if (kind == "mlp" && args.size() == 2) {
        spec.input_shape = {args[0]};
        spec.layers = {DenseLayer{args[0], args[1], true}, ActivationLayer{ActivationFn::Tanh},
                       DenseLayer{args[1], output_count, true}};
    } else if (kind == "mlp3" && args.size() == 2) {
        spec.input_shape = {args[0]};
        spec.layers = {DenseLayer{args[0], args[1], true}, ActivationLayer{ActivationFn::Tanh},
                       DenseLayer{args[1], args[1], true}, ActivationLayer{ActivationFn::Tanh},
                       DenseLayer{args[1], output_count, true}};
    } else {
        throw Error(ErrorKind::Usage,
                    "unknown architecture id '" + id + "' (want linear:D, mlp:D,W or mlp3:D,W)");
    }
    spec.validate();
    return spec;
}

double time_function(const std::function<void()>& fn, std::size_t repeats, std::size_t warmup) {
    if (repeats == 0) throw Error(ErrorKind::Usage, "need at least one timing repeat");
    for (std::size_t i = 0; i < warmup; ++i) fn();
    std::vector<double> times;
    times.reserve(repeats);
    for (std::size_t i = 0; i < repeats; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    std::sort(times.begin(), times.end());
    const std::size_t mid = times.size() / 2;
    return times.size() % 2 ? times[mid] : 0.5 * (times[mid - 1] + times[mid]);
}

namespace {

// In-memory kernel computed as `workers` disjoint horizontal strips.
void compute_strips(const ModelSpec& spec, const ParamVector& params, const Tensor& x,
                    KernelKind kind, Algorithm alg, PntkMode mode, const LayerMask& mask,
                    unsigned workers, std::size_t budget, Tensor& out, std::size_t strip,
                    std::size_t& peak_bytes) {
    const std::size_t ok = kind == KernelKind::FullNtk ? spec.output_count : 1;
    const std::size_t n = x.shape[0] * ok;
    std::vector<std::pair<std::uint64_t, std::uint64_t>> ranges;
    for (std::size_t r = 0; r < n; r += strip) ranges.emplace_back(r, std::min(n, r + strip));
    std::vector<std::size_t> peaks(ranges.size(), 0);
    auto work = [&](std::size_t idx) {
        alloc_stats::reset();
        const auto [r0, r1] = ranges[idx];
        Tensor block = kernel_block(spec, params, x, x, kind, alg, mode, mask, r0, r1, 0, n,
                                    /*mirror_diagonal=*/false, budget);
        for (std::uint64_t r = r0; r < r1; ++r) {
            std::copy(block.row_ptr(r - r0), block.row_ptr(r - r0) + n, out.row_ptr(r));
        }
        peaks[idx] = alloc_stats::peak_bytes();
    };
    if (workers <= 1 || ranges.size() == 1) {
        for (std::size_t i = 0; i < ranges.size(); ++i) work(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                while (true) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= ranges.size()) break;
                    work(i);
                }
            });
        }
        for (auto& t : pool) t.join();
    }
    peak_bytes = *std::max_element(peaks.begin(), peaks.end());
}

std::string sanitize_csv_field(std::string s) {
    for (auto& c : s) {
        if (c == ',' || c == '\n' || c == '\r') c = ';';
    }
    return s;
}

}  // namespace

std::vector<BenchRecord> sweep(const BenchGrid& grid, std::size_t repeats, unsigned workers,
                               std::uint64_t seed) {
    if (grid.architectures.empty() || grid.batch_sizes.empty() || grid.output_counts.empty() ||
        grid.algorithms.empty()) {
        throw Error(ErrorKind::Usage, "bench grid has an empty axis");
    }
    std::vector<BenchRecord> records;
    for (const auto& arch : grid.architectures) {
        for (std::size_t b : grid.batch_sizes) {
            for (std::size_t o : grid.output_counts) {
                const ModelSpec spec = make_bench_arch(arch, o);
                const ParamVector params = init_params(spec, seed);
                const Dataset data = make_blobs(b, spec.input_shape[0], 3.0, seed ^ 0x9e37u);
                const LayerMask mask = full_mask(spec);
                const std::size_t ok = grid.kind == KernelKind::FullNtk ? o : 1;
                const std::size_t n = b * ok;
                const std::size_t strip =
                    workers > 1 ? std::max<std::size_t>(1, (n + workers - 1) / workers) : n;

                // correctness gate: every algorithm must agree before timing
                std::vector<Tensor> gate;
                bool gate_failed = false;
                std::string gate_error;
                for (Algorithm alg : grid.algorithms) {
                    try {
                        gate.push_back(kernel_block(spec, params, data.x, data.x, grid.kind, alg,
                                                    grid.mode, mask, 0, n, 0, n, false,
                                                    grid.budget_bytes));
                    } catch (const Error& e) {
                        gate_failed = true;
                        gate_error = e.what();
                        break;
                    }
                }
                if (!gate_failed) {
                    for (std::size_t i = 1; i < gate.size(); ++i) {
                        const double rel = rel_frobenius_diff(gate[0], gate[i]);
                        if (rel > 1e-9) {
                            throw Error(ErrorKind::Numerical,
                                        "bench correctness gate failed at " + arch + " B=" +
                                            std::to_string(b) + " O=" + std::to_string(o) + ": " +
                                            algorithm_name(grid.algorithms[0]) + " vs " +
                                            algorithm_name(grid.algorithms[i]) + " differ by " +
                                            std::to_string(rel));
                        }
                    }
                }
                gate.clear();

                for (Algorithm alg : grid.algorithms) {
                    BenchRecord rec;
                    rec.arch = sanitize_csv_field(arch);
                    rec.batch = b;
                    rec.outputs = o;
                    rec.params = params.param_count();
                    rec.chunk = strip;
                    rec.algorithm = algorithm_name(alg);
                    rec.workers = workers;
                    rec.repeats = repeats;
                    if (gate_failed) {
                        rec.error = sanitize_csv_field(gate_error);
                        records.push_back(std::move(rec));
                        continue;
                    }
                    try {
                        Tensor out = Tensor::zeros({n, n});
                        std::size_t peak = 0;
                        rec.wall_seconds_median = time_function(
                            [&] {
                                compute_strips(spec, params, data.x, grid.kind, alg, grid.mode,
                                               mask, workers, grid.budget_bytes, out, strip, peak);
                            },
                            repeats, 1);
                        rec.peak_intermediate_bytes = peak;
                    } catch (const Error& e) {
                        rec.error = sanitize_csv_field(e.what());
                    }
                    records.push_back(std::move(rec));
                }
            }
        }
    }
    return records;
}

std::string records_to_csv(const std::vector<BenchRecord>& records) {
    std::ostringstream os;
    os << "arch,B,O,P,chunk,algorithm,workers,repeats,wall_seconds_median,peak_intermediate_bytes,"
          "error\n";
    char buf[64];
    for (const auto& r : records) {
        std::snprintf(buf, sizeof(buf), "%.17g", r.wall_seconds_median);
        os << sanitize_csv_field(r.arch) << "," << r.batch << "," << r.outputs << "," << r.params
           << "," << r.chunk << "," << r.algorithm << "," << r.workers << "," << r.repeats << ","
           << buf << "," << r.peak_intermediate_bytes << "," << sanitize_csv_field(r.error) << "\n";
    }
    return os.str();
}

std::vector<BenchRecord> records_from_csv(const std::string& csv) {
    std::istringstream in(csv);
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorKind::Io, "empty bench CSV");
    std::vector<BenchRecord> records;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::istringstream ls(line);
        std::string tok;
        while (std::getline(ls, tok, ',')) f.push_back(tok);
        while (f.size() < 11) f.emplace_back();
        BenchRecord r;
        r.arch = f[0];
        r.batch = std::stoull(f[1]);
        r.outputs = std::stoull(f[2]);
        r.params = std::stoull(f[3]);
        r.chunk = std::stoull(f[4]);
        r.algorithm = f[5];
        r.workers = static_cast<unsigned>(std::stoul(f[6]));
        r.repeats = std::stoull(f[7]);
        r.wall_seconds_median = std::stod(f[8]);
        r.peak_intermediate_bytes = std::stoull(f[9]);
        r.error = f[10];
        records.push_back(std::move(r));
    }
    return records;
}

Recommendation recommend(const std::vector<BenchRecord>& records) {
    if (records.empty()) throw Error(ErrorKind::Usage, "recommend needs at least one record");
    // argmin per (arch, B, O)
    std::map<std::tuple<std::string, std::size_t, std::size_t>, const BenchRecord*> best;
    for (const auto& r : records) {
        if (!r.error.empty()) continue;
        const auto key = std::make_tuple(r.arch, r.batch, r.outputs);
        auto it = best.find(key);
        if (it == best.end() || r.wall_seconds_median < it->second->wall_seconds_median) {
            best[key] = &r;
        }
    }
    if (best.empty()) throw Error(ErrorKind::Usage, "recommend: all records carry errors");

    Recommendation rec;
    for (const auto& [key, r] : best) {
        rec.winners.push_back({r->arch, r->batch, r->outputs, r->params, r->algorithm,
                               r->wall_seconds_median});
    }
    // flips along ascending O for fixed (arch, B)
    std::map<std::pair<std::string, std::size_t>, std::vector<const BenchRecord*>> by_arch_b;
    for (const auto& [key, r] : best) by_arch_b[{std::get<0>(key), std::get<1>(key)}].push_back(r);
    for (auto& [key, v] : by_arch_b) {
        std::sort(v.begin(), v.end(),
                  [](const BenchRecord* a, const BenchRecord* b) { return a->outputs < b->outputs; });
        for (std::size_t i = 1; i < v.size(); ++i) {
            if (v[i]->algorithm != v[i - 1]->algorithm) {
                rec.flip_boundaries.push_back(key.first + " B=" + std::to_string(key.second) +
                                              ": winner flips from " + v[i - 1]->algorithm + " to " +
                                              v[i]->algorithm + " at O=" +
                                              std::to_string(v[i]->outputs));
            }
        }
    }
    // flips along ascending B for fixed (arch, O)
    std::map<std::pair<std::string, std::size_t>, std::vector<const BenchRecord*>> by_arch_o;
    for (const auto& [key, r] : best) by_arch_o[{std::get<0>(key), std::get<2>(key)}].push_back(r);
    for (auto& [key, v] : by_arch_o) {
        std::sort(v.begin(), v.end(),
                  [](const BenchRecord* a, const BenchRecord* b) { return a->batch < b->batch; });
        for (std::size_t i = 1; i < v.size(); ++i) {
            if (v[i]->algorithm != v[i - 1]->algorithm) {
                rec.flip_boundaries.push_back(key.first + " O=" + std::to_string(key.second) +
                                              ": winner flips from " + v[i - 1]->algorithm + " to " +
                                              v[i]->algorithm + " at B=" +
                                              std::to_string(v[i]->batch));
            }
        }
    }
    return rec;
}

std::string Recommendation::to_text() const {
    std::ostringstream os;
    os << "arch            B       O       P       fastest      wall_s\n";
    char buf[160];
    for (const auto& w : winners) {
        std::snprintf(buf, sizeof(buf), "%-15s %-7zu %-7zu %-7zu %-12s %.6f\n", w.arch.c_str(),
                      w.batch, w.outputs, w.params, w.algorithm.c_str(), w.wall_seconds);
        os << buf;
    }
    if (flip_boundaries.empty()) {
        os << "no winner flips across the sweep\n";
    } else {
        for (const auto& b : flip_boundaries) os << b << "\n";
    }
    return os.str();
}

}  // namespace entk
