// entk: compute, resume, append, inspect and regress against empirical NTK
// and pNTK kernel files, plus the benchmarking and verification harnesses.

#include <atomic>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "entk/bench.hpp"
#include "entk/dataset.hpp"
#include "entk/kernel_store.hpp"
#include "entk/model.hpp"
#include "entk/ntk.hpp"
#include "entk/regression.hpp"
#include "entk/scheduler.hpp"
#include "entk/verify.hpp"

namespace {

using namespace entk;

std::atomic<bool> g_stop{false};

void handle_signal(int) { g_stop.store(true); }

int exit_code_for(const Error& e) {
    switch (e.kind()) {
        case ErrorKind::Refused: return 2;
        case ErrorKind::Integrity: return 3;
        case ErrorKind::Budget: return 4;
        case ErrorKind::Numerical: return 5;
        default: return 1;
    }
}

struct CommonOptions {
    std::string out;
    std::string model_path;
    std::string params_path;
    std::string data;
    std::string data2;
    std::uint64_t seed = 42;
    std::string kind = "pntk";
    std::string algorithm = "contraction";
    std::string pntk_mode = "sum";
    std::string layers = "all";
    std::string dtype = "f64";
    std::size_t batch_size = 0;
    std::size_t chunk = 0;
    unsigned workers = 0;
    std::size_t budget_bytes = 0;
    std::size_t max_tiles = 0;
    bool overwrite = false;
};

void add_model_options(CLI::App* cmd, CommonOptions& opt) {
    cmd->add_option("--model", opt.model_path, "model spec file (one layer per line)")->required();
    cmd->add_option("--params", opt.params_path, "raw little-endian f64 parameter file");
    cmd->add_option("--seed", opt.seed, "parameter init seed (ignored with --params)");
    cmd->add_option("--data", opt.data, "dataset: blobs:N,D,SEP[,SEED] | csv:PATH | PATH")
        ->required();
}

void add_kernel_options(CLI::App* cmd, CommonOptions& opt) {
    cmd->add_option("--layers", opt.layers, "comma list of parameterized-layer indices, or 'all'");
    cmd->add_option("--batch-size", opt.batch_size, "samples per tile row-chunk");
    cmd->add_option("--chunk", opt.chunk, "kernel-row tile edge (overrides --batch-size)");
    cmd->add_option("--workers", opt.workers, "worker threads (default: ENTK_WORKERS or 1)");
    cmd->add_option("--budget-bytes", opt.budget_bytes, "memory budget for intermediates (0 = off)");
    cmd->add_option("--max-tiles", opt.max_tiles, "stop after committing N tiles (0 = all)");
}

void add_compute_options(CLI::App* cmd, CommonOptions& opt) {
    cmd->add_option("--out", opt.out, "output kernel file")->required();
    add_model_options(cmd, opt);
    cmd->add_option("--data2", opt.data2,
                    "columns-side dataset for a rectangular cross kernel (default: --data)");
    cmd->add_option("--algorithm", opt.algorithm, "naive | contraction | nvp")
        ->check(CLI::IsMember({"naive", "contraction", "nvp"}));
    cmd->add_option("--kind", opt.kind, "ntk | pntk")->check(CLI::IsMember({"ntk", "pntk"}));
    cmd->add_option("--pntk-mode", opt.pntk_mode, "sum | first")
        ->check(CLI::IsMember({"sum", "first"}));
    cmd->add_option("--dtype", opt.dtype, "on-disk precision: f32 | f64")
        ->check(CLI::IsMember({"f32", "f64"}));
    cmd->add_flag("--overwrite", opt.overwrite, "replace an existing output file");
    add_kernel_options(cmd, opt);
}

unsigned resolve_workers(unsigned flag_value) {
    if (flag_value > 0) return flag_value;
    if (const char* env = std::getenv("ENTK_WORKERS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<unsigned>(v);
    }
    return 1;
}

ParamVector load_params_file(const ModelSpec& spec, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open params file: " + path);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), {});
    ParamVector pv = make_param_layout(spec);
    if (bytes.size() != pv.data.size() * sizeof(double)) {
        throw Error(ErrorKind::Dimension,
                    "params file holds " + std::to_string(bytes.size() / sizeof(double)) +
                        " doubles, model needs " + std::to_string(pv.data.size()));
    }
    std::memcpy(pv.data.data(), bytes.data(), bytes.size());
    return pv;
}

Dataset resolve_data(const std::string& arg) {
    if (arg.rfind("blobs:", 0) == 0) {
        std::istringstream ss(arg.substr(6));
        std::string tok;
        std::vector<std::string> parts;
        while (std::getline(ss, tok, ',')) parts.push_back(tok);
        if (parts.size() != 3 && parts.size() != 4) {
            throw Error(ErrorKind::Usage, "--data blobs wants blobs:N,D,SEP[,SEED]");
        }
        const std::uint64_t seed = parts.size() == 4 ? std::stoull(parts[3]) : 9001;
        return make_blobs(std::stoull(parts[0]), std::stoull(parts[1]), std::stod(parts[2]), seed);
    }
    const std::string path = arg.rfind("csv:", 0) == 0 ? arg.substr(4) : arg;
    return load_csv(path);
}

LayerMask resolve_layers(const ModelSpec& spec, const std::string& arg) {
    if (arg == "all") return full_mask(spec);
    LayerMask mask;
    std::istringstream ss(arg);
    std::string tok;
    while (std::getline(ss, tok, ',')) mask.push_back(static_cast<std::uint32_t>(std::stoul(tok)));
    validate_mask(spec, mask);
    return mask;
}

struct ResolvedRun {
    ModelSpec spec;
    ParamVector params;
    Tensor x;
    Tensor x2;
    bool symmetric = true;
    KernelKind kind = KernelKind::Pntk;
    Algorithm algorithm = Algorithm::JacobianContraction;
    PntkMode mode = PntkMode::SumLogits;
    LayerMask mask;
    StoreDtype dtype = StoreDtype::F64;
    std::uint32_t chunk = 0;
    unsigned workers = 1;
    std::size_t budget_bytes = 0;
    std::size_t max_tiles = 0;
    Digest model_fp{};
    Digest data_fp{};
    Digest data2_fp{};
};

ResolvedRun resolve_run(const CommonOptions& opt) {
    ResolvedRun run;
    run.spec = ModelSpec::load(opt.model_path);
    run.params = opt.params_path.empty() ? init_params(run.spec, opt.seed)
                                         : load_params_file(run.spec, opt.params_path);
    const Dataset ds = resolve_data(opt.data);
    run.x = reshape_samples(ds.x, run.spec.input_shape);
    run.symmetric = opt.data2.empty() || opt.data2 == opt.data;
    run.x2 = run.symmetric ? run.x : reshape_samples(resolve_data(opt.data2).x, run.spec.input_shape);
    run.kind = opt.kind == "ntk" ? KernelKind::FullNtk : KernelKind::Pntk;
    run.algorithm = algorithm_from_name(opt.algorithm);
    run.mode = opt.pntk_mode == "first" ? PntkMode::FirstLogit : PntkMode::SumLogits;
    run.mask = resolve_layers(run.spec, opt.layers);
    run.dtype = opt.dtype == "f32" ? StoreDtype::F32 : StoreDtype::F64;
    run.workers = resolve_workers(opt.workers);
    run.budget_bytes = opt.budget_bytes;
    run.max_tiles = opt.max_tiles;
    const std::size_t ok = run.kind == KernelKind::FullNtk ? run.spec.output_count : 1;
    if (opt.chunk > 0) {
        run.chunk = static_cast<std::uint32_t>(opt.chunk);
    } else if (opt.batch_size > 0) {
        run.chunk = static_cast<std::uint32_t>(opt.batch_size * ok);
    } else {
        run.chunk = 256;
    }
    run.model_fp = model_fingerprint(run.spec, run.params);
    run.data_fp = data_fingerprint(run.x);
    run.data2_fp = run.symmetric ? run.data_fp : data_fingerprint(run.x2);
    return run;
}

void print_config(const ResolvedRun& run, const CommonOptions& opt, const std::string& subcommand) {
    std::cout << "subcommand: " << subcommand << "\n"
              << "model: " << opt.model_path << "\n"
              << "params: "
              << (opt.params_path.empty() ? "seed:" + std::to_string(opt.seed) : opt.params_path)
              << "\n"
              << "data: " << opt.data << "\n"
              << "samples: " << run.x.shape[0] << "\n"
              << "P: " << run.params.param_count() << "\n"
              << "O: " << run.spec.output_count << "\n"
              << "kind: " << kernel_kind_name(run.kind) << "\n"
              << "algorithm: " << algorithm_name(run.algorithm) << "\n"
              << "pntk_mode: " << pntk_mode_name(run.mode) << "\n"
              << "layers: " << opt.layers << "\n"
              << "chunk: " << run.chunk << "\n"
              << "workers: " << run.workers << "\n"
              << "budget_bytes: " << run.budget_bytes << "\n"
              << "dtype: " << (run.dtype == StoreDtype::F32 ? "f32" : "f64") << "\n";
}

KernelFileHeader make_header(const ResolvedRun& run) {
    KernelFileHeader h;
    h.dtype = run.dtype;
    h.kind = run.kind;
    h.algorithm = run.algorithm;
    h.pntk_mode = run.mode;
    h.output_count = static_cast<std::uint32_t>(run.spec.output_count);
    const std::size_t ok = run.kind == KernelKind::FullNtk ? run.spec.output_count : 1;
    h.rows = run.x.shape[0] * ok;
    h.cols = run.x2.shape[0] * ok;
    h.chunk = run.chunk;
    h.symmetric = run.symmetric;
    h.layer_mask = run.mask;
    h.model_fingerprint = run.model_fp;
    h.data_fingerprint_rows = run.data_fp;
    h.data_fingerprint_cols = run.data2_fp;
    return h;
}

// resume/append must recompute exactly what the file describes: kernel kind,
// algorithm, scalarization and layer mask all come from the header.
void apply_header(ResolvedRun& run, const KernelFileHeader& h) {
    run.kind = h.kind;
    run.algorithm = h.algorithm;
    run.mode = h.pntk_mode;
    run.mask = h.layer_mask;
    validate_mask(run.spec, run.mask);
    run.dtype = h.dtype;
    run.chunk = h.chunk;
}

// Canonical (computable) ids covering the given missing tiles.
std::vector<std::size_t> canonical_ids(const TilePlan& plan, const std::vector<std::size_t>& ids) {
    std::set<std::size_t> canon;
    for (std::size_t t : ids) canon.insert(plan.is_computable(t) ? t : plan.mirror_id(t));
    return {canon.begin(), canon.end()};
}

RunReport run_pending_tiles(KernelStore& store, const ResolvedRun& run,
                            const std::vector<std::size_t>& pending) {
    const TilePlan plan = store.plan();
    const auto jobs = make_tile_jobs(plan, canonical_ids(plan, pending), run.kind,
                                     static_cast<std::uint32_t>(run.spec.output_count),
                                     run.algorithm, run.mask);
    const std::size_t tile_budget = run.budget_bytes > 0 ? run.budget_bytes / run.workers : 0;
    TileComputeFn compute = [&, tile_budget](const TileJob& job) {
        const auto rect = plan.tile_rect(job.tile_id);
        return kernel_block(run.spec, run.params, run.x, run.x2, run.kind, job.algorithm, run.mode,
                            job.mask, rect.r0, rect.r1, rect.c0, rect.c1, job.diagonal, tile_budget);
    };
    TileEstimateFn estimate = [&](const TileJob& job) {
        const bool same = run.symmetric && job.row_sample_begin == job.col_sample_begin &&
                          job.row_sample_end == job.col_sample_end;
        return estimate_block_bytes(run.spec, run.params, run.kind, job.algorithm, job.mask,
                                    job.row_sample_end - job.row_sample_begin,
                                    job.col_sample_end - job.col_sample_begin, same);
    };
    RunOptions options;
    options.workers = run.workers;
    options.budget_bytes = run.budget_bytes;
    options.max_tiles = run.max_tiles;
    options.stop = &g_stop;
    return run_tiles(store, jobs, compute, estimate, options);
}

void print_report(const RunReport& report, const KernelStore& store) {
    std::cout << "tiles_computed: " << report.tiles_computed << "\n";
    std::cout << "wall_seconds: " << report.wall_seconds << "\n";
    std::cout << "peak_intermediate_bytes: " << report.peak_intermediate_bytes << "\n";
    for (std::size_t w = 0; w < report.per_worker_tiles.size(); ++w) {
        std::cout << "worker_" << w << "_tiles: " << report.per_worker_tiles[w] << "\n";
    }
    std::cout << "complete: " << (store.complete() ? "yes" : "no") << "\n";
    if (g_stop.load()) std::cout << "interrupted: resume with `entk resume`\n";
}

int cmd_compute(const CommonOptions& opt) {
    const ResolvedRun run = resolve_run(opt);
    print_config(run, opt, "compute");
    KernelStore store = KernelStore::create(opt.out, make_header(run), opt.overwrite);
    const RunReport report = run_pending_tiles(store, run, store.missing_tiles());
    print_report(report, store);
    return 0;
}

int cmd_resume(const CommonOptions& opt) {
    ResolvedRun run = resolve_run(opt);
    KernelStore store = KernelStore::open(opt.out);
    apply_header(run, store.header());
    print_config(run, opt, "resume");
    const auto pending = store.resume_plan(run.model_fp, run.data_fp, run.data2_fp);
    if (pending.empty()) {
        std::cout << "0 tiles computed (file already complete)\n";
        return 0;
    }
    const RunReport report = run_pending_tiles(store, run, pending);
    print_report(report, store);
    return 0;
}

int cmd_append(const CommonOptions& opt, const std::string& new_out) {
    ResolvedRun run = resolve_run(opt);
    KernelStore old_store = KernelStore::open(opt.out, /*writable=*/false);
    const KernelFileHeader& oh = old_store.header();
    apply_header(run, oh);
    print_config(run, opt, "append");
    if (oh.model_fingerprint != run.model_fp) {
        throw Error(ErrorKind::Integrity, "model fingerprint does not match " + opt.out);
    }
    const std::size_t ok = oh.kind == KernelKind::FullNtk ? oh.output_count : 1;
    const std::size_t old_samples = oh.rows / ok;
    if (run.x.shape[0] < old_samples) {
        throw Error(ErrorKind::Refused,
                    "append refuses to shrink: dataset has fewer samples than " + opt.out);
    }
    // the old dataset must be a prefix of the new one
    std::vector<std::size_t> head_shape = run.x.shape;
    head_shape[0] = old_samples;
    Tensor head(head_shape,
                std::vector<double>(run.x.data.begin(),
                                    run.x.data.begin() + old_samples * run.x.row_stride()));
    if (data_fingerprint(head) != oh.data_fingerprint_rows) {
        throw Error(ErrorKind::Integrity,
                    "existing kernel rows are not a prefix of the supplied dataset");
    }
    if (!run.symmetric && run.data2_fp != oh.data_fingerprint_cols) {
        throw Error(ErrorKind::Integrity, "columns-side data does not match " + opt.out);
    }
    const std::uint64_t added = (run.x.shape[0] - old_samples) * ok;
    KernelStore store = old_store.append_rows(new_out, added, run.data_fp,
                                              run.symmetric ? run.data_fp : run.data2_fp,
                                              opt.overwrite);
    std::cout << "appended_rows: " << added << "\n";
    const RunReport report = run_pending_tiles(store, run, store.missing_tiles());
    print_report(report, store);
    return 0;
}

int cmd_layerwise(const CommonOptions& opt) {
    const ResolvedRun run = resolve_run(opt);
    print_config(run, opt, "layerwise");
    for (std::uint32_t ordinal : run.mask) {
        ResolvedRun layer_run = run;
        layer_run.mask = LayerMask{ordinal};
        const std::string path = opt.out + ".layer" + std::to_string(ordinal) + ".entk";
        KernelStore store = KernelStore::create(path, make_header(layer_run), opt.overwrite);
        run_pending_tiles(store, layer_run, store.missing_tiles());
        Tensor values = store.read_full();
        std::cout << "layer " << ordinal << ": " << path
                  << " frobenius=" << frobenius_norm(values) << "\n";
    }
    return 0;
}

int cmd_inspect(const std::string& path) {
    KernelStore store = KernelStore::open(path, /*writable=*/false);
    const KernelFileHeader& h = store.header();
    std::cout << "path: " << path << "\n"
              << "magic: ENTK\n"
              << "version: " << KernelFileHeader::kVersion << "\n"
              << "dtype: " << (h.dtype == StoreDtype::F32 ? "f32" : "f64") << "\n"
              << "kind: " << kernel_kind_name(h.kind) << "\n"
              << "algorithm: " << algorithm_name(h.algorithm) << "\n"
              << "pntk_mode: " << pntk_mode_name(h.pntk_mode) << "\n"
              << "O: " << h.output_count << "\n"
              << "rows: " << h.rows << "\n"
              << "cols: " << h.cols << "\n"
              << "chunk: " << h.chunk << "\n"
              << "symmetric: " << (h.symmetric ? "yes" : "no") << "\n";
    std::cout << "layer_mask:";
    for (auto m : h.layer_mask) std::cout << " " << m;
    std::cout << "\n"
              << "model_fingerprint: " << digest_hex(h.model_fingerprint) << "\n"
              << "data_fingerprint_rows: " << digest_hex(h.data_fingerprint_rows) << "\n"
              << "data_fingerprint_cols: " << digest_hex(h.data_fingerprint_cols) << "\n"
              << "tiles: " << store.plan().tile_count() << "\n"
              << "tiles_complete: " << store.plan().tile_count() - store.missing_tiles().size()
              << "\n"
              << "computable_tiles: " << store.plan().computable_tiles().size() << "\n";
    return 0;
}

int cmd_eigencheck(const std::string& path, std::size_t topk, double tol) {
    KernelStore store = KernelStore::open(path, /*writable=*/false);
    KernelMatrix k = kernel_from_store(store);
    std::cout << "path: " << path << "\nrows: " << k.rows() << "\n";
    const auto eig = sym_eig_topk(k.values, std::min(topk, k.rows()), tol);
    for (std::size_t i = 0; i < eig.values.size(); ++i) {
        std::cout << "lambda_" << i << ": " << eig.values[i] << "\n";
    }
    if (k.symmetric) {
        const auto wf = check_kernel_wellformed(k);
        std::cout << "symmetry_rel: " << wf.symmetry_rel << "\n"
                  << "lambda_min: " << wf.lambda_min << "\n"
                  << "psd: " << (wf.psd_ok ? "PASS" : "FAIL") << "\n";
        if (!wf.ok()) {
            throw Error(ErrorKind::Numerical, "kernel failed symmetry/PSD checks");
        }
    }
    return 0;
}

int cmd_regress(const std::string& train_path, const std::string& cross_path,
                const std::string& labels_path, const std::string& test_labels_path,
                double lambda) {
    KernelStore train_store = KernelStore::open(train_path, /*writable=*/false);
    KernelMatrix k_train = kernel_from_store(train_store);
    if (k_train.kind == KernelKind::FullNtk) {
        throw Error(ErrorKind::Usage,
                    "regress expects a pNTK training kernel (B x B with O coefficient columns)");
    }
    const auto labels = load_labels_csv(labels_path);
    if (labels.size() != k_train.rows()) {
        throw Error(ErrorKind::Dimension, "labels count does not match training kernel order");
    }
    int max_label = 0;
    for (int l : labels) max_label = std::max(max_label, l);
    const std::size_t n_classes = std::max<std::size_t>(2, std::size_t(max_label) + 1);
    const Tensor targets = targets_from_labels(labels, n_classes);
    const KrrModel model = krr_fit(k_train, targets, lambda);
    std::cout << "train_kernel: " << train_path << "\nlambda: " << lambda
              << "\nclasses: " << n_classes << "\n";

    KernelStore cross_store = KernelStore::open(cross_path, /*writable=*/false);
    KernelMatrix k_cross = kernel_from_store(cross_store);
    const Prediction pred = krr_predict(model, k_cross);
    if (!test_labels_path.empty()) {
        const auto truth = load_labels_csv(test_labels_path);
        std::cout << "test_accuracy: " << accuracy(pred.labels, truth) << "\n";
    } else {
        std::cout << "labels:";
        for (int l : pred.labels) std::cout << " " << l;
        std::cout << "\n";
    }
    return 0;
}

struct BenchOptions {
    std::vector<std::string> archs{"mlp:16,64"};
    std::vector<std::size_t> b_list{8, 16};
    std::vector<std::size_t> o_list{1, 4, 10};
    std::vector<std::string> algorithms{"naive", "contraction", "nvp"};
    std::string kind = "ntk";
    std::size_t repeats = 5;
    unsigned workers = 0;
    std::uint64_t seed = 42;
    std::string out;
};

int cmd_bench(const BenchOptions& opt) {
    BenchGrid grid;
    grid.architectures = opt.archs;
    grid.batch_sizes = opt.b_list;
    grid.output_counts = opt.o_list;
    for (const auto& a : opt.algorithms) grid.algorithms.push_back(algorithm_from_name(a));
    grid.kind = opt.kind == "ntk" ? KernelKind::FullNtk : KernelKind::Pntk;
    const unsigned workers = resolve_workers(opt.workers);
    std::cout << "subcommand: bench\nrepeats: " << opt.repeats << "\nworkers: " << workers << "\n";
    const auto records = sweep(grid, opt.repeats, workers, opt.seed);
    const std::string csv = records_to_csv(records);
    if (!opt.out.empty()) {
        std::ofstream f(opt.out);
        if (!f) throw Error(ErrorKind::Io, "cannot write " + opt.out);
        f << csv;
        std::cout << "csv: " << opt.out << "\n";
    } else {
        std::cout << csv;
    }
    std::cout << recommend(records).to_text();
    return 0;
}

struct VerifyOptions {
    bool skip_width_sweep = false;
    std::string file;
    std::string report_csv;
    std::vector<std::size_t> widths{16, 64, 256};
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
};

int cmd_verify(const VerifyOptions& opt) {
    std::vector<CheckResult> results;
    if (!opt.file.empty()) {
        results = run_file_checks(opt.file);
    } else {
        CheckSuiteConfig config;
        config.include_width_sweep = !opt.skip_width_sweep;
        config.sweep.widths = opt.widths;
        config.sweep.seeds = opt.seeds;
        bool sweep_done = false;
        if (!opt.report_csv.empty() && config.include_width_sweep) {
            const ConvergenceReport rep = width_sweep(config.sweep);
            std::ofstream f(opt.report_csv);
            if (!f) throw Error(ErrorKind::Io, "cannot write " + opt.report_csv);
            f << rep.to_csv();
            std::cout << rep.to_text();
            config.include_width_sweep = false;
            results.push_back(width_check_from_report(rep));
            sweep_done = true;
        }
        auto suite = run_check_suite(config);
        if (sweep_done) {
            suite.push_back(results.front());  // keep the sweep line last
            results = std::move(suite);
        } else {
            results = std::move(suite);
        }
    }
    bool all_pass = true;
    for (const auto& r : results) {
        std::cout << "CHECK " << r.name << " " << (r.pass ? "PASS" : "FAIL") << " " << r.detail
                  << "\n";
        all_pass = all_pass && r.pass;
    }
    if (!all_pass) throw Error(ErrorKind::Numerical, "verification checks failed");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    std::signal(SIGTERM, handle_signal);
    std::signal(SIGINT, handle_signal);

    CLI::App app{"empirical NTK / pNTK kernels: tiled computation, resumable kernel files, "
                 "ridge-regression surrogates and algorithm benchmarking"};
    app.require_subcommand(1);

    CommonOptions compute_opt, resume_opt, append_opt, layer_opt;
    std::string append_new_out;

    auto* compute = app.add_subcommand("compute", "compute a kernel into a new file");
    add_compute_options(compute, compute_opt);

    auto* resume = app.add_subcommand("resume", "compute the missing tiles of an existing file");
    resume->add_option("--out", resume_opt.out, "existing kernel file")->required();
    add_model_options(resume, resume_opt);
    add_kernel_options(resume, resume_opt);

    auto* append = app.add_subcommand("append", "extend a kernel with new datapoints");
    append->add_option("--out", append_opt.out, "existing kernel file")->required();
    append->add_option("--new-out", append_new_out, "enlarged kernel file to create")->required();
    append->add_flag("--overwrite", append_opt.overwrite, "replace an existing --new-out");
    add_model_options(append, append_opt);
    add_kernel_options(append, append_opt);

    auto* layerwise = app.add_subcommand("layerwise", "one kernel file per selected layer");
    add_compute_options(layerwise, layer_opt);

    std::string inspect_path;
    auto* inspect = app.add_subcommand("inspect", "print a kernel file header");
    inspect->add_option("--in", inspect_path, "kernel file")->required();

    std::string eig_path;
    std::size_t eig_topk = 5;
    double eig_tol = 1e-8;
    auto* eigencheck = app.add_subcommand("eigencheck", "top eigenvalues and PSD check");
    eigencheck->add_option("--in", eig_path, "kernel file")->required();
    eigencheck->add_option("--topk", eig_topk, "how many leading eigenvalues");
    eigencheck->add_option("--tol", eig_tol, "power-iteration residual tolerance");

    std::string rg_train, rg_cross, rg_labels, rg_test_labels;
    double rg_lambda = 1e-3;
    auto* regress = app.add_subcommand("regress", "kernel ridge regression surrogate");
    regress->add_option("--train", rg_train, "symmetric pNTK kernel file")->required();
    regress->add_option("--cross", rg_cross, "test x train kernel file")->required();
    regress->add_option("--labels", rg_labels, "training labels CSV")->required();
    regress->add_option("--test-labels", rg_test_labels, "test labels CSV (prints accuracy)");
    regress->add_option("--lambda", rg_lambda, "ridge strength");

    BenchOptions bench_opt;
    auto* bench = app.add_subcommand("bench", "algorithm comparison sweep");
    bench->add_option("--arch", bench_opt.archs, "architecture ids (linear:D mlp:D,W mlp3:D,W)");
    bench->add_option("--b-list", bench_opt.b_list, "batch sizes");
    bench->add_option("--o-list", bench_opt.o_list, "output class counts");
    bench->add_option("--algorithms", bench_opt.algorithms, "algorithms to compare");
    bench->add_option("--kind", bench_opt.kind, "ntk | pntk")->check(CLI::IsMember({"ntk", "pntk"}));
    bench->add_option("--repeats", bench_opt.repeats, "timing repeats (median)");
    bench->add_option("--workers", bench_opt.workers, "worker threads");
    bench->add_option("--seed", bench_opt.seed, "parameter/data seed");
    bench->add_option("--out", bench_opt.out, "CSV output path");

    VerifyOptions verify_opt;
    auto* verify = app.add_subcommand("verify", "run the numerical check suite");
    verify->add_flag("--skip-width-sweep", verify_opt.skip_width_sweep,
                     "skip the slow convergence sweep");
    verify->add_option("--file", verify_opt.file, "check a kernel file instead of the suite");
    verify->add_option("--report-csv", verify_opt.report_csv, "write the sweep CSV here");
    verify->add_option("--widths", verify_opt.widths, "sweep widths (ascending)");
    verify->add_option("--seeds", verify_opt.seeds, "sweep seeds");

    try {
        app.parse(argc, argv);
        if (*compute) return cmd_compute(compute_opt);
        if (*resume) return cmd_resume(resume_opt);
        if (*append) return cmd_append(append_opt, append_new_out);
        if (*layerwise) return cmd_layerwise(layer_opt);
        if (*inspect) return cmd_inspect(inspect_path);
        if (*eigencheck) return cmd_eigencheck(eig_path, eig_topk, eig_tol);
        if (*regress) return cmd_regress(rg_train, rg_cross, rg_labels, rg_test_labels, rg_lambda);
        if (*bench) return cmd_bench(bench_opt);
        if (*verify) return cmd_verify(verify_opt);
        return 1;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const Error& e) {
        std::cerr << "error kind=" << error_kind_name(e.kind()) << " message=" << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "error kind=unexpected message=" << e.what() << "\n";
        return 1;
    }
}
