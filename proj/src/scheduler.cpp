#include "entk/scheduler.hpp"

#include <chrono>
#include <condition_variable>
#include <deque>
#include <exception>
#include <mutex>
#include <thread>

#include "entk/alloc_stats.hpp"

namespace entk {

std::vector<TileJob> make_tile_jobs(const TilePlan& plan, const std::vector<std::size_t>& tile_ids,
                                    KernelKind kind, std::uint32_t output_count,
                                    Algorithm algorithm, const LayerMask& mask) {
    const std::uint64_t ok = kind == KernelKind::FullNtk ? output_count : 1;
    std::vector<TileJob> jobs;
    jobs.reserve(tile_ids.size());
    for (std::size_t id : tile_ids) {
        const auto rect = plan.tile_rect(id);
        TileJob job;
        job.tile_id = id;
        job.row_sample_begin = rect.r0 / ok;
        job.row_sample_end = (rect.r1 + ok - 1) / ok;
        job.col_sample_begin = rect.c0 / ok;
        job.col_sample_end = (rect.c1 + ok - 1) / ok;
        job.algorithm = algorithm;
        job.mask = mask;
        job.diagonal = plan.symmetric && plan.is_diagonal(id);
        jobs.push_back(std::move(job));
    }
    return jobs;
}

namespace {

struct CommitQueue {
    std::mutex mu;
    std::condition_variable cv;
    std::deque<std::pair<std::size_t, Tensor>> ready;  // (job index, values)
    std::size_t workers_active = 0;
    std::exception_ptr failure;
};

}  // namespace

RunReport run_tiles(KernelStore& store, const std::vector<TileJob>& jobs,
                    const TileComputeFn& compute, const TileEstimateFn& estimate,
                    const RunOptions& options) {
    if (options.workers < 1) throw Error(ErrorKind::Usage, "worker count must be >= 1");
    RunReport report;
    report.per_worker_tiles.assign(options.workers, 0);

    if (options.budget_bytes > 0 && estimate) {
        const std::size_t per_worker = options.budget_bytes / options.workers;
        for (const auto& job : jobs) {
            const std::size_t need = estimate(job);
            if (need > options.budget_bytes) {
                throw Error(ErrorKind::Budget,
                            "tile " + std::to_string(job.tile_id) + " needs " +
                                std::to_string(need) + " bytes, over the total budget even with "
                                "one worker; use a smaller chunk");
            }
            if (need > per_worker) {
                throw Error(ErrorKind::Budget,
                            "tile " + std::to_string(job.tile_id) + " needs " +
                                std::to_string(need) + " bytes > budget/workers (" +
                                std::to_string(per_worker) + "); reduce workers or chunk");
            }
        }
    }

    const std::size_t quota =
        options.max_tiles > 0 ? std::min(options.max_tiles, jobs.size()) : jobs.size();
    const auto t_start = std::chrono::steady_clock::now();

    if (options.workers == 1) {
        // no concurrency: compute and commit inline
        for (std::size_t idx = 0; idx < quota; ++idx) {
            if (options.stop && options.stop->load()) break;
            alloc_stats::reset();
            Tensor values = compute(jobs[idx]);
            report.peak_intermediate_bytes =
                std::max(report.peak_intermediate_bytes, alloc_stats::peak_bytes());
            store.write_tile(jobs[idx].tile_id, values);
            ++report.tiles_computed;
            ++report.per_worker_tiles[0];
        }
        report.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        return report;
    }

    // Shared ascending queue of job indices; one committing writer (this
    // thread) persists results in completion order. Regions are disjoint, so
    // commit order does not affect the final bytes.
    std::atomic<std::size_t> next_job{0};
    std::vector<std::size_t> worker_peaks(options.workers, 0);
    CommitQueue queue;
    queue.workers_active = options.workers;

    std::vector<std::thread> pool;
    pool.reserve(options.workers);
    std::vector<std::size_t> per_worker(options.workers, 0);
    for (unsigned w = 0; w < options.workers; ++w) {
        pool.emplace_back([&, w] {
            alloc_stats::reset();
            try {
                while (true) {
                    if (options.stop && options.stop->load()) break;
                    const std::size_t idx = next_job.fetch_add(1);
                    if (idx >= quota) break;
                    Tensor values = compute(jobs[idx]);
                    ++per_worker[w];
                    {
                        std::lock_guard<std::mutex> lock(queue.mu);
                        queue.ready.emplace_back(idx, std::move(values));
                    }
                    queue.cv.notify_one();
                }
            } catch (...) {
                std::lock_guard<std::mutex> lock(queue.mu);
                if (!queue.failure) queue.failure = std::current_exception();
            }
            worker_peaks[w] = alloc_stats::peak_bytes();
            {
                std::lock_guard<std::mutex> lock(queue.mu);
                --queue.workers_active;
            }
            queue.cv.notify_one();
        });
    }

    std::size_t committed = 0;
    std::exception_ptr failure;
    while (true) {
        std::unique_lock<std::mutex> lock(queue.mu);
        queue.cv.wait(lock, [&] {
            return !queue.ready.empty() || queue.workers_active == 0 || queue.failure;
        });
        if (queue.failure && !failure) failure = queue.failure;
        while (!queue.ready.empty()) {
            auto [idx, values] = std::move(queue.ready.front());
            queue.ready.pop_front();
            lock.unlock();
            store.write_tile(jobs[idx].tile_id, values);  // completed tiles stay durable
            ++committed;
            lock.lock();
        }
        if (queue.workers_active == 0 && queue.ready.empty()) break;
    }
    for (auto& t : pool) t.join();
    if (!failure) {
        // a worker may fail while the committer is writing unlocked; re-check
        // once every thread has finished
        std::lock_guard<std::mutex> lock(queue.mu);
        failure = queue.failure;
    }

    report.tiles_computed = committed;
    report.per_worker_tiles = per_worker;
    for (std::size_t p : worker_peaks) {
        report.peak_intermediate_bytes = std::max(report.peak_intermediate_bytes, p);
    }
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    if (failure) std::rethrow_exception(failure);  // run aborts; durable tiles remain
    return report;
}

}  // namespace entk
