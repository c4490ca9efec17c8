#include <doctest.h>

#include "entk/bench.hpp"

using namespace entk;

namespace {

BenchRecord make_record(const std::string& arch, std::size_t b, std::size_t o,
                        const std::string& algorithm, double wall) {
    BenchRecord r;
    r.arch = arch;
    r.batch = b;
    r.outputs = o;
    r.params = 1000;
    r.chunk = b;
    r.algorithm = algorithm;
    r.workers = 1;
    r.repeats = 5;
    r.wall_seconds_median = wall;
    r.peak_intermediate_bytes = 4096;
    return r;
}

}  // namespace

TEST_CASE("timing harness overhead stays under a millisecond") {
    const double t = time_function([] {}, 5, 1);
    CHECK(t < 1e-3);
    CHECK(t >= 0.0);
}

TEST_CASE("csv emit/parse round-trips records exactly") {
    std::vector<BenchRecord> records;
    records.push_back(make_record("mlp:16;64", 8, 1, "naive", 0.001234567890123));
    records.push_back(make_record("linear:4", 16, 10, "nvp", 3.25));
    records.back().error = "budget exceeded; use a smaller chunk";
    const auto parsed = records_from_csv(records_to_csv(records));
    CHECK(parsed == records);
}

TEST_CASE("recommend picks the single record's algorithm") {
    const auto rec = recommend({make_record("mlp:4;8", 8, 2, "contraction", 0.5)});
    REQUIRE(rec.winners.size() == 1);
    CHECK(rec.winners[0].algorithm == "contraction");
    CHECK(rec.flip_boundaries.empty());
}

TEST_CASE("recommend reports the flip boundary at O=16") {
    std::vector<BenchRecord> records;
    for (std::size_t o : {1, 4, 16, 64}) {
        const bool contraction_wins = o < 16;
        records.push_back(make_record("mlp:8;32", 8, o, "contraction", contraction_wins ? 1.0 : 2.0));
        records.push_back(make_record("mlp:8;32", 8, o, "nvp", contraction_wins ? 2.0 : 1.0));
    }
    const auto rec = recommend(records);
    REQUIRE_FALSE(rec.flip_boundaries.empty());
    CHECK(rec.flip_boundaries[0].find("O=16") != std::string::npos);
    CHECK(rec.flip_boundaries[0].find("contraction") != std::string::npos);
    CHECK(rec.flip_boundaries[0].find("nvp") != std::string::npos);
}

TEST_CASE("recommend rejects empty input") {
    CHECK_THROWS_AS(recommend({}), Error);
    std::vector<BenchRecord> all_failed{make_record("a", 1, 1, "naive", 0.0)};
    all_failed[0].error = "boom";
    CHECK_THROWS_AS(recommend(all_failed), Error);
}

TEST_CASE("a small sweep produces one clean record per grid point") {
    BenchGrid grid;
    grid.architectures = {"mlp:4,8"};
    grid.batch_sizes = {4};
    grid.output_counts = {1, 3};
    grid.algorithms = {Algorithm::Naive, Algorithm::JacobianContraction,
                       Algorithm::NtkVectorProduct};
    const auto records = sweep(grid, 3, 1, 7);
    CHECK(records.size() == 6);
    for (const auto& r : records) {
        CHECK(r.error.empty());
        CHECK(r.wall_seconds_median > 0.0);
        CHECK(r.peak_intermediate_bytes > 0);
        CHECK(r.params > 0);
    }
    // vector products use less intermediate memory than contraction at O=1
    const auto* contraction = &records[1];
    const auto* nvp = &records[2];
    REQUIRE(contraction->algorithm == "contraction");
    REQUIRE(nvp->algorithm == "nvp");
    CHECK(nvp->peak_intermediate_bytes <= contraction->peak_intermediate_bytes);
}

TEST_CASE("a real sweep shows the winner flipping along the O axis") {
    // naive wins at O=1 (no workspace or column machinery); vector products
    // win once B*O outgrows P's influence. The flip location is machine
    // dependent; its existence is not.
    BenchGrid grid;
    grid.architectures = {"mlp:8,16"};
    grid.batch_sizes = {8};
    grid.output_counts = {1, 32};
    grid.algorithms = {Algorithm::Naive, Algorithm::JacobianContraction,
                       Algorithm::NtkVectorProduct};
    const auto records = sweep(grid, 5, 1, 7);
    const auto rec = recommend(records);
    REQUIRE(rec.winners.size() == 2);
    CHECK(rec.winners[0].algorithm != rec.winners[1].algorithm);
    CHECK_FALSE(rec.flip_boundaries.empty());
}

TEST_CASE("architecture templates validate their ids") {
    CHECK(make_bench_arch("linear:6", 3).output_count == 3);
    CHECK(make_bench_arch("mlp:6,16", 4).param_count() == 6 * 16 + 16 + 16 * 4 + 4);
    CHECK_THROWS_AS(make_bench_arch("resnet:50", 10), Error);
    CHECK_THROWS_AS(make_bench_arch("mlp:6", 4), Error);
}
