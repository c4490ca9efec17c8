#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "entk/ntk.hpp"
#include "entk/sha256.hpp"
#include "entk/tensor.hpp"

namespace entk {

// Decomposition of an R x C kernel into a grid of chunk-edged tiles, ragged
// at the edges. Tile ids are row-major over the tile grid. For symmetric
// kernels only tiles with tile_row <= tile_col are computed; committing one
// also materializes its mirror, so the bitmap covers the whole grid.
struct TilePlan {
    std::uint64_t rows = 0;
    std::uint64_t cols = 0;
    std::uint32_t chunk = 0;
    bool symmetric = false;

    std::size_t tile_rows() const { return (rows + chunk - 1) / chunk; }
    std::size_t tile_cols() const { return (cols + chunk - 1) / chunk; }
    std::size_t tile_count() const { return tile_rows() * tile_cols(); }

    struct Rect {
        std::uint64_t r0, r1, c0, c1;
        std::uint64_t height() const { return r1 - r0; }
        std::uint64_t width() const { return c1 - c0; }
        std::uint64_t area() const { return height() * width(); }
    };

    Rect tile_rect(std::size_t tile_id) const;
    std::size_t tile_row(std::size_t tile_id) const { return tile_id / tile_cols(); }
    std::size_t tile_col(std::size_t tile_id) const { return tile_id % tile_cols(); }
    std::size_t tile_id_at(std::size_t tr, std::size_t tc) const { return tr * tile_cols() + tc; }
    std::size_t mirror_id(std::size_t tile_id) const;
    bool is_diagonal(std::size_t tile_id) const { return tile_row(tile_id) == tile_col(tile_id); }

    // Tiles actually scheduled for computation (upper triangle when
    // symmetric), ascending.
    bool is_computable(std::size_t tile_id) const;
    std::vector<std::size_t> computable_tiles() const;
};

enum class StoreDtype : std::uint8_t { F32 = 0, F64 = 1 };

// On-disk header of the ENTK kernel format, version 1. All integers are
// little-endian; the tile region follows the header, tiles contiguous in
// tile-id order, each row-major in the declared dtype.
struct KernelFileHeader {
    static constexpr char kMagic[4] = {'E', 'N', 'T', 'K'};
    static constexpr std::uint16_t kVersion = 1;

    StoreDtype dtype = StoreDtype::F64;
    KernelKind kind = KernelKind::Pntk;
    Algorithm algorithm = Algorithm::JacobianContraction;
    PntkMode pntk_mode = PntkMode::SumLogits;
    std::uint32_t output_count = 0;
    std::uint64_t rows = 0;
    std::uint64_t cols = 0;
    std::uint32_t chunk = 0;
    bool symmetric = false;
    std::vector<std::uint32_t> layer_mask;
    Digest model_fingerprint{};
    Digest data_fingerprint_rows{};
    Digest data_fingerprint_cols{};

    TilePlan plan() const { return TilePlan{rows, cols, chunk, symmetric}; }
    std::size_t bitmap_bytes() const { return (plan().tile_count() + 7) / 8; }
    std::size_t header_bytes() const;
};

// Single-writer handle over one ENTK file. Tile data is written before the
// bitmap bit is set, so a crash can lose a tile but never corrupt one.
class KernelStore {
public:
    static KernelStore create(const std::string& path, const KernelFileHeader& header,
                              bool overwrite = false);
    static KernelStore open(const std::string& path, bool writable = true);

    const KernelFileHeader& header() const { return header_; }
    const TilePlan& plan() const { return plan_; }
    const std::string& path() const { return path_; }

    // Data write + bitmap mark. For symmetric kernels the mirrored tile is
    // materialized and marked in the same call; tile_id must be computable.
    void write_tile(std::size_t tile_id, const Tensor& values);

    // Fault-injection seam: the two halves of write_tile.
    void write_tile_data(std::size_t tile_id, const Tensor& values);
    void mark_tile_complete(std::size_t tile_id);

    Tensor read_tile(std::size_t tile_id);
    bool tile_complete(std::size_t tile_id) const;

    // Unset-bitmap tiles, ascending (whole grid).
    std::vector<std::size_t> missing_tiles() const;
    // Missing tiles after verifying fingerprints against the caller's model
    // and data.
    std::vector<std::size_t> resume_plan(const Digest& model_fp, const Digest& rows_fp,
                                         const Digest& cols_fp) const;
    bool complete() const;

    // Assemble the whole kernel (errors if any tile is missing).
    Tensor read_full();

    // New file with `new_rows` extra rows (and columns when symmetric).
    // Complete tiles whose rectangles lie inside the old extents are copied
    // bit-exactly; everything touching new rows/cols starts incomplete.
    KernelStore append_rows(const std::string& new_path, std::uint64_t new_rows,
                            const Digest& new_rows_fp, const Digest& new_cols_fp,
                            bool overwrite = false) const;

private:
    KernelStore(std::string path, KernelFileHeader header, bool writable);

    std::uint64_t tile_offset(std::size_t tile_id) const;
    std::size_t dtype_size() const { return header_.dtype == StoreDtype::F32 ? 4 : 8; }
    void write_values_at(std::uint64_t offset, const Tensor& values);

    std::string path_;
    KernelFileHeader header_;
    TilePlan plan_;
    std::vector<std::uint8_t> bitmap_;
    std::vector<std::uint64_t> tile_offsets_;
    std::uint64_t bitmap_file_offset_ = 0;
    bool writable_ = false;
};

// Assembled kernel plus the metadata carried by the file header.
KernelMatrix kernel_from_store(KernelStore& store);

}  // namespace entk
