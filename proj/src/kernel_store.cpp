#include "entk/kernel_store.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace entk {

namespace fs = std::filesystem;

TilePlan::Rect TilePlan::tile_rect(std::size_t tile_id) const {
    if (tile_id >= tile_count()) {
        throw Error(ErrorKind::Dimension, "tile id " + std::to_string(tile_id) + " out of range");
    }
    const std::size_t tr = tile_row(tile_id), tc = tile_col(tile_id);
    Rect r;
    r.r0 = std::uint64_t(tr) * chunk;
    r.r1 = std::min<std::uint64_t>(r.r0 + chunk, rows);
    r.c0 = std::uint64_t(tc) * chunk;
    r.c1 = std::min<std::uint64_t>(r.c0 + chunk, cols);
    return r;
}

std::size_t TilePlan::mirror_id(std::size_t tile_id) const {
    return tile_id_at(tile_col(tile_id), tile_row(tile_id));
}

bool TilePlan::is_computable(std::size_t tile_id) const {
    return !symmetric || tile_row(tile_id) <= tile_col(tile_id);
}

std::vector<std::size_t> TilePlan::computable_tiles() const {
    std::vector<std::size_t> ids;
    for (std::size_t t = 0; t < tile_count(); ++t) {
        if (is_computable(t)) ids.push_back(t);
    }
    return ids;
}

namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(std::uint8_t(v));
    out.push_back(std::uint8_t(v >> 8));
}
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(std::uint8_t(v >> (8 * i)));
}
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(std::uint8_t(v >> (8 * i)));
}

struct Reader {
    const std::uint8_t* p;
    const std::uint8_t* end;
    void need(std::size_t n) const {
        if (std::size_t(end - p) < n) throw Error(ErrorKind::Integrity, "truncated kernel file header");
    }
    std::uint8_t u8() { need(1); return *p++; }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = std::uint16_t(p[0]) | std::uint16_t(p[1]) << 8;
        p += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(p[i]) << (8 * i);
        p += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(p[i]) << (8 * i);
        p += 8;
        return v;
    }
    void bytes(void* dst, std::size_t n) {
        need(n);
        std::memcpy(dst, p, n);
        p += n;
    }
};

std::vector<std::uint8_t> serialize_header_prefix(const KernelFileHeader& h) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), h.kMagic, h.kMagic + 4);
    put_u16(out, KernelFileHeader::kVersion);
    out.push_back(std::uint8_t(h.dtype));
    out.push_back(std::uint8_t(h.kind));
    out.push_back(std::uint8_t(h.algorithm));
    out.push_back(std::uint8_t(h.pntk_mode));
    put_u32(out, h.output_count);
    put_u64(out, h.rows);
    put_u64(out, h.cols);
    put_u32(out, h.chunk);
    out.push_back(h.symmetric ? 1 : 0);
    put_u32(out, std::uint32_t(h.layer_mask.size()));
    for (std::uint32_t m : h.layer_mask) put_u32(out, m);
    out.insert(out.end(), h.model_fingerprint.begin(), h.model_fingerprint.end());
    out.insert(out.end(), h.data_fingerprint_rows.begin(), h.data_fingerprint_rows.end());
    out.insert(out.end(), h.data_fingerprint_cols.begin(), h.data_fingerprint_cols.end());
    return out;
}

void pwrite_bytes(const std::string& path, std::uint64_t offset, const void* data, std::size_t len) {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    if (!f) throw Error(ErrorKind::Io, "cannot open for writing: " + path);
    f.seekp(static_cast<std::streamoff>(offset));
    f.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
    f.flush();
    if (!f) throw Error(ErrorKind::Io, "write failed: " + path);
}

void pread_bytes(const std::string& path, std::uint64_t offset, void* data, std::size_t len) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorKind::Io, "cannot open for reading: " + path);
    f.seekg(static_cast<std::streamoff>(offset));
    f.read(static_cast<char*>(data), static_cast<std::streamsize>(len));
    if (!f) throw Error(ErrorKind::Io, "read failed: " + path);
}

}  // namespace

std::size_t KernelFileHeader::header_bytes() const {
    return 4 + 2 + 4 * 1 + 4 + 8 + 8 + 4 + 1 + 4 + 4 * layer_mask.size() + 3 * 32 + bitmap_bytes();
}

KernelStore::KernelStore(std::string path, KernelFileHeader header, bool writable)
    : path_(std::move(path)), header_(std::move(header)), plan_(header_.plan()), writable_(writable) {
    bitmap_.assign(header_.bitmap_bytes(), 0);
    bitmap_file_offset_ = header_.header_bytes() - header_.bitmap_bytes();
    tile_offsets_.resize(plan_.tile_count());
    std::uint64_t off = header_.header_bytes();
    for (std::size_t t = 0; t < plan_.tile_count(); ++t) {
        tile_offsets_[t] = off;
        off += plan_.tile_rect(t).area() * dtype_size();
    }
}

KernelStore KernelStore::create(const std::string& path, const KernelFileHeader& header,
                                bool overwrite) {
    if (header.rows == 0 || header.cols == 0 || header.chunk == 0) {
        throw Error(ErrorKind::Dimension, "kernel store needs rows, cols and chunk >= 1");
    }
    if (header.symmetric && header.rows != header.cols) {
        throw Error(ErrorKind::Dimension, "symmetric kernel must be square");
    }
    if (fs::exists(path) && !overwrite) {
        throw Error(ErrorKind::Refused,
                    "refusing to overwrite existing file " + path + " (pass overwrite)");
    }
    KernelStore store(path, header, true);
    auto bytes = serialize_header_prefix(header);
    bytes.insert(bytes.end(), store.bitmap_.begin(), store.bitmap_.end());
    {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        if (!f) throw Error(ErrorKind::Io, "cannot create " + path);
        f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
        if (!f) throw Error(ErrorKind::Io, "write failed: " + path);
    }
    std::uint64_t total = store.header_.header_bytes();
    for (std::size_t t = 0; t < store.plan_.tile_count(); ++t) {
        total += store.plan_.tile_rect(t).area() * store.dtype_size();
    }
    std::error_code ec;
    fs::resize_file(path, total, ec);
    if (ec) throw Error(ErrorKind::Io, "cannot presize " + path + ": " + ec.message());
    return store;
}

KernelStore KernelStore::open(const std::string& path, bool writable) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorKind::Io, "cannot open " + path);
    std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(f)), {});
    Reader r{buf.data(), buf.data() + buf.size()};

    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, KernelFileHeader::kMagic, 4) != 0) {
        throw Error(ErrorKind::Integrity, path + " is not an ENTK kernel file");
    }
    const std::uint16_t version = r.u16();
    if (version != KernelFileHeader::kVersion) {
        throw Error(ErrorKind::Integrity,
                    "unsupported ENTK version " + std::to_string(version));
    }
    KernelFileHeader h;
    h.dtype = static_cast<StoreDtype>(r.u8());
    h.kind = static_cast<KernelKind>(r.u8());
    h.algorithm = static_cast<Algorithm>(r.u8());
    h.pntk_mode = static_cast<PntkMode>(r.u8());
    h.output_count = r.u32();
    h.rows = r.u64();
    h.cols = r.u64();
    h.chunk = r.u32();
    h.symmetric = r.u8() != 0;
    const std::uint32_t mask_count = r.u32();
    h.layer_mask.resize(mask_count);
    for (auto& m : h.layer_mask) m = r.u32();
    r.bytes(h.model_fingerprint.data(), 32);
    r.bytes(h.data_fingerprint_rows.data(), 32);
    r.bytes(h.data_fingerprint_cols.data(), 32);
    if (h.rows == 0 || h.cols == 0 || h.chunk == 0) {
        throw Error(ErrorKind::Integrity, "corrupt header extents in " + path);
    }

    KernelStore store(path, h, writable);
    r.bytes(store.bitmap_.data(), store.bitmap_.size());

    std::uint64_t expected = store.header_.header_bytes();
    for (std::size_t t = 0; t < store.plan_.tile_count(); ++t) {
        expected += store.plan_.tile_rect(t).area() * store.dtype_size();
    }
    if (buf.size() != expected) {
        throw Error(ErrorKind::Integrity,
                    path + ": file size " + std::to_string(buf.size()) +
                        " inconsistent with header (expected " + std::to_string(expected) + ")");
    }
    return store;
}

std::uint64_t KernelStore::tile_offset(std::size_t tile_id) const {
    if (tile_id >= plan_.tile_count()) {
        throw Error(ErrorKind::Dimension, "tile id " + std::to_string(tile_id) + " out of range");
    }
    return tile_offsets_[tile_id];
}

void KernelStore::write_values_at(std::uint64_t offset, const Tensor& values) {
    const std::size_t n = values.size();
    std::vector<std::uint8_t> buf(n * dtype_size());
    if (header_.dtype == StoreDtype::F64) {
        if constexpr (std::endian::native == std::endian::little) {
            std::memcpy(buf.data(), values.data.data(), buf.size());
        } else {
            for (std::size_t i = 0; i < n; ++i) {
                const auto bits = std::bit_cast<std::uint64_t>(values.data[i]);
                for (int b = 0; b < 8; ++b) buf[i * 8 + b] = std::uint8_t(bits >> (8 * b));
            }
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(values.data[i]));
            for (int b = 0; b < 4; ++b) buf[i * 4 + b] = std::uint8_t(bits >> (8 * b));
        }
    }
    pwrite_bytes(path_, offset, buf.data(), buf.size());
}

void KernelStore::write_tile_data(std::size_t tile_id, const Tensor& values) {
    if (!writable_) throw Error(ErrorKind::Io, "kernel store opened read-only");
    if (!plan_.is_computable(tile_id)) {
        throw Error(ErrorKind::Dimension,
                    "tile " + std::to_string(tile_id) + " is a mirrored tile; write its upper twin");
    }
    const auto rect = plan_.tile_rect(tile_id);
    if (values.rank() != 2 || values.shape[0] != rect.height() || values.shape[1] != rect.width()) {
        throw Error(ErrorKind::Dimension,
                    "tile " + std::to_string(tile_id) + " expects " + std::to_string(rect.height()) +
                        "x" + std::to_string(rect.width()) + " values, got " + values.shape_str());
    }
    write_values_at(tile_offset(tile_id), values);
    if (header_.symmetric && !plan_.is_diagonal(tile_id)) {
        write_values_at(tile_offset(plan_.mirror_id(tile_id)), transpose(values));
    }
}

void KernelStore::mark_tile_complete(std::size_t tile_id) {
    if (!writable_) throw Error(ErrorKind::Io, "kernel store opened read-only");
    auto set_bit = [&](std::size_t t) {
        bitmap_[t / 8] |= std::uint8_t(1u << (t % 8));
        pwrite_bytes(path_, bitmap_file_offset_ + t / 8, &bitmap_[t / 8], 1);
    };
    set_bit(tile_id);
    if (header_.symmetric && !plan_.is_diagonal(tile_id)) set_bit(plan_.mirror_id(tile_id));
}

void KernelStore::write_tile(std::size_t tile_id, const Tensor& values) {
    write_tile_data(tile_id, values);
    mark_tile_complete(tile_id);  // bitmap update strictly after data
}

bool KernelStore::tile_complete(std::size_t tile_id) const {
    if (tile_id >= plan_.tile_count()) {
        throw Error(ErrorKind::Dimension, "tile id " + std::to_string(tile_id) + " out of range");
    }
    return (bitmap_[tile_id / 8] >> (tile_id % 8)) & 1u;
}

Tensor KernelStore::read_tile(std::size_t tile_id) {
    if (!tile_complete(tile_id)) {
        throw Error(ErrorKind::IncompleteTile,
                    "tile " + std::to_string(tile_id) + " has not been committed");
    }
    const auto rect = plan_.tile_rect(tile_id);
    const std::size_t n = rect.area();
    std::vector<std::uint8_t> buf(n * dtype_size());
    pread_bytes(path_, tile_offset(tile_id), buf.data(), buf.size());
    Tensor out = Tensor::zeros({rect.height(), rect.width()});
    if (header_.dtype == StoreDtype::F64) {
        if constexpr (std::endian::native == std::endian::little) {
            std::memcpy(out.data.data(), buf.data(), buf.size());
        } else {
            for (std::size_t i = 0; i < n; ++i) {
                std::uint64_t bits = 0;
                for (int b = 0; b < 8; ++b) bits |= std::uint64_t(buf[i * 8 + b]) << (8 * b);
                out.data[i] = std::bit_cast<double>(bits);
            }
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            std::uint32_t bits = 0;
            for (int b = 0; b < 4; ++b) bits |= std::uint32_t(buf[i * 4 + b]) << (8 * b);
            out.data[i] = static_cast<double>(std::bit_cast<float>(bits));
        }
    }
    return out;
}

std::vector<std::size_t> KernelStore::missing_tiles() const {
    std::vector<std::size_t> ids;
    for (std::size_t t = 0; t < plan_.tile_count(); ++t) {
        if (!tile_complete(t)) ids.push_back(t);
    }
    return ids;
}

std::vector<std::size_t> KernelStore::resume_plan(const Digest& model_fp, const Digest& rows_fp,
                                                  const Digest& cols_fp) const {
    if (model_fp != header_.model_fingerprint) {
        throw Error(ErrorKind::Integrity, "model fingerprint does not match kernel file " + path_);
    }
    if (rows_fp != header_.data_fingerprint_rows) {
        throw Error(ErrorKind::Integrity,
                    "rows-side data fingerprint does not match kernel file " + path_);
    }
    if (cols_fp != header_.data_fingerprint_cols) {
        throw Error(ErrorKind::Integrity,
                    "cols-side data fingerprint does not match kernel file " + path_);
    }
    return missing_tiles();
}

bool KernelStore::complete() const { return missing_tiles().empty(); }

Tensor KernelStore::read_full() {
    Tensor out = Tensor::zeros({plan_.rows, plan_.cols});
    for (std::size_t t = 0; t < plan_.tile_count(); ++t) {
        const Tensor tile = read_tile(t);
        const auto rect = plan_.tile_rect(t);
        for (std::uint64_t r = rect.r0; r < rect.r1; ++r) {
            std::memcpy(out.row_ptr(r) + rect.c0, tile.row_ptr(r - rect.r0),
                        rect.width() * sizeof(double));
        }
    }
    return out;
}

KernelStore KernelStore::append_rows(const std::string& new_path, std::uint64_t new_rows,
                                     const Digest& new_rows_fp, const Digest& new_cols_fp,
                                     bool overwrite) const {
    KernelFileHeader h = header_;
    h.rows += new_rows;
    if (h.symmetric) h.cols += new_rows;
    h.data_fingerprint_rows = new_rows_fp;
    h.data_fingerprint_cols = new_cols_fp;

    KernelStore fresh = create(new_path, h, overwrite);
    const TilePlan& np = fresh.plan_;
    std::vector<std::uint8_t> raw;
    for (std::size_t t = 0; t < np.tile_count(); ++t) {
        const auto rect = np.tile_rect(t);
        if (rect.r1 > plan_.rows || rect.c1 > plan_.cols) continue;  // touches new rows/cols
        const std::size_t old_id = plan_.tile_id_at(np.tile_row(t), np.tile_col(t));
        if (!tile_complete(old_id)) continue;
        raw.resize(rect.area() * dtype_size());
        pread_bytes(path_, tile_offset(old_id), raw.data(), raw.size());
        pwrite_bytes(new_path, fresh.tile_offset(t), raw.data(), raw.size());
        fresh.bitmap_[t / 8] |= std::uint8_t(1u << (t % 8));
    }
    pwrite_bytes(new_path, fresh.bitmap_file_offset_, fresh.bitmap_.data(), fresh.bitmap_.size());
    return fresh;
}

KernelMatrix kernel_from_store(KernelStore& store) {
    const KernelFileHeader& h = store.header();
    KernelMatrix k;
    k.values = store.read_full();
    k.kind = h.kind;
    k.algorithm = h.algorithm;
    k.pntk_mode = h.pntk_mode;
    k.layer_mask = h.layer_mask;
    k.model_fingerprint = h.model_fingerprint;
    k.data_fingerprint_rows = h.data_fingerprint_rows;
    k.data_fingerprint_cols = h.data_fingerprint_cols;
    k.symmetric = h.symmetric;
    k.output_count = h.output_count;
    return k;
}

}  // namespace entk
