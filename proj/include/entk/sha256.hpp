#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>

namespace entk {

using Digest = std::array<std::uint8_t, 32>;

// Incremental SHA-256, used for model/data fingerprints in kernel files.
class Sha256 {
public:
    Sha256();

    void update(const void* bytes, std::size_t len);
    Digest finish();

    static Digest of(const void* bytes, std::size_t len);

private:
    void process_block(const std::uint8_t* block);

    std::array<std::uint32_t, 8> state_;
    std::array<std::uint8_t, 64> buffer_;
    std::size_t buffered_ = 0;
    std::uint64_t total_bytes_ = 0;
};

std::string digest_hex(const Digest& d);

}  // namespace entk
