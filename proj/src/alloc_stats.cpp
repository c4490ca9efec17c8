#include "entk/alloc_stats.hpp"

#include <algorithm>

namespace entk::alloc_stats {

namespace {
thread_local std::size_t g_current = 0;
thread_local std::size_t g_peak = 0;
}  // namespace

void reset() {
    g_current = 0;
    g_peak = 0;
}

std::size_t current_bytes() { return g_current; }
std::size_t peak_bytes() { return g_peak; }

Scoped::Scoped(std::size_t bytes) : bytes_(bytes) {
    g_current += bytes_;
    g_peak = std::max(g_peak, g_current);
}

Scoped::~Scoped() { g_current -= bytes_; }

}  // namespace entk::alloc_stats
