#pragma once

#include <cstddef>

namespace entk {

// Explicit accounting of algorithm intermediates (Jacobian buffers, gradient
// features, tile scratch). Deliberately not an OS memory probe: algorithms
// register the bytes they request, which keeps the numbers portable and
// deterministic. Counters are thread-local so concurrent tile workers
// account independently.
namespace alloc_stats {

void reset();
std::size_t current_bytes();
std::size_t peak_bytes();

// RAII registration of one intermediate buffer.
class Scoped {
public:
    explicit Scoped(std::size_t bytes);
    ~Scoped();
    Scoped(const Scoped&) = delete;
    Scoped& operator=(const Scoped&) = delete;

private:
    std::size_t bytes_;
};

}  // namespace alloc_stats

}  // namespace entk
