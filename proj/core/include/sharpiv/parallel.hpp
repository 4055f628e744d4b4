#pragma once

#include <cstddef>
#include <functional>

namespace sharpiv {

/* Runs fn(i) for i in [0, count) on up to `threads` workers.
 *
 * Work items are claimed from a shared atomic counter; callers must make
 * fn(i) depend only on i (slot-indexed output, counter-based RNG) so results
 * are identical for any thread count.  threads <= 1 runs inline.  The first
 * exception thrown by any worker is rethrown after all workers join.
 */
void parallel_for(std::size_t count, int threads,
                  const std::function<void(std::size_t)>& fn);

/* Resolved worker count: 0 means "all hardware threads". */
int resolve_threads(int requested);

}  // namespace sharpiv
