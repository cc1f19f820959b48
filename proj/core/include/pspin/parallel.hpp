#pragma once

#include <cstdint>
#include <functional>

namespace pspin {

/// Runs fn(i) for i in [0, count) on up to `workers` threads. Tasks must be
/// independent; result ordering is the caller's job (write into slot i).
/// If any task throws, the exception from the lowest failing index is
/// rethrown after all threads join, so failures are deterministic too.
void parallel_for(std::int64_t count, int workers,
                  const std::function<void(std::int64_t)>& fn);

}  // namespace pspin
