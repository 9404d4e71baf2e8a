#pragma once

#include <cstddef>
#include <functional>

namespace vbdo {

/// Process-wide worker count used by the embarrassingly parallel loops.
/// Defaults to 1; the CLI sets it from --threads or VBDO_THREADS.
void set_thread_count(std::size_t n);
[[nodiscard]] std::size_t thread_count();

/// Runs body(i) for i in [0, n). Each index is processed exactly once and
/// callers write results to index-owned slots, so output never depends on
/// the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace vbdo
