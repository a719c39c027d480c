#pragma once

#include <cstdint>
#include <functional>

namespace tadoc {

// Global worker count for parallel_for. 0 = auto (hardware concurrency, capped).
void set_thread_count(int n);
int thread_count();

// Splits [0, n) into contiguous chunks, one per worker. Each index is
// processed by exactly one worker with a fixed-order inner loop, so results
// are bit-identical for any worker count as long as chunks only write to
// disjoint outputs. Below `grain` total work the call runs inline.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& chunk,
                  std::int64_t grain = 4096);

// RAII override, used by inference to dedicate threads to per-timestep
// forwards instead of intra-op loops.
class ThreadCountGuard {
public:
    explicit ThreadCountGuard(int n) : saved_(thread_count()) { set_thread_count(n); }
    ~ThreadCountGuard() { set_thread_count(saved_); }
    ThreadCountGuard(const ThreadCountGuard&) = delete;
    ThreadCountGuard& operator=(const ThreadCountGuard&) = delete;

private:
    int saved_;
};

}  // namespace tadoc
