#include "tadoc/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace tadoc {

namespace {

std::atomic<int> g_threads{0};

int resolve_threads() {
    int n = g_threads.load(std::memory_order_relaxed);
    if (n > 0) return n;
    unsigned hw = std::thread::hardware_concurrency();
    return static_cast<int>(std::clamp(hw, 1u, 16u));
}

}  // namespace

void set_thread_count(int n) { g_threads.store(n, std::memory_order_relaxed); }

int thread_count() { return resolve_threads(); }

void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& chunk,
                  std::int64_t grain) {
    if (n <= 0) return;
    int workers = resolve_threads();
    if (workers <= 1 || n < grain) {
        chunk(0, n);
        return;
    }
    workers = static_cast<int>(std::min<std::int64_t>(workers, n));
    std::int64_t per = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers) - 1);
    for (int w = 1; w < workers; ++w) {
        std::int64_t b = w * per;
        std::int64_t e = std::min<std::int64_t>(n, b + per);
        if (b >= e) break;
        pool.emplace_back([&chunk, b, e] { chunk(b, e); });
    }
    chunk(0, std::min<std::int64_t>(per, n));
    for (auto& t : pool) t.join();
}

}  // namespace tadoc
