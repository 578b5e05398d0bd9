#include "desyre/parallel.hpp"

#include <atomic>
#include <thread>
#include <vector>

namespace desyre {
namespace threads {

namespace {
std::atomic<int> g_count{1};
}

void set_count(int n) { g_count.store(n < 1 ? 1 : n); }
int count() { return g_count.load(); }

}  // namespace threads

void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn) {
    const int workers = static_cast<int>(std::min<std::int64_t>(threads::count(), n));
    if (workers <= 1) {
        for (std::int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    const std::int64_t chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        const std::int64_t lo = w * chunk;
        const std::int64_t hi = std::min<std::int64_t>(n, lo + chunk);
        pool.emplace_back([&fn, lo, hi] {
            for (std::int64_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace desyre
