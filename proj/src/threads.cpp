#include "n2n/threads.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace n2n {

std::size_t worker_count() {
    static const std::size_t count = [] {
        std::size_t n = std::max<std::size_t>(1, std::thread::hardware_concurrency());
        if (const char* cap = std::getenv("SDF_N2N_THREADS")) {
            const long v = std::atol(cap);
            if (v >= 1) n = std::min<std::size_t>(n, static_cast<std::size_t>(v));
        }
        return n;
    }();
    return count;
}

void parallel_chunks(std::size_t n,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
    const std::size_t workers = worker_count();
    if (n == 0) return;
    if (workers == 1 || n < 2 * workers) {
        fn(0, 0, n);
        return;
    }
    const std::size_t per = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t c = 0; c < workers; ++c) {
        const std::size_t begin = c * per;
        const std::size_t end = std::min(n, begin + per);
        if (begin >= end) break;
        pool.emplace_back([&fn, c, begin, end] { fn(c, begin, end); });
    }
    for (auto& t : pool) t.join();
}

}  // namespace n2n
