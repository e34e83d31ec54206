#pragma once

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace robstop {

// Worker count from ROBSTOP_WORKERS, else 1.
inline int default_workers() {
    if (const char* s = std::getenv("ROBSTOP_WORKERS")) {
        int w = std::atoi(s);
        if (w > 0) return w;
    }
    return 1;
}

// Static chunking over [lo, hi). Each index is written by exactly one worker,
// so results never depend on scheduling.
template <class F>
void parallel_for(long lo, long hi, int workers, F&& f) {
    long n = hi - lo;
    if (workers <= 1 || n < 4096) {
        for (long i = lo; i < hi; ++i) f(i);
        return;
    }
    int w = static_cast<int>(std::min<long>(workers, n));
    std::vector<std::thread> pool;
    long chunk = (n + w - 1) / w;
    for (int t = 0; t < w; ++t) {
        long a = lo + t * chunk, b = std::min(hi, a + chunk);
        if (a >= b) break;
        pool.emplace_back([&f, a, b] {
            for (long i = a; i < b; ++i) f(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace robstop
