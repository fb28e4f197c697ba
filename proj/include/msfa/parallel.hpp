#pragma once

#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace msfa {

// Worker count: MSFA_THREADS caps parallelism, 0 or unset means auto.
inline int thread_count() {
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw < 1) hw = 1;
    if (const char* env = std::getenv("MSFA_THREADS")) {
        char* end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end != env && v > 0 && v < 1024) return static_cast<int>(v);
    }
    return hw;
}

// Runs fn(i) for i in [0, n). Work is split into fixed-size chunks claimed
// atomically; fn must write disjoint outputs per index.
template <typename Fn>
void parallel_for(long n, Fn&& fn) {
    if (n <= 0) return;
    int workers = thread_count();
    const long chunk = 256;
    if (workers <= 1 || n <= chunk) {
        for (long i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<long> next{0};
    auto body = [&] {
        for (;;) {
            long begin = next.fetch_add(chunk);
            if (begin >= n) return;
            long end = begin + chunk < n ? begin + chunk : n;
            for (long i = begin; i < end; ++i) fn(i);
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers) - 1);
    for (int t = 1; t < workers; ++t) pool.emplace_back(body);
    body();
    for (auto& th : pool) th.join();
}

// Deterministic sum reduction: items are grouped into fixed 256-element
// chunks, each chunk is accumulated left-to-right, and the per-chunk partials
// are combined in chunk order. The result is bit-identical for any worker
// count, including 1.
template <typename ItemFn>
double deterministic_sum(long n, ItemFn&& item) {
    if (n <= 0) return 0.0;
    const long chunk = 256;
    const long nchunks = (n + chunk - 1) / chunk;
    std::vector<double> partial(static_cast<size_t>(nchunks), 0.0);
    parallel_for(nchunks, [&](long c) {
        long begin = c * chunk;
        long end = begin + chunk < n ? begin + chunk : n;
        double s = 0.0;
        for (long i = begin; i < end; ++i) s += item(i);
        partial[static_cast<size_t>(c)] = s;
    });
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
}

} // namespace msfa
