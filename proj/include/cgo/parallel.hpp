#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace cgo {

namespace detail {
inline int& job_count() {
    static int jobs = [] {
        if (const char* env = std::getenv("CGO_JOBS")) {
            int v = std::atoi(env);
            if (v > 0) return v;
        }
        unsigned hc = std::thread::hardware_concurrency();
        return hc > 0 ? static_cast<int>(hc) : 1;
    }();
    return jobs;
}
}  // namespace detail

inline int jobs() { return detail::job_count(); }
inline void set_jobs(int n) { detail::job_count() = std::max(1, n); }

// Work is cut into fixed-size chunks independent of the thread count, so any
// per-chunk reduction gives the same bits for every --jobs value.
inline constexpr std::size_t kChunk = 1024;

template <class F>
void parallel_for(std::size_t n, F&& f) {
    const std::size_t nchunks = (n + kChunk - 1) / kChunk;
    const int nt = static_cast<int>(std::min<std::size_t>(jobs(), nchunks));
    auto run_chunk = [&](std::size_t c) {
        std::size_t lo = c * kChunk, hi = std::min(n, lo + kChunk);
        for (std::size_t i = lo; i < hi; ++i) f(i);
    };
    if (nt <= 1) {
        for (std::size_t c = 0; c < nchunks; ++c) run_chunk(c);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(nt);
    for (int t = 0; t < nt; ++t)
        pool.emplace_back([&, t] {
            for (std::size_t c = t; c < nchunks; c += nt) run_chunk(c);
        });
    for (auto& th : pool) th.join();
}

// Deterministic sum of f(i) over [0, n).
template <class T, class F>
T parallel_sum(std::size_t n, F&& f, T zero = T{}) {
    const std::size_t nchunks = (n + kChunk - 1) / kChunk;
    std::vector<T> part(nchunks, zero);
    parallel_for(nchunks, [&](std::size_t c) {
        T acc = zero;
        std::size_t lo = c * kChunk, hi = std::min(n, lo + kChunk);
        for (std::size_t i = lo; i < hi; ++i) acc += f(i);
        part[c] = acc;
    });
    T total = zero;
    for (const auto& p : part) total += p;
    return total;
}

// Deterministic max of f(i) over [0, n).
template <class F>
double parallel_max(std::size_t n, F&& f) {
    const std::size_t nchunks = (n + kChunk - 1) / kChunk;
    std::vector<double> part(nchunks, 0.0);
    parallel_for(nchunks, [&](std::size_t c) {
        double m = 0.0;
        std::size_t lo = c * kChunk, hi = std::min(n, lo + kChunk);
        for (std::size_t i = lo; i < hi; ++i) m = std::max(m, static_cast<double>(f(i)));
        part[c] = m;
    });
    double m = 0.0;
    for (double p : part) m = std::max(m, p);
    return m;
}

}  // namespace cgo
