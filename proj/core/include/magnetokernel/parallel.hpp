#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace mk::parallel {

/// Worker count resolution: explicit argument > MAGNETOKERNEL_WORKERS env
/// var > hardware concurrency.
inline int resolve_workers(int requested = 0) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("MAGNETOKERNEL_WORKERS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

/// Deterministic blocked reduction over the index range [0, count).
///
/// The range is cut into fixed-size blocks; each block is accumulated
/// sequentially (in index order) into its own Acc slot by whichever worker
/// claims it, and the slots are folded in block order at the end. The result
/// is therefore a pure function of (count, block_size, per_index) and does
/// not depend on the worker count or scheduling.
template <class Acc, class PerIndex, class Fold>
Acc blocked_reduce(long count, int workers, PerIndex&& per_index, Fold&& fold,
                   long block_size = 1024) {
    if (count <= 0) return Acc{};
    const long n_blocks = (count + block_size - 1) / block_size;
    std::vector<Acc> partials(static_cast<std::size_t>(n_blocks));
    std::atomic<long> next{0};
    std::exception_ptr error;
    std::atomic<bool> failed{false};

    auto run = [&]() {
        for (;;) {
            const long b = next.fetch_add(1);
            if (b >= n_blocks || failed.load(std::memory_order_relaxed)) break;
            const long lo = b * block_size;
            const long hi = std::min(count, lo + block_size);
            try {
                for (long i = lo; i < hi; ++i) per_index(i, partials[static_cast<std::size_t>(b)]);
            } catch (...) {
                bool expected = false;
                if (failed.compare_exchange_strong(expected, true)) error = std::current_exception();
                break;
            }
        }
    };

    const int n_workers =
        std::max(1, static_cast<int>(std::min<long>(resolve_workers(workers), n_blocks)));
    if (n_workers == 1) {
        run();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(n_workers));
        for (int w = 0; w < n_workers; ++w) pool.emplace_back(run);
        for (auto& t : pool) t.join();
    }
    if (error) std::rethrow_exception(error);

    Acc total{};
    for (const auto& p : partials) fold(total, p);
    return total;
}

}  // namespace mk::parallel
