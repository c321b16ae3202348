#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <thread>
#include <vector>

namespace pretest {

// Static-chunked loop over [0, count). fn(begin, end, chunk) sees contiguous
// chunks in index order, so callers that write per-index results and reduce
// them afterwards get identical output at every thread count. The first
// exception (lowest chunk) is rethrown.
template <typename Fn>
void parallel_for(std::int64_t count, int threads, Fn&& fn) {
    if (count <= 0) return;
    const auto workers = static_cast<std::int64_t>(std::clamp<std::int64_t>(threads, 1, count));
    if (workers == 1) {
        fn(std::int64_t{0}, count, 0);
        return;
    }
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (std::int64_t w = 0; w < workers; ++w) {
        const std::int64_t begin = count * w / workers;
        const std::int64_t end = count * (w + 1) / workers;
        pool.emplace_back([&, begin, end, w] {
            try {
                fn(begin, end, static_cast<int>(w));
            } catch (...) {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace pretest
