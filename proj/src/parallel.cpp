#include "ktrade/parallel.hpp"

#include <algorithm>
#include <mutex>

namespace ktrade {

namespace {
std::atomic<int> g_threads{0};
thread_local bool t_inside_parallel = false;
}

void set_num_threads(int n) { g_threads.store(n < 0 ? 0 : n); }

int num_threads() {
    int n = g_threads.load();
    if (n == 0) {
        n = static_cast<int>(std::thread::hardware_concurrency());
        if (n == 0) n = 1;
    }
    return n;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    // Nested regions run serially; the outermost level owns the workers.
    const int workers = t_inside_parallel
                            ? 1
                            : static_cast<int>(std::min<std::size_t>(
                                  static_cast<std::size_t>(num_threads()), n));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;

    auto worker = [&] {
        t_inside_parallel = true;
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) break;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                next.store(n);
                break;
            }
        }
        t_inside_parallel = false;
    };

    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers - 1));
    for (int t = 1; t < workers; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();

    if (error) std::rethrow_exception(error);
}

} // namespace ktrade
