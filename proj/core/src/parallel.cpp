#include "selfprop/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace selfprop {

namespace {
std::atomic<int> g_threads{0};
}

int thread_count()
{
    int n = g_threads.load();
    if (n > 0)
        return n;
    if (const char* e = std::getenv("SELFPROP_THREADS")) {
        const int v = std::atoi(e);
        if (v > 0)
            return v;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

void set_thread_count(int n) { g_threads = n; }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body)
{
    const int nt = static_cast<int>(std::min<std::size_t>(thread_count(), n));
    if (nt <= 1) {
        for (std::size_t i = 0; i < n; ++i)
            body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr err;
    std::mutex mu;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n)
                return;
            try {
                body(i);
            } catch (...) {
                std::lock_guard lk(mu);
                if (!err)
                    err = std::current_exception();
                next = n;
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < nt; ++t)
        pool.emplace_back(worker);
    for (auto& t : pool)
        t.join();
    if (err)
        std::rethrow_exception(err);
}

} // namespace selfprop
