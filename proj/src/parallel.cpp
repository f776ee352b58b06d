#include "kpz/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

namespace kpz {

namespace {
int g_threads = 1;
}

void set_threads(int n) { g_threads = std::max(1, n); }
int threads() { return g_threads; }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn)
{
    const int nt = static_cast<int>(std::min<std::size_t>(g_threads, n));
    if (nt <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr err;
    std::mutex mu;
    auto work = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (!err) err = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < nt; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

namespace {
double tree(const double* p, std::size_t n)
{
    if (n <= 8) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += p[i];
        return s;
    }
    const std::size_t h = n / 2;
    return tree(p, h) + tree(p + h, n - h);
}
} // namespace

double pairwise_sum(const std::vector<double>& v) { return tree(v.data(), v.size()); }

MeanErr mean_stderr(const std::vector<double>& v)
{
    MeanErr r;
    r.n = v.size();
    if (v.empty()) return r;
    r.mean = pairwise_sum(v) / static_cast<double>(v.size());
    if (v.size() > 1) {
        std::vector<double> sq(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) sq[i] = (v[i] - r.mean) * (v[i] - r.mean);
        r.sd = std::sqrt(pairwise_sum(sq) / static_cast<double>(v.size() - 1));
        r.stderr_ = r.sd / std::sqrt(static_cast<double>(v.size()));
    }
    return r;
}

} // namespace kpz
