#pragma once
#include <cstddef>
#include <functional>
#include <vector>

namespace kpz {

// Worker count used by parallel_for; results never depend on it.
void set_threads(int n);
int threads();

// Runs fn(i) for i in [0, n). Each index is processed exactly once.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

// Sums in a fixed pairwise tree so the result is independent of scheduling.
double pairwise_sum(const std::vector<double>& v);

struct MeanErr {
    double mean = 0.0;
    double stderr_ = 0.0;
    double sd = 0.0;
    std::size_t n = 0;
};

MeanErr mean_stderr(const std::vector<double>& v);

} // namespace kpz
