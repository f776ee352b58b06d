#include "kpz/quadrature.hpp"

#include <map>
#include <mutex>

namespace kpz {

namespace {

GaussRule build_rule(int n)
{
    GaussRule r;
    r.x.resize(n);
    r.w.resize(n);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double z = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = 0.0;
            for (int k = 1; k <= n; ++k) {
                double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
            }
            dp = n * (z * p0 - p1) / (z * z - 1.0);
            double dz = p0 / dp;
            z -= dz;
            if (std::abs(dz) < 1e-16) break;
        }
        r.x[i] = -z;
        r.x[n - 1 - i] = z;
        r.w[i] = r.w[n - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    return r;
}

} // namespace

const GaussRule& gauss_legendre(int n)
{
    static std::mutex mu;
    static std::map<int, GaussRule> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, build_rule(n)).first;
    return it->second;
}

GaussRule gauss_legendre(int n, double a, double b)
{
    GaussRule r = gauss_legendre(n);
    const double h = 0.5 * (b - a), c = 0.5 * (b + a);
    for (int i = 0; i < n; ++i) {
        r.x[i] = c + h * r.x[i];
        r.w[i] *= h;
    }
    return r;
}

double integrate_gl(const std::function<double(double)>& f, double a, double b, int n)
{
    const GaussRule& r = gauss_legendre(n);
    const double h = 0.5 * (b - a), c = 0.5 * (b + a);
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += r.w[i] * f(c + h * r.x[i]);
    return s * h;
}

double integrate_panels(const std::function<double(double)>& f, double a, double b, int panels, int n)
{
    double s = 0.0, h = (b - a) / panels;
    for (int p = 0; p < panels; ++p) s += integrate_gl(f, a + p * h, a + (p + 1) * h, n);
    return s;
}

} // namespace kpz
