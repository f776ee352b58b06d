#include "kpz/renorm.hpp"
#include "kpz/quadrature.hpp"

#include <cmath>
#include <stdexcept>

namespace kpz {

namespace {

void require_mollified(const SimConfig& c)
{
    if (c.noise != NoiseKind::mollified) throw ConfigError("renormalized constants need mollified noise");
    if (!(c.nu0 > 0)) throw ConfigError("nu0 must be positive");
    if (!(c.D0 >= 0)) throw ConfigError("D0 must be non-negative");
}

// the covariance vanishes beyond space-time distance 1
constexpr double kRange = 1.0;

Quad refine(const std::function<double(int)>& f, double rel = 1e-6)
{
    const double a = f(2), b = f(4);
    Quad q{b, std::abs(b - a)};
    if (q.error > rel * std::abs(b) + 1e-14) throw std::runtime_error("quadrature does not converge under refinement");
    return q;
}

// int_0^T dt w0(t) int dx p_{nu t}(x) rho^k C(t,|x|), radial in space
double radial_moment(const ScalePartition& P, const Mollifier& m, double nu, int d, int power, double T, int level)
{
    const double top = std::min(T, kRange);
    if (top <= 0) return 0.0;
    auto inner = [&](double t) {
        const double R = std::sqrt(std::max(0.0, kRange * kRange - t * t));
        const double s = std::sqrt(2.0 * nu * t);
        const double hi = std::min(R, 12.0 * s);
        if (hi <= 0) return 0.0;
        const double v = integrate_panels(
            [&](double r) {
                return std::pow(r, d - 1 + power) * heat_kernel(nu, d, t, r) *
                       m.covariance_radial(std::sqrt(t * t + r * r));
            },
            0.0, hi, 4 * level, 16);
        return sphere_area(d) * v * P.weight(0, t);
    };
    return integrate_panels(inner, 0.0, top, 8 * level, 16);
}

} // namespace

double coupling(const SimConfig& c)
{
    if (!(c.nu0 > 0)) throw ConfigError("nu0 must be positive");
    if (!(c.D0 >= 0)) throw ConfigError("D0 must be non-negative");
    return c.g0();
}

Quad v0_leading(const SimConfig& c, const ScalePartition& P, const Mollifier& m)
{
    require_mollified(c);
    const double g = coupling(c);
    if (g == 0.0) return {};
    Quad q = refine([&](int l) { return radial_moment(P, m, c.nu0, c.d, 0, kRange, l); });
    return {g * q.value, g * q.error};
}

FixedPoint v0_fixed_point(const SimConfig& c, const ScalePartition& P, const Mollifier& m, double tol)
{
    const double g = coupling(c);
    FixedPoint fp;
    if (g == 0.0) return fp;
    const double I = v0_leading(c, P, m).value / g;
    // the centered-noise shift v^2 multiplies the full mass of G^0
    const double M = integrate_panels([&](double t) { return P.weight(0, t); }, 0.0, 4.0, 16, 16);
    double v = 0.0, prev_step = 0.0;
    for (int it = 1; it <= 200; ++it) {
        const double nv = g * (I + v * v * M);
        const double step = std::abs(nv - v);
        if (it > 1 && prev_step > 0) {
            const double r = step / prev_step;
            fp.max_ratio = std::max(fp.max_ratio, r);
            if (r >= 0.5) throw std::runtime_error("v0 iteration is not a contraction (step ratio " + std::to_string(r) + ")");
        }
        v = nv;
        prev_step = step;
        fp.iterations = it;
        if (step <= tol * std::abs(v)) break;
    }
    fp.value = v;
    return fp;
}

Quad delta_nu(const SimConfig& c, const ScalePartition& P, const Mollifier& m, int axis)
{
    require_mollified(c);
    if (axis < 0 || axis >= c.d) throw std::invalid_argument("axis out of range");
    if (c.d > 4) throw std::invalid_argument("dimension must be <= 4");
    const double pre = 0.5 * c.lambda * c.lambda * c.D0 / (c.nu0 * c.nu0);
    if (pre == 0.0) return {};
    const double nu = c.nu0;
    const int d = c.d;
    // tensor Gauss-Legendre over the box that holds both the covariance and the heat kernel
    auto run = [&](int level) {
        const int n = 16 * level;
        auto inner = [&](double t) {
            const double R = std::min(std::sqrt(std::max(0.0, 1.0 - t * t)), 8.0 * std::sqrt(2.0 * nu * t));
            if (R <= 0) return 0.0;
            const GaussRule g = gauss_legendre(n, -R, R);
            std::array<int, 4> idx{};
            double acc = 0.0;
            while (true) {
                double r2 = 0.0, w = 1.0;
                for (int a = 0; a < d; ++a) {
                    r2 += g.x[idx[a]] * g.x[idx[a]];
                    w *= g.w[idx[a]];
                }
                const double xa = g.x[idx[axis]];
                acc += w * xa * xa * heat_kernel(nu, d, t, std::sqrt(r2)) * m.covariance_radial(std::sqrt(t * t + r2));
                int a = 0;
                while (a < d && ++idx[a] == n) idx[a++] = 0;
                if (a == d) break;
            }
            return acc * P.weight(0, t);
        };
        return integrate_panels(inner, 0.0, kRange, 2 * level, 12);
    };
    Quad q = refine(run, 1e-4);
    return {pre * q.value, pre * q.error};
}

Quad delta_nu_isotropic(const SimConfig& c, const ScalePartition& P, const Mollifier& m)
{
    require_mollified(c);
    const double pre = c.lambda * c.lambda * c.D0 / (c.nu0 * c.nu0) / (4.0 * c.d);
    if (pre == 0.0) return {};
    // the symmetrized kernel over t in (-inf, inf) counts each ordering once
    Quad q = refine([&](int l) { return 2.0 * radial_moment(P, m, c.nu0, c.d, 2, kRange, l); });
    return {pre * q.value, pre * q.error};
}

namespace {

// C4 / g^4 in Fourier variables with the covariance transform chat(q)
double c4_fourier(const std::function<double(double)>& chat, double nu, int d, int level)
{
    const double qmax = 80.0;
    auto over_k = [&](double k) {
        if (k <= 0) return 0.0;
        const double a = nu * k * k;
        // theta = a sinh(s) removes the 1/(a^2 + theta^2) peak
        const double smax = std::asinh(qmax / a);
        const double th = integrate_panels(
            [&](double s) {
                const double q = std::hypot(k, a * std::sinh(s));
                const double f = chat(q);
                return f * f / (a * std::cosh(s));
            },
            0.0, smax, 16 * level, 16);
        return 2.0 * th * std::pow(k, d - 1);
    };
    double acc = 0.0;
    // geometric panels near k = 0, where the integrand behaves like k^(d-3)
    double lo = 0.0;
    for (double hi : {1e-3, 1e-2, 0.1, 1.0, 4.0, 16.0, qmax}) {
        acc += integrate_panels(over_k, lo, hi, 4 * level, 16);
        lo = hi;
    }
    return sphere_area(d) * acc / std::pow(2.0 * M_PI, d + 1);
}

} // namespace

DEffResult d_eff_ratio(const SimConfig& c, const Mollifier& m)
{
    require_mollified(c);
    if (c.d < 3) throw std::invalid_argument("the D_eff correction is finite only for d >= 3");
    DEffResult r;
    const double g = coupling(c);
    r.c2 = g * g * m.covariance_integral();
    if (g == 0.0) return r;
    auto omega2 = [&](double q) {
        const double w = m.fourier(q);
        return w * w;
    };
    const double a = c4_fourier(omega2, c.nu0, c.d, 1), b = c4_fourier(omega2, c.nu0, c.d, 2);
    const double g4 = g * g * g * g;
    r.c4 = g4 * b;
    r.c4_error = g4 * std::abs(b - a);
    if (r.c4_error > 1e-6 * r.c4) throw std::runtime_error("C4 quadrature does not converge");

    // Hankel transform of the tabulated covariance in R^(d+1), tabulated once
    const int n = c.d + 1, nq = 1601;
    const double hq = 80.0 / (nq - 1);
    std::vector<double> tab(nq);
    for (int i = 0; i < nq; ++i) {
        const double q = i * hq;
        if (q < 1e-12) {
            tab[i] = sphere_area(n) *
                     integrate_panels([&](double s) { return std::pow(s, n - 1) * m.covariance_radial(s); }, 0, 1, 32, 16);
            continue;
        }
        const double nuj = 0.5 * n - 1.0;
        const double I = integrate_panels(
            [&](double s) { return std::pow(s, 0.5 * n) * std::cyl_bessel_j(nuj, q * s) * m.covariance_radial(s); }, 0.0,
            1.0, 32, 16);
        tab[i] = std::pow(2.0 * M_PI, 0.5 * n) * std::pow(q, 1.0 - 0.5 * n) * I;
    }
    auto hankel = [&](double q) {
        const double u = q / hq;
        const int i = std::min(static_cast<int>(u), nq - 2);
        if (i < 0 || q >= 80.0) return 0.0;
        // cubic Lagrange on the nearest four nodes
        const int j = std::clamp(i - 1, 0, nq - 4);
        double v = 0.0;
        for (int p = 0; p < 4; ++p) {
            double l = 1.0;
            for (int s = 0; s < 4; ++s)
                if (s != p) l *= (u - (j + s)) / double(p - s);
            v += l * tab[j + p];
        }
        return v;
    };
    r.c4_hankel = g4 * c4_fourier(hankel, c.nu0, c.d, 1);
    r.ratio = 1.0 + r.c4 / r.c2;
    r.K = std::abs(r.ratio - 1.0) / (g * g);
    return r;
}

BoundaryReport boundary_decay_check(const SimConfig& c, const ScalePartition& P, const Mollifier& m,
                                    const std::vector<double>& Ts)
{
    require_mollified(c);
    BoundaryReport rep;
    const double g = coupling(c);
    const double full = g * radial_moment(P, m, c.nu0, c.d, 0, kRange, 2);
    std::vector<double> xs, ys;
    double prev = 1e300;
    for (double T : Ts) {
        const double vT = T >= kRange ? full : g * radial_moment(P, m, c.nu0, c.d, 0, T, 2);
        const double diff = std::abs(full - vT);
        rep.rows.push_back({T, vT, diff});
        if (diff > prev) rep.monotone = false;
        prev = diff;
        if (diff > 0) {
            xs.push_back(T);
            ys.push_back(std::log(diff));
        }
    }
    if (xs.size() >= 2) {
        double mx = 0, my = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            mx += xs[i];
            my += ys[i];
        }
        mx /= xs.size();
        my /= xs.size();
        double sxy = 0, sxx = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            sxy += (xs[i] - mx) * (ys[i] - my);
            sxx += (xs[i] - mx) * (xs[i] - mx);
        }
        rep.slope = sxx > 0 ? sxy / sxx : 0.0;
    }
    rep.decays = rep.monotone && rep.slope <= 0.0;
    return rep;
}

RenormConstants renorm_constants(const SimConfig& c, const ScalePartition& P, const Mollifier& m)
{
    RenormConstants r;
    r.g0 = coupling(c);
    r.v0_leading = v0_leading(c, P, m);
    r.v0_fixed_point = v0_fixed_point(c, P, m);
    r.delta_nu = delta_nu(c, P, m, 0);
    r.delta_nu_isotropic = delta_nu_isotropic(c, P, m);
    r.d_eff = c.d >= 3 ? d_eff_ratio(c, m) : DEffResult{};
    return r;
}

} // namespace kpz
