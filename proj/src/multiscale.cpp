#include "kpz/multiscale.hpp"
#include "kpz/quadrature.hpp"

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>

#include <algorithm>
#include <cmath>
#include <functional>

namespace kpz {

using Spline = boost::math::interpolators::cardinal_cubic_b_spline<double>;

double smooth_step(double u)
{
    if (u <= 0.0) return 0.0;
    if (u >= 1.0) return 1.0;
    const double a = std::exp(-1.0 / u), b = std::exp(-1.0 / (1.0 - u));
    return a / (a + b);
}

namespace {

// cutoff shapes: chi0 = 1 on [0, 1.25], 0 from 2 on; chi rises on [1/2, 0.6], falls on [1.85, 2]
constexpr double kChi0Flat = 1.25, kChi0Fall = 0.75;
constexpr double kRise = 0.1, kFall = 0.15;

double chi0_shape(double t) { return t < 0.0 ? 0.0 : smooth_step((kChi0Flat + kChi0Fall - t) / kChi0Fall); }
double chi_shape(double u) { return smooth_step((u - 0.5) / kRise) * smooth_step((2.0 - u) / kFall); }

double self_convolution(const std::function<double(double)>& f, double lo, double hi, double tau)
{
    // int f(s) f(tau - s) ds over s in [lo, hi] intersect [tau - hi, tau - lo]
    const double a = std::max(lo, tau - hi), b = std::min(hi, tau - lo);
    if (b <= a) return 0.0;
    return integrate_panels([&](double s) { return f(s) * f(tau - s); }, a, b, 24, 16);
}

} // namespace

struct ScalePartition::Tables {
    Spline c0;   // chi0*chi0 on [0, 4]
    Spline cchi; // chi*chi on [1, 4]
};

ScalePartition::ScalePartition(int jmax) : jmax_(jmax)
{
    if (jmax < 1) throw std::invalid_argument("partition needs jmax >= 1");
    const int n = 6001;
    const double h = 4.0 / (n - 1);
    std::vector<double> c0(n), cc(n);
    const double hc = 3.0 / (n - 1);
    for (int i = 0; i < n; ++i) {
        c0[i] = self_convolution(chi0_shape, 0.0, 2.0, i * h);
        cc[i] = self_convolution(chi_shape, 0.5, 2.0, 1.0 + i * hc);
    }
    tab_ = std::make_shared<const Tables>(Tables{Spline(c0.begin(), c0.end(), 0.0, h, 1.0),
                                                 Spline(cc.begin(), cc.end(), 1.0, hc, 0.0, 0.0)});
    for (double t = 0.5; t <= covered_max(); t *= 1.01)
        if (!(S(t) > 0)) throw std::runtime_error("partition normalization vanishes");
}

double ScalePartition::chi0(double t) const { return chi0_shape(t); }
double ScalePartition::chi(double u) const { return chi_shape(u); }
double ScalePartition::chi_j(int j, double tau) const { return j == 0 ? chi0(tau) : chi(std::ldexp(tau, -j)); }

double ScalePartition::profile(int j, double tau) const
{
    if (tau <= 0.0 || j < 0 || j > jmax_) return 0.0;
    if (j == 0) {
        if (tau >= 4.0) return 0.0;
        if (tau <= kChi0Flat) return tau;
        return tab_->c0(tau);
    }
    const double u = std::ldexp(tau, -j);
    if (u <= 1.0 || u >= 4.0) return 0.0;
    return tab_->cchi(u);
}

double ScalePartition::S(double tau) const
{
    double s = 0.0;
    for (int j = 0; j <= jmax_; ++j) s += profile(j, tau);
    return s;
}

double ScalePartition::weight(int j, double tau) const
{
    const double p = profile(j, tau);
    if (p == 0.0) return 0.0;
    return p / S(tau);
}

double heat_kernel(double nu, int d, double tau, double r)
{
    if (tau <= 0.0) return 0.0;
    return std::pow(4.0 * M_PI * nu * tau, -0.5 * d) * std::exp(-r * r / (4.0 * nu * tau));
}

double ScalePartition::A(int j, double nu, int d, double tau, double r) const
{
    if (tau <= 0.0) return 0.0;
    const double pre = j == 0 ? 1.0 : std::exp2(-0.5 * j);
    return pre * chi_j(j, tau) * heat_kernel(nu, d, tau, r);
}

double ScalePartition::G(int j, double nu, int d, double tau, double r) const
{
    return weight(j, tau) * heat_kernel(nu, d, tau, r);
}

double ScalePartition::G_hat(int j, double nu, double tau, double k) const
{
    if (tau <= 0.0) return 0.0;
    return weight(j, tau) * std::exp(-nu * tau * k * k);
}

ScalePartition::Table ScalePartition::tabulate(int n_tau, const std::vector<double>& ks, double nu) const
{
    Table t;
    const double lo = covered_min(), hi = covered_max();
    t.s_min = 1e300;
    t.s_max = 0.0;
    for (int i = 0; i < n_tau; ++i) {
        const double tau = lo * std::pow(hi / lo, i / double(n_tau - 1));
        const double s = S(tau);
        t.tau.push_back(tau);
        t.S.push_back(s);
        t.s_min = std::min(t.s_min, s);
        t.s_max = std::max(t.s_max, s);
    }
    // reconstruction on a grid reaching below the covered range
    for (int i = 0; i < n_tau; ++i) {
        const double tau = 1e-3 * std::pow(hi / 1e-3, i / double(n_tau - 1));
        for (double k : ks) {
            double sum = 0.0;
            for (int j = 0; j <= jmax_; ++j) sum += G_hat(j, nu, tau, k);
            t.max_reconstruction_error = std::max(t.max_reconstruction_error, std::abs(sum - std::exp(-nu * tau * k * k)));
        }
    }
    return t;
}

// ---------------------------------------------------------------- Gaussian derivatives

namespace {

double hermite(int k, double z)
{
    double a = 1.0, b = z;
    if (k == 0) return a;
    for (int n = 1; n < k; ++n) {
        const double c = z * b - n * a;
        a = b;
        b = c;
    }
    return b;
}

double gauss_1d(double s2, double x) { return std::exp(-x * x / (2.0 * s2)) / std::sqrt(2.0 * M_PI * s2); }

// signed k-th derivative of the 1D Gaussian of variance s2
double gauss_deriv_signed(int k, double s2, double x)
{
    const double s = std::sqrt(s2);
    return ((k % 2) ? -1.0 : 1.0) * hermite(k, x / s) * std::pow(s, -k) * gauss_1d(s2, x);
}

// int |g_{s1}^{(a)}(x - y)| |g_{s2}^{(b)}(y)| dy
double conv_abs(int a, int b, double s1, double s2, double x)
{
    const double r1 = 9.0 * std::sqrt(s1), r2 = 9.0 * std::sqrt(s2);
    const double lo = std::max(x - r1, -r2), hi = std::min(x + r1, r2);
    if (hi <= lo) return 0.0;
    return integrate_panels(
        [&](double y) { return std::abs(gauss_deriv_signed(a, s1, x - y)) * std::abs(gauss_deriv_signed(b, s2, y)); },
        lo, hi, 32, 12);
}

} // namespace

double gauss_deriv_1d(int k, double s2, double x) { return std::abs(gauss_deriv_signed(k, s2, x)); }

ScaleReport check_single_scale(const ScalePartition& P, int j, int kt, int kx, int d, double nu)
{
    if (j < 1 || j > P.jmax()) throw std::invalid_argument("scale index out of range");
    if (kt < 0 || kx < 0 || kt + kx > 3) throw std::invalid_argument("derivative order must be <= 3");
    if (kt > 1) throw std::invalid_argument("time derivative order must be <= 1");
    ScaleReport r;
    r.j = j;
    r.kt = kt;
    r.kx = kx;
    const double pre = std::exp2(-0.5 * j);
    const double t0 = std::ldexp(1.0, j - 1), t1 = std::ldexp(1.0, j + 1);
    r.mass = pre * integrate_panels([&](double t) { return P.chi_j(j, t); }, t0, t1, 32, 16);
    r.mass_constant = r.mass / std::exp2(0.5 * j);

    const int nu_pts = 241, nz = 241;
    double sup = 0.0;
    for (int iu = 0; iu < nu_pts; ++iu) {
        const double u = 0.5 + 1.5 * iu / (nu_pts - 1);
        const double tau = std::ldexp(u, j);
        const double s2 = 2.0 * nu * tau;
        const double c = P.chi(u);
        const double dc = (P.chi(u + 1e-6) - P.chi(u - 1e-6)) / 2e-6;
        const double g0 = gauss_1d(s2, 0.0);
        const double perp = std::pow(g0, d - 1);
        for (int iz = 0; iz < nz; ++iz) {
            const double x = 6.0 * std::sqrt(s2) * iz / (nz - 1);
            double v;
            if (kt == 0) {
                v = c * gauss_deriv_signed(kx, s2, x) * perp;
            } else {
                const double dp = gauss_deriv_signed(kx, s2, x) * perp;
                const double dtp = nu * (gauss_deriv_signed(kx + 2, s2, x) * perp +
                                         (d - 1) * gauss_deriv_signed(kx, s2, x) * gauss_deriv_signed(2, s2, 0.0) *
                                             std::pow(g0, d - 2));
                v = std::ldexp(dc, -j) * dp + c * dtp;
            }
            sup = std::max(sup, pre * std::abs(v));
        }
    }
    r.sup = sup;
    r.sup_constant = sup / (std::exp2(-0.5 * j * (2 * kt + kx)) * std::exp2(-0.5 * j * (d + 1)));
    return r;
}

TwoScaleReport check_two_scale(const ScalePartition& P, int j, int k1, int k2, int d, double nu)
{
    if (j < 1 || j > P.jmax()) throw std::invalid_argument("scale index out of range");
    TwoScaleReport r;
    r.j = j;
    const double lo = std::ldexp(1.0, j - 1), hi = std::ldexp(1.0, j + 1);
    double sup = 0.0;
    const int nt = 25, nz = 13;
    for (int it = 0; it < nt; ++it) {
        const double tau = std::ldexp(1.0 + 3.0 * it / (nt - 1), j);
        const double a = std::max(lo, tau - hi), b = std::min(hi, tau - lo);
        if (b <= a) continue;
        const double perp = std::pow(gauss_1d(2.0 * nu * tau, 0.0), d - 1);
        for (int iz = 0; iz < nz; ++iz) {
            const double x = 4.0 * std::sqrt(2.0 * nu * tau) * iz / (nz - 1);
            const double v = integrate_gl(
                [&](double s) {
                    return P.chi_j(j, tau - s) * P.chi_j(j, s) *
                           conv_abs(k1, k2, 2.0 * nu * (tau - s), 2.0 * nu * s, x);
                },
                a, b, 24);
            sup = std::max(sup, std::exp2(-double(j)) * v * perp);
        }
    }
    r.sup = sup;
    r.constant = sup / (std::exp2(-0.5 * j * (k1 + k2)) * std::exp2(-0.5 * j * d));
    return r;
}

namespace {

// least squares slope/intercept and R^2
std::array<double, 3> linfit(const std::vector<double>& x, const std::vector<double>& y)
{
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
        syy += y[i] * y[i];
    }
    const double b = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    const double a = (sy - b * sx) / n;
    const double ssr = syy - a * sy - b * sxy;
    const double sst = syy - sy * sy / n;
    return {b, a, 1.0 - ssr / sst};
}

} // namespace

PW1Report check_pw1(const ScalePartition& P, const std::vector<int>& js, int d, double nu, bool divergent)
{
    PW1Report rep;
    for (int j : js) {
        if (j < 1 || j + 2 > P.jmax()) throw std::invalid_argument("scale outside the interior of the partition");
        const double slo = P.support_lo(j), shi = P.support_hi(j);
        double best = 0.0;
        const int nt = 24, nz = 16;
        for (int it = 0; it < nt; ++it) {
            const double t = slo * std::pow(64.0, it / double(nt - 1)) * 1.0001;
            const double b = std::min(t, shi);
            for (int iz = 0; iz < nz; ++iz) {
                const double x = 5.0 * std::sqrt(2.0 * nu * t) * iz / (nz - 1);
                const double q = integrate_panels(
                    [&](double s) {
                        return P.weight(j, s) * conv_abs(3, 0, 2.0 * nu * s, 2.0 * nu * (t - s), x);
                    },
                    slo, b, 4, 12);
                // transverse factors: heat kernel at nu t over the bound at 2 nu t
                const double perp = std::pow(gauss_1d(2.0 * nu * t, 0.0) / gauss_1d(4.0 * nu * t, 0.0), d - 1);
                const double bound = std::exp2(-0.5 * j) * gauss_1d(4.0 * nu * t, x);
                best = std::max(best, q * perp / bound);
            }
        }
        rep.rows.push_back({j, best});
    }
    double mn = 1e300, mx = 0;
    for (auto& r : rep.rows) {
        mn = std::min(mn, r.constant);
        mx = std::max(mx, r.constant);
    }
    rep.spread = rep.rows.empty() ? 0.0 : mx / mn;

    if (divergent) {
        auto ratio = [&](int kappa, double t) {
            // int (1 - w0) |d^kappa p| * p over s, at x = 0, relative to p_{nu t}(0)
            double acc = 0.0;
            for (double a = 1.0; a < t; a *= 2.0) {
                const double b = std::min(2.0 * a, t);
                acc += integrate_gl(
                    [&](double s) {
                        return P.weight_ir(s) * conv_abs(kappa, 0, 2.0 * nu * s, 2.0 * nu * (t - s), 0.0);
                    },
                    a, b, 16);
            }
            return acc / gauss_1d(2.0 * nu * t, 0.0);
        };
        std::vector<double> lt, l0, v2;
        for (int i = 0; i <= 14; ++i) {
            const double t = std::exp2(5.0 + 0.5 * i);
            if (t > P.covered_max()) break;
            const double r0 = ratio(0, t), r2 = ratio(2, t);
            rep.kappa0.push_back({t, r0});
            rep.kappa2.push_back({t, r2});
            lt.push_back(std::log(t));
            l0.push_back(std::log(r0));
            v2.push_back(r2);
        }
        if (lt.size() >= 3) {
            rep.kappa0_exponent = linfit(lt, l0)[0];
            auto f2 = linfit(lt, v2);
            rep.kappa2_log_slope = f2[0];
            rep.kappa2_r2 = f2[2];
        }
    }
    return rep;
}

PW2Result check_pw2(int d, int j1, int j2)
{
    if (j1 < 1) throw std::invalid_argument("scale index j1 must be >= 1");
    if (j1 > j2) throw std::invalid_argument("scale indices must satisfy j1 <= j2");
    if (d < 3) throw std::invalid_argument("dimension must be >= 3");
    PW2Result r;
    r.margin = j2 * (1.0 + 0.5 * d) - 1.25 * (j1 + j2);
    r.holds = r.margin >= 0.0;
    return r;
}

GradientBoundReport gradient_bound_check(double nu, double lambda, const std::array<int, 4>& kappa, int d, int grid,
                                         bool shift)
{
    int order = 0;
    for (int a = 0; a < d; ++a) order += kappa[a];
    if (order > 4) throw std::invalid_argument("derivative order must be <= 4");
    GradientBoundReport rep;
    const double nup = shift ? nu * (1.0 + lambda * lambda) : nu;
    rep.nu_shift = nup - nu;
    const double damp = 1.0 - nu / nup; // Gaussian rate left after the ratio
    const double zmax = damp > 0 ? 8.0 / std::sqrt(damp) : 8.0 / std::max(lambda, 1e-3);
    const double pre = std::pow(lambda, order) * std::exp2(-0.5 * order) / (order > 0 ? std::tgamma(0.5 * order) : 1.0) *
                       std::pow(nup / nu, 0.5 * d);
    auto sup_for = [&](int n, double zm) {
        double R = pre;
        for (int a = 0; a < d; ++a) {
            double best = 0.0;
            for (int i = 0; i < n; ++i) {
                const double z = zm * i / (n - 1);
                best = std::max(best, std::abs(hermite(kappa[a], z)) * std::exp(-0.5 * damp * z * z));
            }
            R *= best;
        }
        return std::pow(R, 1.0 / (order + 1));
    };
    rep.C = sup_for(grid, zmax);
    rep.C_refined = sup_for(2 * grid - 1, zmax);
    rep.C_extended = sup_for(2 * grid - 1, 2.0 * zmax);
    rep.bounded = std::abs(rep.C_extended - rep.C) <= 1e-3 * rep.C + 0.1 * std::abs(rep.C_refined - rep.C);
    return rep;
}

// ---------------------------------------------------------------- effective propagator

double radial_bump_fourier(int dim, double radius, double q)
{
    auto b = [&](double r) {
        const double u = 1.0 - r * r / (radius * radius);
        return u > 0 ? std::exp(-1.0 / u) : 0.0;
    };
    const double mass =
        sphere_area(dim) * integrate_panels([&](double r) { return std::pow(r, dim - 1) * b(r); }, 0.0, radius, 8, 24);
    if (q < 1e-10) return 1.0;
    const double nuj = 0.5 * dim - 1.0;
    const double I = integrate_panels(
        [&](double r) { return std::pow(r, 0.5 * dim) * std::cyl_bessel_j(nuj, q * r) * b(r); }, 0.0, radius, 16, 24);
    return std::pow(2.0 * M_PI, 0.5 * dim) * std::pow(q, 1.0 - 0.5 * dim) * I / mass;
}

EffectivePropagator::EffectivePropagator(const ScalePartition& P, double nu, double dnu, int d, PropagatorMode mode,
                                         double h)
    : P_(P), nu_(nu), dnu_(dnu), d_(d), mode_(mode), h_(h)
{
    if (std::abs(dnu) >= 0.25 * nu) throw std::invalid_argument("viscosity shift must satisfy |dnu| < nu/4");
}

double EffectivePropagator::multiplier(double k) const { return -k * k * radial_bump_fourier(d_, 1.0, k); }

double EffectivePropagator::fourier_closed(double tau, double k) const
{
    if (tau <= 0.0) return 0.0;
    switch (mode_) {
    case PropagatorMode::eff: return std::exp(-(nu_ + dnu_) * k * k * tau);
    case PropagatorMode::one_eff: return std::exp(-nu_ * k * k * tau + dnu_ * multiplier(k) * tau);
    case PropagatorMode::tilde: break;
    }
    throw std::logic_error("no closed form for this propagator");
}

double EffectivePropagator::fourier(double tau, double k) const
{
    if (tau <= 0.0) return 0.0;
    if (mode_ == PropagatorMode::eff) return fourier_closed(tau, k);
    // G = e^{-nu k^2 tau} phi(tau); convolutions of such kernels act on phi alone
    const int n = std::max(1, static_cast<int>(std::ceil(tau / h_)));
    const double hh = tau / n;
    std::vector<double> base(n + 1);
    for (int i = 0; i <= n; ++i) base[i] = mode_ == PropagatorMode::tilde ? P_.weight_ir(i * hh) : 1.0;
    const double c = dnu_ * multiplier(k) * hh;
    std::vector<double> term = base, total = base, next(n + 1);
    last_terms_ = 1;
    if (c == 0.0) return total[n] * std::exp(-nu_ * k * k * tau);
    double prev_sup = 0.0;
    for (double v : term) prev_sup = std::max(prev_sup, std::abs(v));
    for (int it = 0; it < 400; ++it) {
        double sup = 0.0, tot = 0.0;
        for (int i = 0; i <= n; ++i) {
            double s = 0.0;
            if (i > 0) {
                s = 0.5 * (base[i] * term[0] + base[0] * term[i]);
                for (int l = 1; l < i; ++l) s += base[i - l] * term[l];
            }
            next[i] = c * s;
            sup = std::max(sup, std::abs(next[i]));
        }
        for (int i = 0; i <= n; ++i) {
            total[i] += next[i];
            tot = std::max(tot, std::abs(total[i]));
        }
        term.swap(next);
        ++last_terms_;
        if (sup <= 1e-10 * tot) return total[n] * std::exp(-nu_ * k * k * tau);
        if (it > 20 && sup >= prev_sup) throw std::runtime_error("propagator series does not converge");
        prev_sup = sup;
    }
    throw std::runtime_error("propagator series does not converge");
}

double EffectivePropagator::value(double tau, double r) const
{
    if (tau <= 0.0) return 0.0;
    const double kmax = 12.0 / std::sqrt(nu_ * tau);
    const double nuj = 0.5 * d_ - 1.0;
    auto f = [&](double k) {
        double kern;
        if (r < 1e-12)
            kern = std::pow(k, d_ - 1) * sphere_area(d_) / std::pow(2.0 * M_PI, d_);
        else
            kern = std::pow(2.0 * M_PI, -0.5 * d_) * std::pow(r, -nuj) * std::pow(k, 0.5 * d_) * std::cyl_bessel_j(nuj, k * r);
        return kern * fourier(tau, k);
    };
    return integrate_panels(f, 0.0, kmax, 6, 24);
}

// ---------------------------------------------------------------- vertex series

NeumannResult vertex_neumann(NoiseSource& noise, const SimConfig& c, int N)
{
    if (N < 0 || N > 8) throw std::invalid_argument("Neumann order must be in 0..8");
    c.validate();
    const LatticeOps ops(c.lattice());
    const std::size_t ns = ops.lattice().size();
    const double g = c.g0();
    std::vector<std::vector<double>> u(N + 1, std::vector<double>(ns, 0.0));
    u[0] = cole_hopf(initial_height(c), c);
    std::vector<double> eta(ns);
    std::vector<std::vector<double>> hu(N + 1, std::vector<double>(ns));
    const long steps = c.steps();
    for (long k = 0; k < steps; ++k) {
        noise.fill(k, eta);
        // same step as the lattice SHE: exp(a) times the heat step, expanded order by order in g
        for (int n = 0; n <= N; ++n)
            for (std::size_t i = 0; i < ns; ++i) hu[n][i] = u[n][i] + c.nu0 * c.dt * ops.laplacian(u[n], i);
        for (std::size_t i = 0; i < ns; ++i) {
            const double a = c.dt * g * (eta[i] - c.v0);
            for (int n = N; n >= 0; --n) {
                double acc = 0.0, p = 1.0;
                for (int m = 0; m <= n; ++m) {
                    acc += p * hu[n - m][i];
                    p *= a / (m + 1);
                }
                u[n][i] = acc;
            }
        }
    }
    NeumannResult r;
    r.w.assign(ns, 0.0);
    std::vector<double> sups(N + 1, 0.0);
    for (int n = 0; n <= N; ++n)
        for (std::size_t i = 0; i < ns; ++i) {
            r.w[i] += u[n][i];
            sups[n] = std::max(sups[n], std::abs(u[n][i]));
        }
    for (int n = 1; n <= N; ++n) {
        const double ratio = sups[n - 1] > 0 ? sups[n] / sups[n - 1] : 0.0;
        r.ratios.push_back(ratio);
        if (ratio >= 1.0) throw std::runtime_error("vertex series diverges (term ratio >= 1)");
    }
    r.truncation = N > 0 ? sups[N] : 0.0;
    return r;
}

} // namespace kpz
