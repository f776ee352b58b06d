#include "kpz/lattice_spde.hpp"
#include "kpz/parallel.hpp"

#include <cmath>
#include <memory>

namespace kpz {

long SimConfig::steps() const { return std::lround(T / dt); }

void SimConfig::validate() const
{
    lattice();
    if (!(nu0 > 0)) throw ConfigError("nu0 must be positive");
    if (!(D0 >= 0)) throw ConfigError("D0 must be non-negative");
    if (!(lambda >= 0)) throw ConfigError("lambda must be non-negative");
    if (!(dt > 0)) throw ConfigError("dt must be positive");
    if (!(T >= 0)) throw ConfigError("T must be non-negative");
    if (dt > dx * dx / (2.0 * d * nu0) * (1 + 1e-12))
        throw ConfigError("unstable time step: dt > dx^2/(2 d nu0)");
    if (h0 != "zero" && h0 != "bump") throw ConfigError("h0 must be zero or bump");
}

Equation parse_equation(const std::string& s)
{
    if (s == "kpz") return Equation::kpz;
    if (s == "ew") return Equation::ew;
    if (s == "she") return Equation::she;
    throw ConfigError("unknown equation '" + s + "'");
}

double LatticeOps::laplacian(std::span<const double> f, std::size_t i) const
{
    const int d = lat_.d;
    const std::size_t* n = nb_.data() + 2 * d * i;
    double s = -2.0 * d * f[i];
    for (int a = 0; a < 2 * d; ++a) s += f[n[a]];
    return s / (lat_.dx * lat_.dx);
}

double LatticeOps::grad2(std::span<const double> f, std::size_t i) const
{
    const int d = lat_.d;
    const std::size_t* n = nb_.data() + 2 * d * i;
    double s = 0.0;
    for (int a = 0; a < d; ++a) {
        const double g = (f[n[2 * a]] - f[n[2 * a + 1]]) / (2.0 * lat_.dx);
        s += g * g;
    }
    return s;
}

namespace {

template <bool Nonlinear>
void advance(const LatticeOps& ops, const SimConfig& c, double v, std::span<const double> h,
             std::span<const double> eta, std::span<double> out)
{
    const std::size_t n = h.size();
    const double sD = std::sqrt(c.D0);
    bool bad = false;
    for (std::size_t i = 0; i < n; ++i) {
        double r = h[i] + c.dt * (c.nu0 * ops.laplacian(h, i) + sD * (eta[i] - v));
        if constexpr (Nonlinear) r += c.dt * c.lambda * ops.grad2(h, i);
        out[i] = r;
        bad |= !std::isfinite(r);
    }
    if (bad) throw StepFailure("non-finite height after step (unstable run)");
}

} // namespace

void step_kpz(const LatticeOps& ops, const SimConfig& c, std::span<const double> h, std::span<const double> eta,
              std::span<double> out)
{
    if (c.lambda != 0.0)
        advance<true>(ops, c, c.v0, h, eta, out);
    else
        advance<false>(ops, c, c.v0, h, eta, out);
}

void step_ew(const LatticeOps& ops, const SimConfig& c, std::span<const double> h, std::span<const double> eta,
             std::span<double> out)
{
    advance<false>(ops, c, 0.0, h, eta, out);
}

void step_she(const LatticeOps& ops, const SimConfig& c, std::span<const double> w, std::span<const double> eta,
              std::span<double> out)
{
    const double g = c.g0();
    const std::size_t n = w.size();
    for (std::size_t i = 0; i < n; ++i)
        if (!(w[i] > 0)) throw std::domain_error("step_she requires a strictly positive field");
    bool bad = false;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = std::exp(c.dt * g * (eta[i] - c.v0)) * (w[i] + c.nu0 * c.dt * ops.laplacian(w, i));
        out[i] = r;
        bad |= !(std::isfinite(r) && r > 0);
    }
    if (bad) throw StepFailure("non-finite or non-positive w after step");
}

std::vector<double> cole_hopf(std::span<const double> h, const SimConfig& c)
{
    const double k = c.lambda / c.nu0;
    std::vector<double> w(h.size());
    for (std::size_t i = 0; i < h.size(); ++i) w[i] = std::exp(k * h[i]);
    return w;
}

std::vector<double> inverse_cole_hopf(std::span<const double> w, const SimConfig& c)
{
    if (!(c.lambda > 0)) throw std::domain_error("inverse Cole-Hopf needs lambda > 0");
    const double k = c.nu0 / c.lambda;
    std::vector<double> h(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (!(w[i] > 0)) throw std::domain_error("inverse Cole-Hopf needs w > 0");
        h[i] = k * std::log(w[i]);
    }
    return h;
}

double initial_height_at(const SimConfig& c, std::span<const double> x)
{
    if (c.h0 == "zero") return 0.0;
    const double side = c.L * c.dx;
    double r2 = 0.0;
    for (int a = 0; a < c.d; ++a) {
        double y = std::fmod(x[a], side);
        if (y < 0) y += side;
        if (y > 0.5 * side) y -= side;
        r2 += y * y;
    }
    return c.h0_amp * std::exp(-r2 / (2.0 * c.h0_width * c.h0_width));
}

std::vector<double> initial_height(const SimConfig& c)
{
    const Lattice lat = c.lattice();
    std::vector<double> h(lat.size(), 0.0);
    if (c.h0 == "zero") return h;
    std::array<double, 4> x{};
    for (std::size_t i = 0; i < h.size(); ++i) {
        auto k = lat.coords(i);
        for (int a = 0; a < lat.d; ++a) x[a] = k[a] * lat.dx;
        h[i] = initial_height_at(c, std::span<const double>(x.data(), lat.d));
    }
    return h;
}

std::vector<double> run_trajectory(const SimConfig& c, Equation eq, NoiseSource& noise, const SliceObserver& obs,
                                   long every)
{
    c.validate();
    const LatticeOps ops(c.lattice());
    const std::size_t n = ops.lattice().size();
    std::vector<double> f = initial_height(c);
    if (eq == Equation::she) f = cole_hopf(f, c);
    std::vector<double> nxt(n), eta(n);
    const long ns = c.steps();
    if (obs) obs(0, f);
    for (long k = 0; k < ns; ++k) {
        noise.fill(k, eta);
        switch (eq) {
        case Equation::kpz: step_kpz(ops, c, f, eta, nxt); break;
        case Equation::ew: step_ew(ops, c, f, eta, nxt); break;
        case Equation::she: step_she(ops, c, f, eta, nxt); break;
        }
        f.swap(nxt);
        if (obs && ((k + 1) % every == 0 || k + 1 == ns)) obs(k + 1, f);
    }
    return f;
}

StreamKey noise_key(const SimConfig& c, std::uint64_t replica) { return StreamKey{c.seed, replica, Purpose::noise}; }

std::vector<double> run_replicas(const SimConfig& c, Equation eq, std::size_t n,
                                 const std::function<double(std::size_t, std::span<const double>)>& f,
                                 const Mollifier* moll)
{
    std::unique_ptr<Mollifier> own;
    if (!moll && c.noise == NoiseKind::mollified) {
        own = std::make_unique<Mollifier>(c.d);
        moll = own.get();
    }
    std::vector<double> out(n);
    parallel_for(n, [&](std::size_t r) {
        auto src = make_noise(c.noise, moll, c.lattice(), c.dt, noise_key(c, r).hash(), c.kick_c,
                              {c.noise_h, c.noise_ht});
        auto fin = run_trajectory(c, eq, *src);
        out[r] = f(r, fin);
    });
    return out;
}

} // namespace kpz
