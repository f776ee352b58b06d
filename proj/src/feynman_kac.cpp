#include "kpz/feynman_kac.hpp"
#include "kpz/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>

namespace kpz {

double interpolate_space(const Lattice& lat, std::span<const double> f, std::span<const double> x)
{
    const int d = lat.d;
    std::array<int, 4> base{};
    std::array<double, 4> fr{};
    for (int a = 0; a < d; ++a) {
        const double y = x[a] / lat.dx;
        const double fl = std::floor(y);
        base[a] = static_cast<int>(fl);
        fr[a] = y - fl;
    }
    double s = 0.0;
    for (int corner = 0; corner < (1 << d); ++corner) {
        double w = 1.0;
        std::array<int, 4> cc{};
        for (int a = 0; a < d; ++a) {
            const int bit = (corner >> a) & 1;
            cc[a] = base[a] + bit;
            w *= bit ? fr[a] : 1.0 - fr[a];
        }
        if (w != 0.0) s += w * f[lat.index(cc)];
    }
    return s;
}

namespace {

struct PathRun {
    const NoiseField& noise;
    const SimConfig& c;
    double T;
    long nsteps;
    double dt;
};

PolymerEstimate run_paths(const PathRun& pr, std::span<const double> a, const double* b, long n_paths,
                          const StreamKey& key)
{
    const SimConfig& c = pr.c;
    if (pr.T > pr.noise.horizon() + 1e-9) throw ConfigError("path horizon exceeds the stored noise horizon");
    if (static_cast<int>(a.size()) != c.d) throw ConfigError("start point has the wrong dimension");
    const double g = c.g0();
    const double k = c.lambda / c.nu0;
    const double sig = std::sqrt(2.0 * c.nu0 * pr.dt);
    std::vector<double> wts(n_paths);
    parallel_for(static_cast<std::size_t>(n_paths), [&](std::size_t p) {
        CounterRng rng(key.with_replica(key.replica * 0x100000000ULL + p));
        const int d = c.d;
        const long n = pr.nsteps;
        // W_t on the grid, then the path
        std::vector<double> W((n + 1) * d, 0.0);
        for (long s = 1; s <= n; ++s)
            for (int ax = 0; ax < d; ++ax) W[s * d + ax] = W[(s - 1) * d + ax] + sig * rng.gauss();
        std::array<double, 4> x{};
        double acc = 0.0;
        for (long s = 0; s <= n; ++s) {
            const double t = s * pr.dt;
            for (int ax = 0; ax < d; ++ax) {
                double v = a[ax] + W[s * d + ax];
                if (b) v += -(t / pr.T) * W[n * d + ax] + (t / pr.T) * (b[ax] - a[ax]);
                x[ax] = v;
            }
            const double eta = pr.noise.interpolate(pr.T - t, std::span<const double>(x.data(), d));
            const double wq = (s == 0 || s == n) ? 0.5 : 1.0;
            acc += wq * pr.dt * (eta - c.v0);
        }
        double logw = g * acc;
        if (!b) logw += k * initial_height_at(c, std::span<const double>(x.data(), d));
        wts[p] = std::exp(logw);
    });
    auto me = mean_stderr(wts);
    PolymerEstimate e;
    e.value = me.mean;
    e.stderr_ = me.stderr_;
    e.n_paths = n_paths;
    e.a.assign(a.begin(), a.end());
    if (b) e.b.assign(b, b + c.d);
    e.T = pr.T;
    return e;
}

long path_steps(double T, double dt)
{
    const long n = std::max(1L, std::lround(T / dt));
    return n;
}

} // namespace

PolymerEstimate estimate_w(double T, std::span<const double> a, const NoiseField& noise, const SimConfig& c,
                           long n_paths, const StreamKey& key)
{
    const long n = path_steps(T, c.dt);
    return run_paths({noise, c, T, n, T / n}, a, nullptr, n_paths, key);
}

PolymerEstimate estimate_w_bridge(double T, std::span<const double> a, std::span<const double> b,
                                  const NoiseField& noise, const SimConfig& c, long n_paths, const StreamKey& key)
{
    if (static_cast<int>(b.size()) != c.d) throw ConfigError("end point has the wrong dimension");
    const long n = path_steps(T, c.dt);
    return run_paths({noise, c, T, n, T / n}, a, b.data(), n_paths, key);
}

V0TildeEstimate estimate_v0_tilde(const SimConfig& c, long n_paths, long n_noise, long n_oracle_paths)
{
    if (c.noise != NoiseKind::kick) throw ConfigError("the velocity functional is defined for kick noise");
    const Lattice lat = c.lattice();
    const double g = c.g0();
    const long n = path_steps(1.0, c.dt);
    const double h = 1.0 / n;
    const double sig = std::sqrt(2.0 * c.nu0 * h);
    const int d = c.d;

    // per noise replica: mean over paths of cosh(g X)
    std::vector<double> means(n_noise);
    parallel_for(static_cast<std::size_t>(n_noise), [&](std::size_t r) {
        KickSampler ks(lat, c.dt, StreamKey{c.seed, r, Purpose::kick}.hash(), c.kick_c);
        const auto& field = ks.interval(0);
        CounterRng rng(StreamKey{c.seed, r, Purpose::paths});
        std::vector<double> vals(n_paths);
        std::array<double, 4> x{};
        for (long p = 0; p < n_paths; ++p) {
            for (int ax = 0; ax < d; ++ax) x[ax] = 0.0;
            double acc = 0.0;
            for (long s = 0; s <= n; ++s) {
                if (s > 0)
                    for (int ax = 0; ax < d; ++ax) x[ax] += sig * rng.gauss();
                const double wq = (s == 0 || s == n) ? 0.5 : 1.0;
                acc += wq * h * interpolate_space(lat, field, std::span<const double>(x.data(), d));
            }
            vals[p] = std::cosh(g * acc);
        }
        means[r] = pairwise_sum(vals) / static_cast<double>(n_paths);
    });
    V0TildeEstimate out;
    auto me = mean_stderr(means);
    out.mean_weight = me.mean;
    if (g > 0) {
        out.value = std::log(me.mean) / g;
        out.stderr_ = me.stderr_ / (g * me.mean);
    }

    if (n_oracle_paths > 0) {
        // exact covariance of the interpolated field, averaged over independent paths
        KickSampler ks(lat, c.dt, StreamKey{c.seed, 0, Purpose::kick}.hash(), c.kick_c);
        std::vector<double> vars(n_oracle_paths);
        parallel_for(static_cast<std::size_t>(n_oracle_paths), [&](std::size_t p) {
            CounterRng rng(StreamKey{c.seed, p, Purpose::quadrature});
            std::vector<std::array<int, 4>> base(n + 1);
            std::vector<std::array<double, 4>> fr(n + 1);
            std::array<double, 4> x{};
            for (long s = 0; s <= n; ++s) {
                if (s > 0)
                    for (int ax = 0; ax < d; ++ax) x[ax] += sig * rng.gauss();
                for (int ax = 0; ax < d; ++ax) {
                    const double y = x[ax] / lat.dx;
                    base[s][ax] = static_cast<int>(std::floor(y));
                    fr[s][ax] = y - std::floor(y);
                }
            }
            double v = 0.0;
            for (long s1 = 0; s1 <= n; ++s1)
                for (long s2 = 0; s2 <= n; ++s2) {
                    const double wq = h * h * ((s1 == 0 || s1 == n) ? 0.5 : 1.0) * ((s2 == 0 || s2 == n) ? 0.5 : 1.0);
                    double cv = 0.0;
                    for (int c1 = 0; c1 < (1 << d); ++c1)
                        for (int c2 = 0; c2 < (1 << d); ++c2) {
                            double w = 1.0;
                            std::array<int, 4> off{};
                            for (int ax = 0; ax < d; ++ax) {
                                const int b1 = (c1 >> ax) & 1, b2 = (c2 >> ax) & 1;
                                w *= (b1 ? fr[s1][ax] : 1 - fr[s1][ax]) * (b2 ? fr[s2][ax] : 1 - fr[s2][ax]);
                                off[ax] = base[s1][ax] + b1 - base[s2][ax] - b2;
                            }
                            if (w != 0.0) cv += w * ks.spatial_covariance(off);
                        }
                    v += wq * cv;
                }
            vars[p] = v;
        });
        auto mv = mean_stderr(vars);
        out.cumulant = 0.5 * g * mv.mean;
        out.cumulant_stderr = 0.5 * g * mv.stderr_;
    }
    return out;
}

FeketeReport fekete_diagnostics(const SimConfig& cin, const std::vector<double>& horizons, std::size_t replicas,
                                const Mollifier* moll)
{
    SimConfig c = cin;
    c.v0 = 0.0;
    std::vector<double> hs = horizons;
    std::sort(hs.begin(), hs.end());
    c.T = hs.back();
    c.validate();
    std::unique_ptr<Mollifier> own;
    if (!moll && c.noise == NoiseKind::mollified) {
        own = std::make_unique<Mollifier>(c.d);
        moll = own.get();
    }
    std::map<long, std::size_t> at_step;
    for (std::size_t i = 0; i < hs.size(); ++i) at_step[std::lround(hs[i] / c.dt)] = i;

    std::vector<std::vector<double>> mh(replicas, std::vector<double>(hs.size(), 0.0));
    parallel_for(replicas, [&](std::size_t r) {
        auto src = make_noise(c.noise, moll, c.lattice(), c.dt, noise_key(c, r).hash(), c.kick_c,
                              {c.noise_h, c.noise_ht});
        run_trajectory(c, Equation::kpz, *src, [&](long k, std::span<const double> h) {
            auto it = at_step.find(k);
            if (it == at_step.end()) return;
            std::vector<double> v(h.begin(), h.end());
            mh[r][it->second] = pairwise_sum(v) / static_cast<double>(v.size());
        });
    });

    FeketeReport rep;
    auto column = [&](std::size_t i) {
        std::vector<double> v(replicas);
        for (std::size_t r = 0; r < replicas; ++r) v[r] = mh[r][i];
        return v;
    };
    for (std::size_t i = 0; i < hs.size(); ++i) {
        auto me = mean_stderr(column(i));
        rep.rows.push_back({hs[i], me.mean, me.stderr_});
        if (me.mean < -3.0 * me.stderr_) rep.nonnegative = false;
    }
    auto index_of = [&](double T) -> long {
        for (std::size_t i = 0; i < hs.size(); ++i)
            if (std::abs(hs[i] - T) < 1e-9) return static_cast<long>(i);
        return -1;
    };
    for (std::size_t i = 0; i < hs.size(); ++i)
        for (std::size_t j = i; j < hs.size(); ++j) {
            const long k = index_of(hs[i] + hs[j]);
            if (k < 0) continue;
            std::vector<double> diff(replicas);
            for (std::size_t r = 0; r < replicas; ++r) diff[r] = mh[r][k] - mh[r][i] - mh[r][j];
            auto me = mean_stderr(diff);
            FeketePair p{hs[i], hs[j], me.mean, me.stderr_, me.mean >= -3.0 * me.stderr_};
            rep.superadditive &= p.ok;
            rep.pairs.push_back(p);
        }
    const auto& last = rep.rows.back();
    const double s = std::sqrt(c.D0);
    if (s > 0 && last.T > 0) {
        rep.v_est = last.mean_h / (last.T * s);
        rep.v_est_stderr = last.stderr_ / (last.T * s);
    }
    return rep;
}

} // namespace kpz
