#include "kpz/scaling.hpp"
#include "kpz/noise.hpp"
#include "kpz/rng.hpp"

#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <set>
#include <stdexcept>

namespace kpz {

namespace {

// k . n for mode k and displacement n, in radians
double phase(const Lattice& lat, const std::array<int, 4>& k, const std::array<int, 4>& n)
{
    long s = 0;
    for (int a = 0; a < lat.d; ++a) s += static_cast<long>(k[a]) * n[a];
    return 2.0 * M_PI * static_cast<double>(s % lat.L) / lat.L;
}

std::array<int, 4> displacement(const Lattice& lat, std::size_t i1, std::size_t i2)
{
    auto a = lat.coords(i1), b = lat.coords(i2);
    std::array<int, 4> n{};
    for (int k = 0; k < lat.d; ++k) n[k] = a[k] - b[k];
    return n;
}

std::array<int, 4> site_coords(const Lattice& lat, const std::array<double, 4>& x)
{
    std::array<int, 4> n{};
    for (int a = 0; a < lat.d; ++a) {
        const double u = x[a] / lat.dx;
        const long r = std::lround(u);
        if (std::abs(u - r) > 1e-9 * std::max(1.0, std::abs(u)))
            throw ConfigError("point is not on the lattice");
        n[a] = static_cast<int>(((r % lat.L) + lat.L) % lat.L);
    }
    return n;
}

// shift[s] = site s translated by delta
std::vector<std::size_t> shift_table(const Lattice& lat, const std::array<int, 4>& delta)
{
    std::vector<std::size_t> t(lat.size());
    for (std::size_t s = 0; s < t.size(); ++s) {
        auto c = lat.coords(s);
        for (int a = 0; a < lat.d; ++a) c[a] += delta[a];
        t[s] = lat.index(c);
    }
    return t;
}

MeanErr jackknife(const std::vector<double>& P, const std::vector<double>& A, const std::vector<double>& B)
{
    // naive connected moment mean(P) - mean(A) mean(B) with leave-one-out errors
    const std::size_t n = P.size();
    const double sp = pairwise_sum(P), sa = pairwise_sum(A), sb = pairwise_sum(B);
    const double full = sp / n - (sa / n) * (sb / n);
    std::vector<double> loo(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double m = n - 1.0;
        loo[i] = (sp - P[i]) / m - ((sa - A[i]) / m) * ((sb - B[i]) / m);
    }
    const double mean = pairwise_sum(loo) / n;
    double v = 0.0;
    for (double x : loo) v += (x - mean) * (x - mean);
    MeanErr r;
    r.mean = full;
    r.stderr_ = std::sqrt((n - 1.0) / n * v);
    r.n = n;
    r.sd = r.stderr_ * std::sqrt(double(n));
    return r;
}

struct ResolvedPair {
    std::size_t step_p, step_q; // indices into the snapshot list
    std::size_t site_p, site_q;
    std::vector<std::size_t> shift; // translation table from p to q, empty without translation
};

// KPZ, EW and the first-order KPZ correction u (du = nu Lap u + lambda |grad e|^2 - sqrt(D) v, e the EW field)
// at the requested steps, all driven by one noise realization
std::array<std::vector<std::vector<double>>, 3> shared_snapshots(const SimConfig& c, const std::vector<long>& steps,
                                                                 std::uint64_t replica, const Mollifier* m)
{
    c.validate();
    const LatticeOps ops(c.lattice());
    const std::size_t n = ops.lattice().size();
    auto src = make_noise(c.noise, m, c.lattice(), c.dt, noise_key(c, replica).hash(), c.kick_c, {c.noise_h, c.noise_ht});
    std::vector<double> h = initial_height(c), e = h, u(n, 0.0), nh(n), ne(n), nu(n), eta(n);
    std::array<std::vector<std::vector<double>>, 3> out;
    for (auto& o : out) o.resize(steps.size());
    auto keep = [&](long k) {
        for (std::size_t i = 0; i < steps.size(); ++i)
            if (steps[i] == k) {
                out[0][i] = h;
                out[1][i] = e;
                out[2][i] = u;
            }
    };
    keep(0);
    const double drift = std::sqrt(c.D0) * c.v0;
    const long last = steps.empty() ? 0 : *std::max_element(steps.begin(), steps.end());
    for (long k = 0; k < last; ++k) {
        src->fill(k, eta);
        step_kpz(ops, c, h, eta, nh);
        step_ew(ops, c, e, eta, ne);
        for (std::size_t i = 0; i < n; ++i)
            nu[i] = u[i] + c.dt * (c.nu0 * ops.laplacian(u, i) + c.lambda * ops.grad2(e, i) - drift);
        h.swap(nh);
        e.swap(ne);
        u.swap(nu);
        keep(k + 1);
    }
    return out;
}

std::vector<TwoPointEstimate> estimate_sets(const SimConfig& c, const std::vector<double>& epsilons,
                                            const std::vector<std::vector<PointPair>>& sets, std::size_t replicas,
                                            const Mollifier* m, const EstimatorOptions& o)
{
    if (replicas < 4 || replicas % 2) throw ConfigError("replicas must be even and at least 4");
    const Lattice lat = c.lattice();
    std::set<long> step_set;
    std::vector<std::vector<std::pair<LatticePoint, LatticePoint>>> located(sets.size());
    for (std::size_t e = 0; e < sets.size(); ++e)
        for (auto& pr : sets[e]) {
            auto a = locate(c, pr.p), b = locate(c, pr.q);
            step_set.insert(a.step);
            step_set.insert(b.step);
            located[e].push_back({a, b});
        }
    const std::vector<long> steps(step_set.begin(), step_set.end());
    auto step_index = [&](long s) { return static_cast<std::size_t>(std::lower_bound(steps.begin(), steps.end(), s) - steps.begin()); };
    std::vector<std::vector<ResolvedPair>> res(sets.size());
    for (std::size_t e = 0; e < sets.size(); ++e)
        for (auto& [a, b] : located[e]) {
            ResolvedPair r{step_index(a.step), step_index(b.step), a.site, b.site, {}};
            if (o.translate) r.shift = shift_table(lat, displacement(lat, b.site, a.site));
            res[e].push_back(std::move(r));
        }

    const std::size_t npairs = replicas / 2, N = lat.size();
    // per replica pair: [set][pair] -> difference estimate; per replica: product and two means
    std::vector<std::vector<std::vector<double>>> diff(npairs), prod(replicas), ma(replicas), mb(replicas);
    parallel_for(npairs, [&](std::size_t r) {
        std::vector<std::vector<double>> A, B, EA, EB;
        if (o.control) {
            auto sa = shared_snapshots(c, steps, o.replica_offset + 2 * r, m);
            auto sb = shared_snapshots(c, steps, o.replica_offset + 2 * r + 1, m);
            // the first-order term would need a cross-covariance oracle; two-point uses EW only
            A = std::move(sa[0]);
            EA = std::move(sa[1]);
            B = std::move(sb[0]);
            EB = std::move(sb[1]);
        } else {
            A = snapshots(c, Equation::kpz, steps, o.replica_offset + 2 * r, m);
            B = snapshots(c, Equation::kpz, steps, o.replica_offset + 2 * r + 1, m);
        }
        if (o.center)
            for (auto* F : {&A, &B, &EA, &EB})
                for (auto& f : *F) {
                    const double mean = pairwise_sum(f) / f.size();
                    for (double& v : f) v -= mean;
                }
        diff[r].resize(sets.size());
        for (std::size_t side = 0; side < 2; ++side) {
            const std::size_t rep = 2 * r + side;
            prod[rep].resize(sets.size());
            ma[rep].resize(sets.size());
            mb[rep].resize(sets.size());
        }
        for (std::size_t e = 0; e < sets.size(); ++e) {
            for (auto& rp : res[e]) {
                const auto& ap = A[rp.step_p];
                const auto& aq = A[rp.step_q];
                const auto& bp = B[rp.step_p];
                const auto& bq = B[rp.step_q];
                double d = 0.0, pa = 0.0, pb = 0.0, sa1 = 0.0, sa2 = 0.0, sb1 = 0.0, sb2 = 0.0;
                if (o.translate) {
                    for (std::size_t s = 0; s < N; ++s) {
                        const std::size_t t = rp.shift[s];
                        d += (ap[s] - bp[s]) * (aq[t] - bq[t]);
                        pa += ap[s] * aq[t];
                        pb += bp[s] * bq[t];
                        sa1 += ap[s];
                        sa2 += aq[t];
                        sb1 += bp[s];
                        sb2 += bq[t];
                    }
                    const double inv = 1.0 / N;
                    d *= inv, pa *= inv, pb *= inv, sa1 *= inv, sa2 *= inv, sb1 *= inv, sb2 *= inv;
                } else {
                    const std::size_t s = rp.site_p, t = rp.site_q;
                    d = (ap[s] - bp[s]) * (aq[t] - bq[t]);
                    pa = ap[s] * aq[t];
                    pb = bp[s] * bq[t];
                    sa1 = ap[s], sa2 = aq[t], sb1 = bp[s], sb2 = bq[t];
                }
                if (o.control) {
                    const auto& eap = EA[rp.step_p];
                    const auto& eaq = EA[rp.step_q];
                    const auto& ebp = EB[rp.step_p];
                    const auto& ebq = EB[rp.step_q];
                    double de = 0.0;
                    if (o.translate) {
                        for (std::size_t s = 0; s < N; ++s) {
                            const std::size_t t = rp.shift[s];
                            de += (eap[s] - ebp[s]) * (eaq[t] - ebq[t]);
                        }
                        de /= N;
                    } else {
                        de = (eap[rp.site_p] - ebp[rp.site_p]) * (eaq[rp.site_q] - ebq[rp.site_q]);
                    }
                    d -= de;
                }
                diff[r][e].push_back(0.5 * d);
                prod[2 * r][e].push_back(pa);
                prod[2 * r + 1][e].push_back(pb);
                ma[2 * r][e].push_back(sa1);
                mb[2 * r][e].push_back(sa2);
                ma[2 * r + 1][e].push_back(sb1);
                mb[2 * r + 1][e].push_back(sb2);
            }
        }
    });

    std::vector<TwoPointEstimate> out(sets.size());
    for (std::size_t e = 0; e < sets.size(); ++e) {
        auto& est = out[e];
        est.epsilon = epsilons[e];
        est.pairs = sets[e];
        est.replicas = replicas;
        est.centered = o.center;
        for (std::size_t p = 0; p < sets[e].size(); ++p) {
            std::vector<double> v(npairs), P(replicas), A(replicas), B(replicas);
            for (std::size_t r = 0; r < npairs; ++r) v[r] = diff[r][e][p];
            for (std::size_t r = 0; r < replicas; ++r) {
                P[r] = prod[r][e][p];
                A[r] = ma[r][e][p];
                B[r] = mb[r][e][p];
            }
            MeanErr me = mean_stderr(v);
            if (o.control) {
                const auto a = locate(c, sets[e][p].p), b = locate(c, sets[e][p].q);
                me.mean += o.control->covariance(a.step, a.site, b.step, b.site, o.center);
            }
            est.value.push_back(me);
            est.naive.push_back(jackknife(P, A, B));
        }
    }
    return out;
}

} // namespace

double ew_covariance_analytic(double nu, double D, const PointPair& pr, const Lattice& lat, bool drop_zero_mode)
{
    STPoint a = pr.p, b = pr.q;
    if (a.t < b.t) std::swap(a, b);
    if (b.t <= 0.0) return 0.0;
    const auto na = site_coords(lat, a.x), nb = site_coords(lat, b.x);
    std::array<int, 4> n{};
    for (int k = 0; k < lat.d; ++k) n[k] = na[k] - nb[k];
    const std::size_t N = lat.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        const auto k = lat.coords(i);
        const double lam = lat.laplacian_eigenvalue(k);
        double m;
        if (lam == 0.0)
            m = drop_zero_mode ? 0.0 : b.t;
        else
            m = std::exp(-nu * lam * (a.t - b.t)) * (-std::expm1(-2.0 * nu * lam * b.t)) / (2.0 * nu * lam);
        acc += std::cos(phase(lat, k, n)) * m;
    }
    return D * acc / (N * lat.cell_volume());
}

DiscreteEWOracle::DiscreteEWOracle(const SimConfig& c, const Covariance& cov, long max_lag,
                                   const std::vector<std::pair<long, long>>& step_pairs, long period, double range)
    : c_(c), lat_(c.lattice()), max_lag_(max_lag)
{
    if (period < 1 || max_lag < 0) throw std::invalid_argument("oracle needs period >= 1 and max_lag >= 0");
    const std::size_t N = lat_.size();
    const int L = lat_.L, d = lat_.d;
    std::vector<double> cos_(L);
    for (int j = 0; j < L; ++j) cos_[j] = std::cos(2.0 * M_PI * j / L);

    // offsets in minimal-image coordinates
    struct Offset {
        std::array<int, 4> n;
        std::size_t site, mirror;
    };
    std::vector<Offset> offs;
    for (std::size_t s = 0; s < N; ++s) {
        auto k = lat_.coords(s);
        std::array<int, 4> n{}, m{};
        double r2 = 0.0;
        for (int a = 0; a < d; ++a) {
            n[a] = k[a] > L / 2 ? k[a] - L : k[a];
            m[a] = -n[a];
            r2 += n[a] * n[a] * lat_.dx * lat_.dx;
        }
        if (range > 0 && r2 > range * range) continue;
        offs.push_back({n, s, lat_.index(m)});
    }
    const long K0 = (max_lag + 1) / period + 2;
    const long nl = 2 * max_lag + 1;
    for (long p = 0; p < period; ++p) {
        const long a = p + period * K0;
        if (cov(a, a - max_lag - 1, 0) != 0.0 || cov(a, a + max_lag + 1, 0) != 0.0)
            throw std::invalid_argument("noise covariance extends beyond max_lag");
    }
    // vals[o][p * nl + l]; offsets with identically zero rows are dropped
    std::vector<std::vector<double>> vals;
    std::vector<Offset> used;
    double vmax = 0.0, asym = 0.0;
    for (const auto& off : offs) {
        std::vector<double> row(period * nl, 0.0);
        bool any = false;
        for (long p = 0; p < period; ++p)
            for (long l = -max_lag; l <= max_lag; ++l) {
                const long a = p + period * K0;
                const double v = cov(a, a - l, off.site);
                row[p * nl + l + max_lag] = v;
                any = any || v != 0.0;
                vmax = std::max(vmax, std::abs(v));
                if (v != 0.0) asym = std::max(asym, std::abs(v - cov(a, a - l, off.mirror)));
            }
        if (any) {
            vals.push_back(std::move(row));
            used.push_back(off);
        }
    }
    if (asym > 1e-10 * vmax) throw std::invalid_argument("noise covariance is not reflection symmetric");

    std::vector<std::pair<long, long>> keys;
    for (auto [n1, n2] : step_pairs) {
        if (n1 < n2) std::swap(n1, n2);
        if (!modes_.count({n1, n2})) {
            modes_[{n1, n2}].assign(N, 0.0);
            keys.push_back({n1, n2});
        }
    }
    long nmax = 0;
    for (auto& k : keys) nmax = std::max(nmax, k.first);
    std::vector<double> chat(period * nl), pw(nmax + 1);
    for (std::size_t i = 0; i < N; ++i) {
        const auto k = lat_.coords(i);
        std::fill(chat.begin(), chat.end(), 0.0);
        for (std::size_t o = 0; o < used.size(); ++o) {
            long s = 0;
            for (int a = 0; a < d; ++a) s += static_cast<long>(k[a]) * used[o].n[a];
            s %= L;
            if (s < 0) s += L;
            const double cs = cos_[s];
            const auto& v = vals[o];
            for (std::size_t q = 0; q < chat.size(); ++q) chat[q] += cs * v[q];
        }
        const double mu = 1.0 - c.nu0 * c.dt * lat_.laplacian_eigenvalue(k);
        pw[0] = 1.0;
        for (long j = 1; j <= nmax; ++j) pw[j] = pw[j - 1] * mu;
        for (auto& key : keys) {
            const long n1 = key.first, n2 = key.second;
            double S = 0.0;
            for (long b = 0; b < n2; ++b) {
                const long lo = std::max(0L, b - max_lag), hi = std::min(n1 - 1, b + max_lag);
                double inner = 0.0;
                for (long a = lo; a <= hi; ++a) inner += pw[n1 - 1 - a] * chat[(a % period) * nl + a - b + max_lag];
                S += pw[n2 - 1 - b] * inner;
            }
            modes_[key][i] = S;
        }
    }
}

double DiscreteEWOracle::covariance(long n1, std::size_t i1, long n2, std::size_t i2, bool drop_zero_mode) const
{
    if (n1 < n2) {
        std::swap(n1, n2);
        std::swap(i1, i2);
    }
    if (n2 <= 0) return 0.0;
    auto it = modes_.find({n1, n2});
    if (it == modes_.end()) throw std::invalid_argument("step pair was not prepared in the oracle");
    const std::size_t N = lat_.size();
    const auto n = displacement(lat_, i1, i2);
    double acc = 0.0;
    for (std::size_t i = drop_zero_mode ? 1 : 0; i < N; ++i)
        acc += std::cos(phase(lat_, lat_.coords(i), n)) * it->second[i];
    return c_.dt * c_.dt * c_.D0 * acc / N;
}

STPoint rescale(const STPoint& p, double eps, int d)
{
    if (!(eps > 0 && eps <= 1)) throw ConfigError("epsilon must lie in (0, 1]");
    const double r = -std::log2(eps);
    const long ri = std::lround(r);
    if (std::abs(r - ri) > 1e-12) throw ConfigError("epsilon must be a power of 1/2");
    const double f = std::ldexp(1.0, static_cast<int>(ri / 2));
    STPoint q;
    q.t = p.t / eps;
    for (int a = 0; a < d; ++a) q.x[a] = f * p.x[a];
    if (ri % 2) {
        if (d < 2) throw ConfigError("odd powers of 1/2 need d >= 2");
        for (int a = 2; a < d; ++a)
            if (p.x[a] != 0.0) throw ConfigError("odd powers of 1/2 need points in the (x0, x1) plane");
        const double u = q.x[0], v = q.x[1];
        q.x[0] = u - v;
        q.x[1] = u + v;
    }
    return q;
}

LatticePoint locate(const SimConfig& c, const STPoint& p)
{
    const double u = p.t / c.dt;
    const long s = std::lround(u);
    if (std::abs(u - s) > 1e-6) throw ConfigError("time is not a multiple of dt");
    if (s < 0 || s > c.steps()) throw ConfigError("insufficient horizon: point beyond T");
    const Lattice lat = c.lattice();
    return {s, lat.index(site_coords(lat, p.x))};
}

std::vector<std::vector<double>> snapshots(const SimConfig& c, Equation eq, const std::vector<long>& steps,
                                           std::uint64_t replica, const Mollifier* m)
{
    SimConfig cc = c;
    const long last = steps.empty() ? 0 : *std::max_element(steps.begin(), steps.end());
    if (last > c.steps()) throw ConfigError("insufficient horizon: point beyond T");
    cc.T = last * c.dt;
    std::vector<std::vector<double>> out(steps.size());
    auto src = make_noise(c.noise, m, c.lattice(), c.dt, noise_key(c, replica).hash(), c.kick_c, {c.noise_h, c.noise_ht});
    run_trajectory(cc, eq, *src, [&](long k, std::span<const double> f) {
        for (std::size_t i = 0; i < steps.size(); ++i)
            if (steps[i] == k) out[i].assign(f.begin(), f.end());
    });
    return out;
}

TwoPointEstimate connected_two_point(const SimConfig& c, const std::vector<PointPair>& base, double eps,
                                     std::size_t replicas, const Mollifier* m, EstimatorOptions o)
{
    std::vector<PointPair> pts;
    for (auto& pr : base) pts.push_back({rescale(pr.p, eps, c.d), rescale(pr.q, eps, c.d)});
    return estimate_sets(c, {eps}, {pts}, replicas, m, o)[0];
}

CollapseReport scaling_collapse(const SimConfig& c, const std::vector<double>& epsilons,
                                const std::vector<PointPair>& base, std::size_t replicas, const Mollifier* m,
                                EstimatorOptions o)
{
    CollapseReport rep;
    rep.epsilons = epsilons;
    std::vector<std::vector<PointPair>> sets;
    for (double e : epsilons) {
        std::vector<PointPair> pts;
        for (auto& pr : base) pts.push_back({rescale(pr.p, e, c.d), rescale(pr.q, e, c.d)});
        sets.push_back(std::move(pts));
    }
    rep.estimates = estimate_sets(c, epsilons, sets, replicas, m, o);
    const double link = 0.5 * c.d - 1.0;
    for (std::size_t e = 0; e < epsilons.size(); ++e) {
        const double f = std::pow(epsilons[e], -link);
        std::vector<MeanErr> row;
        for (auto v : rep.estimates[e].value) {
            v.mean *= f;
            v.stderr_ *= f;
            v.sd *= f;
            row.push_back(v);
        }
        rep.rescaled.push_back(std::move(row));
    }
    for (std::size_t e = 0; e + 1 < epsilons.size(); ++e) {
        double mx = 0.0;
        for (std::size_t p = 0; p < base.size(); ++p)
            mx = std::max(mx, std::abs(rep.rescaled[e][p].mean - rep.rescaled[e + 1][p].mean));
        rep.discrepancy.push_back(mx);
    }
    rep.shrinking = !rep.discrepancy.empty();
    for (std::size_t i = 1; i < rep.discrepancy.size(); ++i)
        if (!(rep.discrepancy[i] < rep.discrepancy[i - 1])) rep.shrinking = false;

    // common slope of log(estimate) against log(eps), one intercept per pair
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t p = 0; p < base.size(); ++p) {
        double sw = 0, sx = 0, sy = 0;
        std::vector<std::array<double, 3>> pts;
        for (std::size_t e = 0; e < epsilons.size(); ++e) {
            const auto& v = rep.estimates[e].value[p];
            if (!(v.mean > 0) || !(v.stderr_ > 0)) continue;
            const double w = (v.mean / v.stderr_) * (v.mean / v.stderr_);
            pts.push_back({std::log(epsilons[e]), std::log(v.mean), w});
            sw += w;
            sx += w * pts.back()[0];
            sy += w * pts.back()[1];
        }
        if (pts.size() < 2) continue;
        const double mx = sx / sw, my = sy / sw;
        for (auto& q : pts) {
            sxy += q[2] * (q[0] - mx) * (q[1] - my);
            sxx += q[2] * (q[0] - mx) * (q[0] - mx);
        }
    }
    if (sxx > 0) {
        rep.link_exponent = sxy / sxx;
        rep.link_exponent_stderr = 1.0 / std::sqrt(sxx);
    }
    return rep;
}

namespace {

struct EWResidual {
    using Scalar = double;
    enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };
    using InputType = Eigen::VectorXd;
    using ValueType = Eigen::VectorXd;
    using JacobianType = Eigen::MatrixXd;

    const TwoPointEstimate* est;
    Lattice lat;
    int inputs() const { return 2; }
    int values() const { return static_cast<int>(est->pairs.size()); }
    int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& f) const
    {
        for (int i = 0; i < values(); ++i) {
            const auto& v = est->value[i];
            f[i] = (ew_covariance_analytic(std::abs(x[0]), x[1], est->pairs[i], lat, est->centered) - v.mean) / v.stderr_;
        }
        return 0;
    }
};

} // namespace

EWFit fit_effective_constants(const SimConfig& c, const TwoPointEstimate& est, double nu_start, double D_start,
                              double max_condition)
{
    if (est.pairs.size() < 2) throw std::invalid_argument("fit needs at least two pairs");
    for (auto& v : est.value)
        if (!(v.stderr_ > 0)) throw std::invalid_argument("fit needs positive standard errors");
    EWResidual f{&est, c.lattice()};
    Eigen::NumericalDiff<EWResidual> nd(f);
    Eigen::LevenbergMarquardt<Eigen::NumericalDiff<EWResidual>> lm(nd);
    Eigen::VectorXd x(2);
    x << nu_start, D_start;
    lm.minimize(x);
    EWFit r;
    r.nu = std::abs(x[0]);
    r.D = x[1];
    Eigen::MatrixXd J(f.values(), 2);
    nd.df(x, J);
    const Eigen::Matrix2d H = J.transpose() * J;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(H);
    const double lo = es.eigenvalues()[0], hi = es.eigenvalues()[1];
    r.condition = lo > 0 ? hi / lo : std::numeric_limits<double>::infinity();
    if (!(r.condition <= max_condition))
        throw std::runtime_error("ill-conditioned EW fit (condition number " + std::to_string(r.condition) + ")");
    r.cov = H.inverse();
    Eigen::VectorXd res(f.values());
    f(x, res);
    r.chi2 = res.squaredNorm();
    r.dof = f.values() - 2;
    return r;
}

DriftReport mean_drift(const SimConfig& c, const std::vector<double>& epsilons, double t, std::size_t replicas,
                       const Mollifier* m, double T_drift)
{
    DriftReport rep;
    if (replicas < 2) throw ConfigError("replicas must be at least 2");
    if (!epsilons.empty()) {
        SimConfig bump = c, flat = c;
        bump.h0 = "bump";
        flat.h0 = "zero";
        std::vector<long> steps;
        for (double e : epsilons) steps.push_back(locate(c, rescale(STPoint{t, {}}, e, c.d)).step);
        std::vector<std::vector<double>> vals(replicas);
        parallel_for(replicas, [&](std::size_t r) {
            auto A = snapshots(bump, Equation::kpz, steps, r, m);
            auto B = snapshots(flat, Equation::kpz, steps, r, m);
            for (std::size_t i = 0; i < steps.size(); ++i) vals[r].push_back(A[i][0] - B[i][0]);
        });
        for (std::size_t i = 0; i < epsilons.size(); ++i) {
            std::vector<double> v(replicas);
            for (std::size_t r = 0; r < replicas; ++r) v[r] = vals[r][i];
            rep.rows.push_back({epsilons[i], t / epsilons[i], mean_stderr(v)});
        }
        for (std::size_t i = 0; i + 1 < rep.rows.size(); ++i)
            rep.ratios.push_back(rep.rows[i + 1].bump.mean / rep.rows[i].bump.mean);
    }
    if (T_drift > 0) {
        SimConfig cal = c, raw = c;
        cal.h0 = raw.h0 = "zero";
        cal.T = raw.T = T_drift;
        raw.v0 = 0.0;
        std::vector<double> a(replicas), b(replicas);
        parallel_for(replicas, [&](std::size_t r) {
            auto mean_over_T = [&](const SimConfig& cc) {
                auto src = make_noise(cc.noise, m, cc.lattice(), cc.dt, noise_key(cc, r).hash(), cc.kick_c,
                                      {cc.noise_h, cc.noise_ht});
                auto h = run_trajectory(cc, Equation::kpz, *src);
                return pairwise_sum(h) / h.size() / T_drift;
            };
            a[r] = mean_over_T(cal);
            b[r] = mean_over_T(raw);
        });
        rep.calibrated = mean_stderr(a);
        rep.uncalibrated = mean_stderr(b);
    }
    return rep;
}

std::complex<double> cartier_term(int N, const std::vector<std::vector<double>>& X)
{
    if (static_cast<int>(X.size()) != N) throw std::invalid_argument("need N replicas");
    const std::size_t L = X[0].size();
    std::complex<double> prod = 1.0;
    for (std::size_t l = 0; l < L; ++l) {
        std::complex<double> z = 0.0;
        for (int k = 0; k < N; ++k) z += std::polar(1.0, 2.0 * M_PI * k / N) * X[k][l];
        prod *= z;
    }
    return prod / double(N);
}

namespace {

CumulantEstimate finish_cumulant(int N, std::vector<STPoint> pts, const std::vector<std::complex<double>>& s)
{
    CumulantEstimate e;
    e.N = N;
    e.points = std::move(pts);
    std::vector<double> re(s.size()), im(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        re[i] = s[i].real();
        im[i] = s[i].imag();
    }
    e.re = mean_stderr(re);
    e.im = mean_stderr(im);
    e.samples = s.size();
    return e;
}

} // namespace

CumulantEstimate connected_npoint_cartier(const SimConfig& c, int N, const std::vector<STPoint>& base, double eps,
                                          std::size_t groups, const Mollifier* m, EstimatorOptions o)
{
    if (N != 2 && N != 4) throw std::invalid_argument("Cartier estimator supports N = 2 or 4");
    if (static_cast<int>(base.size()) != N) throw std::invalid_argument("need N points");
    if (groups < 2) throw ConfigError("need at least two replica groups");
    const Lattice lat = c.lattice();
    std::vector<STPoint> pts;
    std::vector<LatticePoint> lp;
    for (auto& p : base) {
        pts.push_back(rescale(p, eps, c.d));
        lp.push_back(locate(c, pts.back()));
    }
    std::vector<long> steps;
    for (auto& q : lp) steps.push_back(q.step);
    std::vector<std::vector<std::size_t>> shifts;
    for (auto& q : lp) shifts.push_back(shift_table(lat, displacement(lat, q.site, lp[0].site)));
    const double scale = c.lambda > 0 ? c.lambda / c.nu0 : 1.0;

    // exact EW value of the same estimator when EW is used as control variate
    std::complex<double> ew_mean = 0.0;
    if (o.control && N == 2)
        ew_mean = scale * scale * o.control->covariance(lp[0].step, lp[0].site, lp[1].step, lp[1].site, o.center);

    std::vector<std::complex<double>> samples(groups);
    parallel_for(groups, [&](std::size_t g) {
        std::vector<std::vector<std::vector<double>>> F(N), E, U;
        if (o.control) {
            E.resize(N);
            U.resize(N);
        }
        for (int k = 0; k < N; ++k) {
            const std::uint64_t rep = o.replica_offset + g * N + k;
            if (o.control) {
                auto all = shared_snapshots(c, steps, rep, m);
                F[k] = std::move(all[0]);
                E[k] = std::move(all[1]);
                U[k] = std::move(all[2]);
            } else {
                F[k] = snapshots(c, Equation::kpz, steps, rep, m);
            }
        }
        if (o.center)
            for (auto* G : {&F, &E, &U})
                for (auto& per : *G)
                    for (auto& f : per) {
                        const double mean = pairwise_sum(f) / f.size();
                        for (double& v : f) v -= mean;
                    }
        std::vector<std::vector<double>> X(N, std::vector<double>(N));
        auto eval_at = [&](const std::vector<std::vector<std::vector<double>>>& G, std::size_t s) {
            for (int k = 0; k < N; ++k)
                for (int l = 0; l < N; ++l) X[k][l] = scale * G[k][l][shifts[l][s]];
            return cartier_term(N, X);
        };
        // sum_l Z^U_l prod_{m != l} Z^E_m / N: an odd Gaussian moment, mean exactly zero
        std::vector<std::complex<double>> ze(N), zu(N);
        auto first_order = [&](std::size_t s) {
            for (int l = 0; l < N; ++l) {
                ze[l] = zu[l] = 0.0;
                for (int k = 0; k < N; ++k) {
                    const auto w = std::polar(1.0, 2.0 * M_PI * k / N);
                    ze[l] += w * (scale * E[k][l][shifts[l][s]]);
                    zu[l] += w * (scale * U[k][l][shifts[l][s]]);
                }
            }
            std::complex<double> acc = 0.0;
            for (int l = 0; l < N; ++l) {
                std::complex<double> p = zu[l];
                for (int q = 0; q < N; ++q)
                    if (q != l) p *= ze[q];
                acc += p;
            }
            return acc / double(N);
        };
        auto term = [&](std::size_t s) {
            auto v = eval_at(F, s);
            if (o.control) v -= eval_at(E, s) + first_order(s);
            return v;
        };
        std::complex<double> acc = 0.0;
        if (o.translate) {
            for (std::size_t s = 0; s < lat.size(); ++s) acc += term(s);
            acc /= double(lat.size());
        } else {
            acc = term(lp[0].site);
        }
        samples[g] = acc + ew_mean;
    });
    return finish_cumulant(N, pts, samples);
}

CumulantEstimate gaussian_toy_cumulant(int N, const Eigen::MatrixXd& C, std::size_t groups, std::uint64_t seed)
{
    if (C.rows() != N || C.cols() != N) throw std::invalid_argument("covariance must be N x N");
    Eigen::LLT<Eigen::MatrixXd> llt(C);
    if (llt.info() != Eigen::Success) throw std::invalid_argument("covariance must be positive definite");
    const Eigen::MatrixXd Lc = llt.matrixL();
    std::vector<std::complex<double>> samples(groups);
    for (std::size_t g = 0; g < groups; ++g) {
        CounterRng rng(StreamKey{seed, g, Purpose::toy});
        std::vector<std::vector<double>> X(N, std::vector<double>(N));
        for (int k = 0; k < N; ++k) {
            Eigen::VectorXd z(N);
            for (int i = 0; i < N; ++i) z[i] = rng.gauss();
            const Eigen::VectorXd y = Lc * z;
            for (int i = 0; i < N; ++i) X[k][i] = y[i];
        }
        samples[g] = cartier_term(N, X);
    }
    return finish_cumulant(N, {}, samples);
}

void write_two_point_csv(std::ostream& os, const TwoPointEstimate& e, int d, bool header)
{
    if (header) {
        os << "epsilon,t1";
        for (int a = 0; a < d; ++a) os << ",x1_" << a;
        os << ",t2";
        for (int a = 0; a < d; ++a) os << ",x2_" << a;
        os << ",estimate,stderr,replicas\n";
    }
    os.precision(12);
    for (std::size_t i = 0; i < e.pairs.size(); ++i) {
        const auto& pr = e.pairs[i];
        os << e.epsilon << ',' << pr.p.t;
        for (int a = 0; a < d; ++a) os << ',' << pr.p.x[a];
        os << ',' << pr.q.t;
        for (int a = 0; a < d; ++a) os << ',' << pr.q.x[a];
        os << ',' << e.value[i].mean << ',' << e.value[i].stderr_ << ',' << e.replicas << '\n';
    }
}

} // namespace kpz

namespace kpz {

DiscreteEWOracle make_ew_oracle(const SimConfig& c, const Mollifier& m, const std::vector<PointPair>& base,
                                const std::vector<double>& epsilons)
{
    if (c.noise != NoiseKind::mollified) throw ConfigError("the EW oracle needs mollified noise");
    auto ms = std::make_shared<MollifiedSampler>(m, c.lattice(), c.dt, 0, MollifiedParams{c.noise_h, c.noise_ht});
    const long max_lag = static_cast<long>(std::ceil((1.0 + 2.0 * ms->hT()) / c.dt)) + 1;
    std::vector<std::pair<long, long>> steps;
    for (double e : epsilons)
        for (const auto& pr : base)
            steps.emplace_back(locate(c, rescale(pr.p, e, c.d)).step, locate(c, rescale(pr.q, e, c.d)).step);
    // covariance vanishes beyond the space-time diameter 1 of the mollifier support
    return DiscreteEWOracle(
        c, [ms](long a, long b, std::size_t s) { return ms->lattice_covariance(a, s, b, 0); }, max_lag, steps,
        ms->rt(), 2.0);
}

} // namespace kpz
