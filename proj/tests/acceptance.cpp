// Acceptance runner: one PASS/FAIL line per criterion.
//   acceptance [ids...] [--out DIR] [--threads N]
#include "kpz/cluster.hpp"
#include "kpz/feynman_kac.hpp"
#include "kpz/lattice_spde.hpp"
#include "kpz/multiscale.hpp"
#include "kpz/noise.hpp"
#include "kpz/parallel.hpp"
#include "kpz/renorm.hpp"
#include "kpz/scaling.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

using namespace kpz;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Context {
    fs::path out;
    std::vector<IdentityCheck> suite; // shared by 1-4
    std::ofstream csv(const std::string& name, const std::string& kind) const
    {
        std::ofstream os(out / name);
        os << "# kpzlab-csv/1 " << kind << "\n";
        os.precision(10);
        return os;
    }
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...)
{
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

STPoint pt(double t, double a = 0, double b = 0, double c = 0) { return STPoint{t, {a, b, c, 0.0}}; }

// least-squares slope and R^2 of y against x
std::pair<double, double> linfit(const std::vector<double>& x, const std::vector<double>& y)
{
    const double n = x.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i], sy += y[i], sxx += x[i] * x[i], sxy += x[i] * y[i], syy += y[i] * y[i];
    }
    const double cxx = sxx - sx * sx / n, cxy = sxy - sx * sy / n, cyy = syy - sy * sy / n;
    const double slope = cxy / cxx;
    return {slope, cyy > 0 ? cxy * cxy / (cxx * cyy) : 1.0};
}

const std::vector<IdentityCheck>& suite(Context& ctx)
{
    if (ctx.suite.empty()) ctx.suite = cluster_identity_suite(2024, 50, 4);
    return ctx.suite;
}

Outcome identity(Context& ctx, const std::string& name)
{
    for (const auto& c : suite(ctx))
        if (c.name == name) return {c.pass(), fmt("%ld cases, max error %.3g (tol %.0e)", c.cases, c.max_error, c.tolerance)};
    return {false, "check missing from suite"};
}

Outcome c5_lambda_zero(Context&)
{
    SimConfig c;
    c.d = 3;
    c.L = 16;
    c.dt = 0.05;
    c.lambda = 0.0;
    c.validate();
    const Mollifier m(3);
    const LatticeOps ops(c.lattice());
    const std::size_t ns = c.lattice().size();
    auto src = make_noise(c.noise, &m, c.lattice(), c.dt, noise_key(c, 0).hash());
    std::vector<double> h(ns, 0.0), e(ns, 0.0), hn(ns), en(ns), eta(ns);
    const long steps = 10000;
    long first_diff = -1;
    for (long k = 0; k < steps; ++k) {
        src->fill(k, eta);
        step_kpz(ops, c, h, eta, hn);
        step_ew(ops, c, e, eta, en);
        h.swap(hn);
        e.swap(en);
        if (first_diff < 0 && std::memcmp(h.data(), e.data(), ns * sizeof(double)) != 0) first_diff = k;
    }
    double spread = 0;
    for (double x : h) spread = std::max(spread, std::abs(x));
    if (first_diff >= 0) return {false, fmt("fields differ from step %ld", first_diff)};
    return {true, fmt("%ld steps bit-identical, sup|h| = %.3f", steps, spread)};
}

Outcome c6_cole_hopf(Context&)
{
    // one continuum realization sampled on two lattices; dx^2 and dt both halve
    const double side = 8.0;
    const int Ls[2] = {12, 17};
    const double dts[2] = {1.0 / 18, 1.0 / 36};
    const int reps = 8;
    bool ok = true;
    std::string detail;
    for (int d : {1, 3}) {
        const Mollifier m(d);
        double err[2] = {0, 0};
        for (int r = 0; r < reps; ++r) {
            const ContinuumNoise cn(m, side, 0.25, 0.25, 1.5, StreamKey{6, std::uint64_t(r), Purpose::noise}.hash());
            for (int l = 0; l < 2; ++l) {
                SimConfig c;
                c.d = d;
                c.L = Ls[l];
                c.dx = side / Ls[l];
                c.dt = dts[l];
                c.T = 1.0;
                c.lambda = 0.1;
                ContinuumLatticeNoise n1(cn, c.lattice(), c.dt), n2(cn, c.lattice(), c.dt);
                const auto h = run_trajectory(c, Equation::kpz, n1);
                const auto hw = inverse_cole_hopf(run_trajectory(c, Equation::she, n2), c);
                double s = 0;
                for (std::size_t i = 0; i < h.size(); ++i) s = std::max(s, std::abs(h[i] - hw[i]));
                err[l] += s / reps;
            }
        }
        const double ratio = err[0] / err[1];
        ok &= ratio >= 1.5 && ratio <= 2.5;
        detail += fmt("d=%d: %.3e -> %.3e, factor %.2f; ", d, err[0], err[1], ratio);
    }
    return {ok, detail};
}

Outcome c7_feynman_kac(Context&)
{
    SimConfig c;
    c.d = 3;
    c.L = 16;
    c.dx = 0.25;
    c.dt = 1.0 / 96;
    c.T = 4.0;
    c.lambda = 0.2;
    const Mollifier m(3);
    const Lattice lat = c.lattice();
    const std::size_t R = 50;
    const long paths = 10000;
    const std::array<double, 3> a{0, 0, 0};
    std::vector<double> fk(R), she(R), paired(R);
    parallel_for(R, [&](std::size_t r) {
        auto src = make_noise(c.noise, &m, lat, c.dt, noise_key(c, r).hash());
        const NoiseField f = record_noise(*src, lat, c.dt, c.steps() + 1);
        fk[r] = estimate_w(c.T, a, f, c, paths, StreamKey{c.seed, r, Purpose::paths}).value;
        // independent noise for the lattice side
        auto s1 = make_noise(c.noise, &m, lat, c.dt, noise_key(c, r + 100000).hash());
        she[r] = run_trajectory(c, Equation::she, *s1)[0];
        auto s2 = make_noise(c.noise, &m, lat, c.dt, noise_key(c, r).hash());
        paired[r] = run_trajectory(c, Equation::she, *s2)[0] - fk[r];
    });
    const MeanErr A = mean_stderr(fk), B = mean_stderr(she), P = mean_stderr(paired);
    const double z = (A.mean - B.mean) / std::hypot(A.stderr_, B.stderr_);
    return {std::abs(z) <= 3.0, fmt("FK %.4f +- %.4f, SHE %.4f +- %.4f, z = %.2f (same-noise difference %.4f +- %.4f)", A.mean,
                                    A.stderr_, B.mean, B.stderr_, z, P.mean, P.stderr_)};
}

Outcome c8_ew_covariance(Context& ctx)
{
    SimConfig c;
    c.d = 3;
    c.L = 16;
    c.dx = 1.0;
    c.dt = 0.125;
    c.T = 4.0;
    c.lambda = 0.0;
    c.noise_ht = c.dt;
    const Mollifier m(3);
    const std::vector<PointPair> pairs = {
        {pt(4), pt(4)},          {pt(4, 1), pt(4)}, {pt(4, 1, 1), pt(4)}, {pt(4, 2), pt(4)}, {pt(4, 1, 1, 1), pt(4)},
        {pt(4), pt(2)},          {pt(4, 1), pt(2)}, {pt(4), pt(3)},       {pt(3, 1), pt(3)}, {pt(2), pt(2)},
    };
    const DiscreteEWOracle orc = make_ew_oracle(c, m, pairs, {1.0});
    const TwoPointEstimate est = connected_two_point(c, pairs, 1.0, 200, &m);
    auto os = ctx.csv("covariance.csv", "covariance");
    os << "pair,t1,x1,y1,z1,t2,x2,y2,z2,estimate,stderr,oracle,continuous_time,z\n";
    double zmax = 0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto a = locate(c, pairs[i].p), b = locate(c, pairs[i].q);
        const double o = orc.covariance(a.step, a.site, b.step, b.site);
        const double z = (est.value[i].mean - o) / est.value[i].stderr_;
        zmax = std::max(zmax, std::abs(z));
        const auto& p = pairs[i].p;
        const auto& q = pairs[i].q;
        os << i << ',' << p.t << ',' << p.x[0] << ',' << p.x[1] << ',' << p.x[2] << ',' << q.t << ',' << q.x[0] << ','
           << q.x[1] << ',' << q.x[2] << ',' << est.value[i].mean << ',' << est.value[i].stderr_ << ',' << o << ','
           << ew_covariance_analytic(c.nu0, c.D0, pairs[i], c.lattice()) << ',' << z << '\n';
    }
    return {zmax <= 3.0, fmt("%zu pairs, %zu replicas, max |z| = %.2f", pairs.size(), est.replicas, zmax)};
}

Outcome c9_partition(Context&)
{
    const ScalePartition P(12);
    const auto tb = P.tabulate();
    const bool ok = tb.s_min >= 0.5 && tb.s_max <= 2.0 && tb.max_reconstruction_error <= 1e-8;
    return {ok, fmt("S in [%.4f, %.4f], reconstruction error %.2e", tb.s_min, tb.s_max, tb.max_reconstruction_error)};
}

double drift_of(const std::vector<double>& v)
{
    return *std::max_element(v.begin(), v.end()) / *std::min_element(v.begin(), v.end());
}

Outcome c10_scales(Context& ctx)
{
    const ScalePartition P(12);
    const int d = 3;
    auto os = ctx.csv("scale_constants.csv", "scale_constants");
    os << "check,kappa,j,constant\n";
    double worst = 0;
    std::string which;
    auto record = [&](const std::string& name, const std::string& kappa, const std::vector<double>& v) {
        for (std::size_t j = 0; j < v.size(); ++j) os << name << ',' << kappa << ',' << j + 1 << ',' << v[j] << '\n';
        const double dr = drift_of(v);
        if (dr > worst) worst = dr, which = name + " " + kappa;
    };
    for (auto [kt, kx] : {std::pair{0, 0}, {0, 1}, {1, 0}, {1, 1}, {0, 2}}) {
        std::vector<double> mass, sup;
        for (int j = 1; j <= 8; ++j) {
            const ScaleReport s = check_single_scale(P, j, kt, kx, d);
            mass.push_back(s.mass_constant);
            sup.push_back(s.sup_constant);
        }
        const std::string kappa = std::to_string(kt) + ":" + std::to_string(kx);
        record("mass", kappa, mass);
        record("sup", kappa, sup);
    }
    for (auto [k1, k2] : {std::pair{0, 0}, {1, 1}, {1, 2}}) {
        std::vector<double> two;
        for (int j = 1; j <= 8; ++j) two.push_back(check_two_scale(P, j, k1, k2, d).constant);
        record("two_scale", std::to_string(k1) + ":" + std::to_string(k2), two);
    }
    return {worst < 2.0, fmt("largest max/min over j=1..8 is %.3f (%s)", worst, which.c_str())};
}

Outcome c11_power_counting(Context& ctx)
{
    const ScalePartition P(12);
    const PW1Report pw = check_pw1(P, {1, 2, 3, 4, 5, 6, 7, 8}, 3);
    auto os = ctx.csv("powercount.csv", "powercount");
    os << "check,j,kappa,measured,bound,pass\n";
    double lo = 1e300;
    for (const auto& r : pw.rows) lo = std::min(lo, r.constant);
    for (const auto& r : pw.rows) os << "pw1," << r.j << ",3," << r.constant << ',' << 2 * lo << ',' << (r.constant <= 2 * lo) << '\n';
    for (const auto& r : pw.kappa0) os << "divergent_t," << r.t << ",0," << r.ratio << ",,\n";
    for (const auto& r : pw.kappa2) os << "divergent_t," << r.t << ",2," << r.ratio << ",,\n";
    long pw2_cases = 0, pw2_fail = 0;
    double min_margin = 1e300;
    for (int d : {3, 4, 5})
        for (int j1 = 1; j1 <= 12; ++j1)
            for (int j2 = j1; j2 <= 12; ++j2) {
                const PW2Result r = check_pw2(d, j1, j2);
                ++pw2_cases;
                pw2_fail += !r.holds;
                min_margin = std::min(min_margin, r.margin);
            }
    os << "pw2_cases,," << pw2_cases << ',' << pw2_cases - pw2_fail << ',' << pw2_cases << ',' << (pw2_fail == 0) << '\n';
    const bool ok = pw.spread < 2.0 && std::abs(pw.kappa0_exponent - 1.0) <= 0.1 && pw.kappa2_r2 > 0.99 && pw2_fail == 0;
    return {ok, fmt("PW1 spread %.3f, |k|=0 exponent %.3f, |k|=2 R^2 %.5f, PW2 %ld/%ld hold (min margin %.2f)", pw.spread,
                    pw.kappa0_exponent, pw.kappa2_r2, pw2_cases - pw2_fail, pw2_cases, min_margin)};
}

Outcome c12_propagator(Context&)
{
    const ScalePartition P(12);
    const Mollifier m(3);
    SimConfig c;
    c.d = 3;
    c.lambda = 0.2;
    // physical shift at lambda = 0.2, and a large shift as a stress case
    auto deviations = [&](double dnu) {
        EffectivePropagator Gt(P, 1.0, dnu, 3, PropagatorMode::tilde), Ge(P, 1.0, dnu, 3, PropagatorMode::eff);
        std::vector<double> dev;
        for (double eps : {0.25, 1.0 / 16}) {
            const double tau = 1.0 / eps;
            double worst = 0;
            for (double x0 : {0.0, 0.5, 1.0}) {
                const double r = x0 / std::sqrt(eps);
                worst = std::max(worst, std::abs(Gt.value(tau, r) - Ge.value(tau, r)) / heat_kernel(1.0, 3, tau, r));
            }
            dev.push_back(worst);
        }
        return dev;
    };
    const double dnu = delta_nu(c, P, m).value;
    const auto a = deviations(dnu), b = deviations(0.1);
    const double f = a[0] / a[1], fb = b[0] / b[1];
    return {f >= 2.0 && fb >= 2.0, fmt("delta_nu %.3e: %.3e -> %.3e, factor %.2f; delta_nu 0.1: %.4f -> %.4f, factor %.2f",
                                       dnu, a[0], a[1], f, b[0], b[1], fb)};
}

Outcome c13_renorm(Context& ctx)
{
    const ScalePartition P(12);
    const Mollifier m(3);
    const std::vector<double> lams = {0.05, 0.1, 0.2, 0.4};
    std::vector<double> ll, lv, ln, lk;
    bool forms = true;
    double worst_form = 0;
    auto os = ctx.csv("renorm_scaling.csv", "renorm_scaling");
    os << "lambda,v0_leading,v0_error,delta_nu,delta_nu_error,delta_nu_isotropic,delta_nu_isotropic_error,d_eff_ratio\n";
    for (double lam : lams) {
        SimConfig c;
        c.d = 3;
        c.lambda = lam;
        const Quad v = v0_leading(c, P, m);
        const Quad t = delta_nu(c, P, m, 0);
        const Quad iso = delta_nu_isotropic(c, P, m);
        const DEffResult de = d_eff_ratio(c, m);
        os << lam << ',' << v.value << ',' << v.error << ',' << t.value << ',' << t.error << ',' << iso.value << ','
           << iso.error << ',' << de.ratio << '\n';
        ll.push_back(std::log(lam));
        lv.push_back(std::log(v.value));
        ln.push_back(std::log(t.value));
        lk.push_back(std::log(std::abs(de.ratio - 1.0)));
        const double gap = std::abs(t.value - iso.value);
        const double allow = 2.0 * (t.error + iso.error) + 1e-12 * t.value;
        forms &= gap <= allow;
        worst_form = std::max(worst_form, gap / allow);
    }
    const double sv = linfit(ll, lv).first, sn = linfit(ll, ln).first, sk = linfit(ll, lk).first;
    const bool ok = std::abs(sv - 1.0) <= 0.02 && std::abs(sn - 2.0) <= 0.05 && std::abs(sk - 2.0) <= 0.1 && forms;
    return {ok, fmt("exponents v0 %.4f, delta_nu %.4f, D_eff-1 %.4f; delta_nu forms gap/allowance <= %.2f", sv, sn, sk,
                    worst_form)};
}

Outcome c14_drift(Context& ctx)
{
    const Mollifier m(3);
    const ScalePartition P(12);
    SimConfig c;
    c.d = 3;
    c.L = 16;
    c.dx = 0.25;
    c.dt = 1.0 / 96;
    c.lambda = 0.2;
    c.v0 = v0_fixed_point(c, P, m).value;
    const DriftReport dr = mean_drift(c, {}, 0.0, 256, &m, 64.0);
    const double ratio = std::abs(dr.uncalibrated.mean) / std::abs(dr.calibrated.mean);
    const bool calibrated = ratio >= 5.0;

    const FeketeReport fk = fekete_diagnostics(c, {8, 16, 32, 64}, 32, &m);

    SimConfig k;
    k.d = 3;
    k.L = 16;
    k.dx = 1.0;
    k.dt = 0.05;
    k.lambda = 0.2;
    k.noise = NoiseKind::kick;
    const FeketeReport fkick = fekete_diagnostics(k, {8, 16, 32, 64}, 64);
    const V0TildeEstimate vt = estimate_v0_tilde(k, 4000, 64);
    const double jz = (fkick.v_est - vt.value) / std::hypot(fkick.v_est_stderr, vt.stderr_);
    const bool jensen = jz <= 3.0;

    auto os = ctx.csv("drift.csv", "drift");
    os << "quantity,T,value,stderr\n";
    os << "calibrated_rate,64," << dr.calibrated.mean << ',' << dr.calibrated.stderr_ << '\n';
    os << "uncalibrated_rate,64," << dr.uncalibrated.mean << ',' << dr.uncalibrated.stderr_ << '\n';
    for (const auto& r : fk.rows) os << "mean_h," << r.T << ',' << r.mean_h << ',' << r.stderr_ << '\n';
    for (const auto& p : fk.pairs) os << "superadditive_excess," << p.T1 + p.T2 << ',' << p.excess << ',' << p.stderr_ << '\n';
    os << "v0_est_kick,64," << fkick.v_est << ',' << fkick.v_est_stderr << '\n';
    os << "v0_tilde_kick,1," << vt.value << ',' << vt.stderr_ << '\n';

    const bool ok = calibrated && fk.superadditive && fk.nonnegative && jensen;
    return {ok, fmt("v0 %.5f: rate %.5f +- %.5f vs %.5f +- %.5f (factor %.2f); superadditive %d, nonnegative %d; kick "
                    "v_est %.5f +- %.5f vs tilde %.5f +- %.5f (z %.2f)",
                    c.v0, dr.calibrated.mean, dr.calibrated.stderr_, dr.uncalibrated.mean, dr.uncalibrated.stderr_,
                    ratio, fk.superadditive, fk.nonnegative, fkick.v_est, fkick.v_est_stderr, vt.value, vt.stderr_, jz)};
}

// scaling configuration shared by 15 and 16: torus side 32 at dx = 1/2
SimConfig scaling_config(const ScalePartition& P, const Mollifier& m)
{
    SimConfig c;
    c.d = 3;
    c.L = 64;
    c.dx = 0.5;
    c.dt = 1.0 / 24;
    c.T = 8.0;
    c.lambda = 0.2;
    c.v0 = v0_fixed_point(c, P, m).value;
    return c;
}

Outcome c15_collapse(Context& ctx)
{
    const Mollifier m(3);
    const ScalePartition P(12);
    const SimConfig c = scaling_config(P, m);
    const std::vector<double> eps = {1.0, 0.5, 0.25};
    const std::vector<PointPair> pairs = {
        {pt(2, 1.5), pt(2)}, {pt(2, 2), pt(2)}, {pt(2, 1, 1), pt(2)},
        {pt(2), pt(0.5)},    {pt(2, 1), pt(1)}, {pt(2, 2), pt(1)},
    };
    const DiscreteEWOracle orc = make_ew_oracle(c, m, pairs, eps);
    EstimatorOptions o;
    o.control = &orc;
    o.center = true;
    const CollapseReport rep = scaling_collapse(c, eps, pairs, 16, &m, o);
    {
        auto os = ctx.csv("two_point.csv", "two_point");
        for (std::size_t i = 0; i < rep.estimates.size(); ++i) write_two_point_csv(os, rep.estimates[i], c.d, i == 0);
    }
    const RenormConstants rc = renorm_constants(c, P, m);
    const double nu_th = c.nu0 + rc.delta_nu.value, D_th = c.D0 * rc.d_eff.ratio;
    const EWFit fit = fit_effective_constants(c, rep.estimates.back(), nu_th, D_th);
    auto within2 = [](double a, double b) { return a > 0 && b > 0 && std::max(a / b, b / a) <= 2.0; };
    const bool ok = rep.shrinking && std::abs(rep.link_exponent - 0.5) <= 0.15 && within2(fit.nu, nu_th) &&
                    within2(fit.D, D_th);
    std::string disc;
    for (double x : rep.discrepancy) disc += fmt("%.4f ", x);
    return {ok, fmt("discrepancy %sshrinking %d; link exponent %.3f +- %.3f; fit nu %.4f D %.4f vs %.4f %.4f", disc.c_str(),
                    rep.shrinking, rep.link_exponent, rep.link_exponent_stderr, fit.nu, fit.D, nu_th, D_th)};
}

Outcome c16_gaussianity(Context&)
{
    const Mollifier m(3);
    const ScalePartition P(12);
    SimConfig c = scaling_config(P, m);
    c.L = 32; // the four-point estimator needs many more runs
    const double a = 1.5;
    const std::vector<STPoint> pts = {pt(2), pt(2, a), pt(2, 0, a), pt(2, a, a)};
    std::vector<PointPair> pairs;
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j) pairs.push_back({pts[i], pts[j]});
    const std::vector<double> eps = {1.0, 0.25};
    const DiscreteEWOracle orc = make_ew_oracle(c, m, pairs, eps);
    EstimatorOptions o;
    o.control = &orc;
    o.center = true;
    EstimatorOptions o4 = o;
    o4.replica_offset = 1000000;
    const std::size_t groups = 32;
    const double sc = c.lambda / c.nu0;

    std::vector<double> ratio, ratio_err;
    bool n2_ok = true;
    std::string detail;
    for (double e : eps) {
        const TwoPointEstimate tp = connected_two_point(c, pairs, e, 2 * groups, &m, o);
        const CumulantEstimate f4 = connected_npoint_cartier(c, 4, pts, e, groups, &m, o4);
        const CumulantEstimate f2 = connected_npoint_cartier(c, 2, {pts[0], pts[1]}, e, groups, &m, o4);
        auto F = [&](int i) { return tp.value[i].mean * sc * sc; };
        const double wick = F(0) * F(5) + F(1) * F(4) + F(2) * F(3);
        ratio.push_back(std::abs(f4.re.mean) / wick);
        ratio_err.push_back(f4.re.stderr_ / wick);
        const double z2 = (f2.re.mean - F(0)) / std::hypot(f2.re.stderr_, tp.value[0].stderr_ * sc * sc);
        n2_ok &= std::abs(z2) <= 3.0;
        detail += fmt("eps %.2f: F4 %.2e +- %.2e, ratio %.2e +- %.2e, N=2 z %.2f; ", e, f4.re.mean, f4.re.stderr_,
                      ratio.back(), ratio_err.back(), z2);
    }
    // a decrease only counts if it is resolved
    const bool decreasing = ratio[1] + 3.0 * ratio_err[1] < ratio[0] && ratio[0] > 3.0 * ratio_err[0];

    Eigen::MatrixXd C(4, 4);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) C(i, j) = std::exp(-0.5 * std::abs(i - j)) + (i == j ? 0.5 : 0.0);
    const CumulantEstimate toy = gaussian_toy_cumulant(4, C, 20000, 16);
    const double tz = toy.re.mean / toy.re.stderr_;
    detail += fmt("toy z %.2f", tz);
    return {decreasing && n2_ok && std::abs(tz) <= 3.0, detail};
}

Outcome c17_large_fields(Context& ctx)
{
    const Mollifier m(3);
    const Lattice lat(3, 16, 0.5);
    const double dt = 0.125;
    const std::vector<double> lams = {0.1, 0.2};
    const int reps = 16;
    std::vector<std::array<long, 3>> cnt(lams.size(), {0, 0, 0});
    long boxes = 0;
    for (int r = 0; r < reps; ++r) {
        auto src = make_noise(NoiseKind::mollified, &m, lat, dt, StreamKey{17, std::uint64_t(r), Purpose::noise}.hash());
        const NoiseField f = record_noise(*src, lat, dt, 129);
        for (std::size_t a = 0; a < lams.size(); ++a) {
            const BoxClassification bc = classify_boxes(f, lams[a]);
            if (a == 0) boxes += bc.labels.size();
            for (int k : bc.labels)
                for (int k0 = 0; k0 < 3; ++k0) cnt[a][k0] += k >= k0;
        }
    }
    auto os = ctx.csv("large_fields.csv", "large_fields");
    os << "lambda,k0,x,probability,count,boxes\n";
    // fit log P = log A - c x, x = 4^k0 / lambda, on unsaturated k0 in {0, 1}; k0 = 2 is held out
    std::vector<double> xs, ys;
    struct Pt {
        double x, p, se;
        int k0;
    };
    std::vector<Pt> all;
    for (std::size_t a = 0; a < lams.size(); ++a)
        for (int k0 = 0; k0 < 3; ++k0) {
            const double p = double(cnt[a][k0]) / boxes;
            const double x = std::pow(4.0, k0) / lams[a];
            all.push_back({x, p, std::sqrt(std::max(p * (1 - p), 1.0 / boxes) / boxes), k0});
            os << lams[a] << ',' << k0 << ',' << x << ',' << p << ',' << cnt[a][k0] << ',' << boxes << '\n';
            if (k0 <= 1 && p > 0 && p < 1) xs.push_back(x), ys.push_back(std::log(p));
        }
    if (xs.size() < 2) return {false, "fewer than two unsaturated points"};
    const double c = -linfit(xs, ys).first;
    double logA = -1e300;
    for (const auto& q : all)
        if (q.k0 <= 1 && q.p > 0) logA = std::max(logA, std::log(q.p) + c * q.x);
    bool held = true;
    std::string detail = fmt("c = %.4f, A = %.3f;", c, std::exp(logA));
    for (const auto& q : all) {
        const double env = std::exp(logA - c * q.x);
        if (q.k0 == 2) held &= q.p <= env + 3 * q.se;
        detail += fmt(" x=%g P=%.3e env=%.3e", q.x, q.p, env);
    }
    return {c > 0 && held, detail};
}

struct Criterion {
    int id;
    const char* title;
    double budget; // seconds
    std::function<Outcome(Context&)> run;
};

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"acceptance checks"};
    std::vector<int> ids;
    std::string out = "acceptance_out";
    int nthreads = 0;
    app.add_option("ids", ids, "criteria to run (default: all)");
    app.add_option("--out", out, "directory for CSV outputs");
    app.add_option("--threads", nthreads, "worker threads (0 = hardware)");
    CLI11_PARSE(app, argc, argv);
    if (nthreads > 0) set_threads(nthreads);

    const std::vector<Criterion> all = {
        {1, "bkar identity", 10, [](Context& c) { return identity(c, "bkar"); }},
        {2, "bkar2 identity", 30, [](Context& c) { return identity(c, "bkar2"); }},
        {3, "log-derivative coefficients", 5, [](Context& c) { return identity(c, "log_derivative"); }},
        {4, "gaussian ds-identity", 5, [](Context& c) { return identity(c, "gaussian_ds"); }},
        {5, "lambda=0 reduction", 60, c5_lambda_zero},
        {6, "cole-hopf consistency", 300, c6_cole_hopf},
        {7, "feynman-kac vs she", 900, c7_feynman_kac},
        {8, "ew covariance", 1200, c8_ew_covariance},
        {9, "partition reconstruction", 60, c9_partition},
        {10, "single/two-scale constants", 300, c10_scales},
        {11, "pw1/pw2", 300, c11_power_counting},
        {12, "effective propagator", 600, c12_propagator},
        {13, "renormalized constants", 600, c13_renorm},
        {14, "drift calibration", 2700, c14_drift},
        {15, "scaling collapse", 7200, c15_collapse},
        {16, "gaussianity trend", 7200, c16_gaussianity},
        {17, "large-field statistics", 600, c17_large_fields},
    };

    Context ctx;
    ctx.out = out;
    fs::create_directories(ctx.out);
    int failed = 0;
    for (const auto& cr : all) {
        if (!ids.empty() && std::find(ids.begin(), ids.end(), cr.id) == ids.end()) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = cr.run(ctx);
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double el = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = el <= cr.budget;
        const bool pass = o.pass && in_time;
        failed += !pass;
        std::printf("%s %2d %-28s %8.1fs  %s%s\n", pass ? "PASS" : "FAIL", cr.id, cr.title, el, o.detail.c_str(),
                    in_time ? "" : " [over time budget]");
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
