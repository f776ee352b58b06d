#include "kpz/scaling.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace kpz;

namespace {

STPoint P(double t, double a = 0, double b = 0) { return STPoint{t, {a, b, 0, 0}}; }

SimConfig small_ew()
{
    SimConfig c;
    c.d = 2;
    c.L = 16;
    c.dx = 0.5;
    c.dt = 1.0 / 24;
    c.T = 2.0;
    return c;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y)
{
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= x.size();
    my /= x.size();
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
        sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
    }
    return sxy / sxx;
}

} // namespace

TEST_CASE("analytic EW covariance")
{
    Lattice lat(3, 16, 1.0);
    CHECK(ew_covariance_analytic(1.0, 1.0, {P(1.0), P(0.0)}, lat) == 0.0);
    const PointPair pq{P(3.0, 2.0), P(2.0, 0.0, 1.0)}, qp{pq.q, pq.p};
    CHECK(ew_covariance_analytic(1.0, 1.0, pq, lat) == doctest::Approx(ew_covariance_analytic(1.0, 1.0, qp, lat)));
    CHECK(ew_covariance_analytic(1.0, 2.0, pq, lat) == doctest::Approx(2.0 * ew_covariance_analytic(1.0, 1.0, pq, lat)));

    // equilibrium decay in d = 3: |x|^-(d-2) in space, |t|^-(d/2-1) in time
    Lattice big(3, 256, 1.0);
    std::vector<double> xs, ys;
    for (double r : {3.0, 4.0, 6.0, 8.0, 11.0}) {
        xs.push_back(r);
        ys.push_back(ew_covariance_analytic(1.0, 1.0, {P(4000, r), P(4000)}, big));
    }
    CHECK(loglog_slope(xs, ys) == doctest::Approx(-1.0).epsilon(0.15));
    xs.clear();
    ys.clear();
    for (double tau : {4.0, 8.0, 16.0, 32.0}) {
        xs.push_back(tau);
        ys.push_back(ew_covariance_analytic(1.0, 1.0, {P(4000 + tau), P(4000)}, big));
    }
    CHECK(loglog_slope(xs, ys) == doctest::Approx(-0.5).epsilon(0.15));
}

TEST_CASE("diffusive rescaling stays on the lattice")
{
    const STPoint p = P(2.0, 1.0, 0.5);
    const STPoint q = rescale(p, 0.25, 3);
    CHECK(q.t == 8.0);
    CHECK(q.x[0] == 2.0);
    CHECK(q.x[1] == 1.0);
    const STPoint h = rescale(p, 0.5, 3); // 45 degree map, |x| grows by sqrt 2
    CHECK(h.t == 4.0);
    CHECK(h.x[0] == 0.5);
    CHECK(h.x[1] == 1.5);
    CHECK(std::hypot(h.x[0], h.x[1]) == doctest::Approx(std::sqrt(2.0) * std::hypot(1.0, 0.5)));
    CHECK_THROWS_AS(rescale(STPoint{1.0, {0, 0, 1, 0}}, 0.5, 3), ConfigError);
    CHECK_THROWS_AS(rescale(p, 0.3, 3), ConfigError);
    CHECK_THROWS_AS(rescale(p, 2.0, 3), ConfigError);

    SimConfig c = small_ew();
    const auto lp = locate(c, P(1.0, 1.5, -0.5));
    CHECK(lp.step == 24);
    CHECK(lp.site == c.lattice().index({3, 15, 0, 0}));
    CHECK_THROWS_AS(locate(c, P(2.5)), ConfigError);
    CHECK_THROWS_AS(locate(c, P(1.0, 0.3)), ConfigError);
}

TEST_CASE("replica two-point estimator at lambda = 0")
{
    SimConfig c = small_ew();
    Mollifier m(2);
    const std::vector<PointPair> pairs{{P(2.0), P(2.0)}, {P(2.0, 0.5), P(2.0)}, {P(2.0), P(1.5)}, {P(2.0, 1.0, 0.5), P(1.0)}};
    const auto oracle = make_ew_oracle(c, m, pairs, {1.0});
    const auto est = connected_two_point(c, pairs, 1.0, 64, &m);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto a = locate(c, pairs[i].p), b = locate(c, pairs[i].q);
        const double exact = oracle.covariance(a.step, a.site, b.step, b.site);
        CHECK(std::abs(est.value[i].mean - exact) < 3.0 * est.value[i].stderr_);
    }
    CHECK_THROWS(oracle.covariance(3, 0, 1, 0));

    std::vector<PointPair> swapped;
    for (auto& pr : pairs) swapped.push_back({pr.q, pr.p});
    const auto sw = connected_two_point(c, swapped, 1.0, 64, &m);
    for (std::size_t i = 0; i < pairs.size(); ++i) CHECK(sw.value[i].mean == est.value[i].mean);

    std::ostringstream os;
    write_two_point_csv(os, est, 2);
    CHECK(os.str().rfind("epsilon,t1,x1_0,x1_1,t2,x2_0,x2_1,estimate,stderr,replicas\n", 0) == 0);
    CHECK_THROWS_AS(connected_two_point(c, pairs, 1.0, 5, &m), ConfigError);
}

TEST_CASE("error bars shrink like one over root replicas")
{
    SimConfig c = small_ew();
    c.noise = NoiseKind::kick;
    c.dt = 0.05;
    const std::vector<PointPair> pairs{{P(2.0), P(2.0)}, {P(2.0, 0.5), P(2.0)}, {P(2.0, 1.0), P(2.0)}, {P(2.0), P(1.0)}};
    EstimatorOptions o;
    o.translate = false;
    const auto a = connected_two_point(c, pairs, 1.0, 128, nullptr, o);
    const auto b = connected_two_point(c, pairs, 1.0, 256, nullptr, o);
    double ratio = 0.0;
    for (std::size_t i = 0; i < pairs.size(); ++i) ratio += a.value[i].stderr_ / b.value[i].stderr_ / pairs.size();
    CHECK(ratio == doctest::Approx(std::sqrt(2.0)).epsilon(0.2));
}

TEST_CASE("EW fit recovers exact constants")
{
    SimConfig c = small_ew();
    TwoPointEstimate est;
    est.pairs = {{P(2.0), P(2.0)}, {P(2.0, 0.5), P(2.0)}, {P(2.0, 1.0), P(1.0)}, {P(2.0), P(0.5)}};
    for (auto& pr : est.pairs) {
        MeanErr v;
        v.mean = ew_covariance_analytic(1.3, 0.7, pr, c.lattice());
        v.stderr_ = 1e-3 * v.mean;
        est.value.push_back(v);
    }
    const EWFit f = fit_effective_constants(c, est, 1.0, 1.0);
    CHECK(f.nu == doctest::Approx(1.3).epsilon(1e-6));
    CHECK(f.D == doctest::Approx(0.7).epsilon(1e-6));
    CHECK(f.chi2 < 1e-8);
    CHECK_THROWS_WITH_AS(fit_effective_constants(c, est, 1.0, 1.0, 1.0), doctest::Contains("condition number"),
                         std::runtime_error);
}

TEST_CASE("Cartier estimator")
{
    // N = 2, two points: (a0 - a1)(b0 - b1) / 2
    const std::vector<std::vector<double>> X{{1.0, 2.0}, {4.0, -1.0}};
    const auto z = cartier_term(2, X);
    CHECK(z.real() == doctest::Approx(0.5 * (1.0 - 4.0) * (2.0 + 1.0)));
    CHECK(z.imag() == doctest::Approx(0.0));

    Eigen::MatrixXd C(4, 4);
    C << 1.0, 0.5, 0.3, 0.2, 0.5, 1.0, 0.4, 0.1, 0.3, 0.4, 1.0, 0.6, 0.2, 0.1, 0.6, 1.0;
    const auto k4 = gaussian_toy_cumulant(4, C, 20000, 5);
    CHECK(std::abs(k4.re.mean) < 3.0 * k4.re.stderr_);
    CHECK(std::abs(k4.im.mean) < 3.0 * k4.im.stderr_);
    const auto k2 = gaussian_toy_cumulant(2, C.topLeftCorner(2, 2), 20000, 6);
    CHECK(std::abs(k2.re.mean - 0.5) < 3.0 * k2.re.stderr_);
    CHECK_THROWS(gaussian_toy_cumulant(2, C, 10, 1));
}

TEST_CASE("mean drift vanishes without the nonlinearity")
{
    SimConfig c = small_ew();
    c.noise = NoiseKind::kick;
    c.dt = 0.05;
    c.T = 4.0;
    const auto r = mean_drift(c, {}, 1.0, 32, nullptr, 4.0);
    CHECK(std::abs(r.calibrated.mean) < 4.0 * r.calibrated.stderr_);
    CHECK(r.uncalibrated.mean == r.calibrated.mean); // v0 = 0 in both
}
