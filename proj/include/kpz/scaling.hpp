#pragma once
#include "kpz/lattice_spde.hpp"
#include "kpz/noise.hpp"
#include "kpz/parallel.hpp"

#include <Eigen/Dense>

#include <array>
#include <complex>
#include <functional>
#include <iosfwd>
#include <map>
#include <vector>

namespace kpz {

struct STPoint {
    double t = 0.0;
    std::array<double, 4> x{};
};

struct PointPair {
    STPoint p, q;
};

// Continuous-time lattice EW covariance from h = 0 at t = 0, white noise of strength D.
// drop_zero_mode gives the covariance of fields with their spatial mean removed.
double ew_covariance_analytic(double nu, double D, const PointPair& pr, const Lattice& lat, bool drop_zero_mode = false);

// Exact covariance of the explicit Euler EW scheme driven by lattice noise whose statistics
// repeat every `period` steps. cov(a, b, offset) = Cov(eta_a(offset), eta_b(0)) for steps a, b.
// Offsets farther than `range` (minimal image, physical units) are taken as zero; range 0 means all.
// Only the step pairs given up front can be queried.
class DiscreteEWOracle {
public:
    using Covariance = std::function<double(long a, long b, std::size_t offset)>;
    DiscreteEWOracle(const SimConfig& c, const Covariance& cov, long max_lag,
                     const std::vector<std::pair<long, long>>& step_pairs, long period = 1, double range = 0.0);
    double covariance(long n1, std::size_t i1, long n2, std::size_t i2, bool drop_zero_mode = false) const;
    long max_lag() const { return max_lag_; }

private:
    SimConfig c_;
    Lattice lat_;
    long max_lag_;
    std::map<std::pair<long, long>, std::vector<double>> modes_; // per step pair, per mode
};

// Oracle for the mollified sampler of c, prepared for every pair of base rescaled by each eps.
DiscreteEWOracle make_ew_oracle(const SimConfig& c, const Mollifier& m, const std::vector<PointPair>& base,
                                const std::vector<double>& epsilons);

// Diffusive rescaling (t, x) -> (t/eps, eps^{-1/2} x). For eps = 2 * 4^-k the factor sqrt(2)
// is realized by a 45 degree rotation in the (x0, x1) plane, so x must vanish on the other axes.
STPoint rescale(const STPoint& p, double eps, int d);

struct LatticePoint {
    long step;
    std::size_t site;
};
LatticePoint locate(const SimConfig& c, const STPoint& p);

// h (or w for she) at the requested steps, one field per step
std::vector<std::vector<double>> snapshots(const SimConfig& c, Equation eq, const std::vector<long>& steps,
                                           std::uint64_t replica, const Mollifier* m);

struct TwoPointEstimate {
    double epsilon = 1.0;
    std::vector<PointPair> pairs; // rescaled
    std::vector<MeanErr> value;   // replica-difference estimator
    std::vector<MeanErr> naive;   // product minus product of means
    std::size_t replicas = 0;
    bool centered = false;
};

struct EstimatorOptions {
    bool translate = true; // average over lattice translations of each point set
    std::uint64_t replica_offset = 0;
    // EW on the same noise as a control variate, with its exact mean from the oracle
    const DiscreteEWOracle* control = nullptr;
    // remove the spatial mean of every snapshot (the torus zero mode)
    bool center = false;
};

TwoPointEstimate connected_two_point(const SimConfig& c, const std::vector<PointPair>& base, double eps,
                                     std::size_t replicas, const Mollifier* m, EstimatorOptions o = {});

struct CollapseReport {
    std::vector<double> epsilons;
    std::vector<TwoPointEstimate> estimates;
    std::vector<std::vector<MeanErr>> rescaled; // eps^{-(d/2-1)} times the estimate
    std::vector<double> discrepancy;            // max over pairs between consecutive eps
    bool shrinking = false;
    double link_exponent = 0.0;
    double link_exponent_stderr = 0.0;
};

CollapseReport scaling_collapse(const SimConfig& c, const std::vector<double>& epsilons,
                                const std::vector<PointPair>& base, std::size_t replicas, const Mollifier* m,
                                EstimatorOptions o = {});

struct EWFit {
    double nu = 0.0, D = 0.0;
    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
    double condition = 0.0;
    double chi2 = 0.0;
    int dof = 0;
};

EWFit fit_effective_constants(const SimConfig& c, const TwoPointEstimate& est, double nu_start, double D_start,
                              double max_condition = 1e12);

struct DriftRow {
    double epsilon;
    double t; // rescaled time
    MeanErr bump; // paired bump-minus-flat mean of h at the bump centre
};

struct DriftReport {
    std::vector<DriftRow> rows;
    std::vector<double> ratios; // consecutive bump ratios
    MeanErr calibrated;         // <h_T>/T with the configured v0
    MeanErr uncalibrated;       // same noise, v = 0
};

DriftReport mean_drift(const SimConfig& c, const std::vector<double>& epsilons, double t, std::size_t replicas,
                       const Mollifier* m, double T_drift = 0.0);

struct CumulantEstimate {
    int N = 0;
    std::vector<STPoint> points;
    MeanErr re, im;
    std::size_t samples = 0;
};

// (1/N) prod_l sum_k e^{2 pi i k/N} X[k][l] for one group of N independent replicas
std::complex<double> cartier_term(int N, const std::vector<std::vector<double>>& X);

// log w = (lambda/nu) h, or h itself when lambda = 0
CumulantEstimate connected_npoint_cartier(const SimConfig& c, int N, const std::vector<STPoint>& base, double eps,
                                          std::size_t groups, const Mollifier* m, EstimatorOptions o = {});

// Cartier estimator on synthetic centred Gaussians with covariance C
CumulantEstimate gaussian_toy_cumulant(int N, const Eigen::MatrixXd& C, std::size_t groups, std::uint64_t seed);

void write_two_point_csv(std::ostream& os, const TwoPointEstimate& e, int d, bool header = true);

} // namespace kpz
