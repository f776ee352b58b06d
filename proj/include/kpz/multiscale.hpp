#pragma once
#include "kpz/lattice_spde.hpp"
#include "kpz/noise.hpp"

#include <array>
#include <memory>
#include <stdexcept>
#include <vector>

namespace kpz {

// smooth step: 0 for u <= 0, 1 for u >= 1
double smooth_step(double u);

// Dyadic time partition. Per-scale profiles P_j(tau) are the self-convolutions of the
// cutoffs (with the 2^{-j/2} factors); S = sum_j P_j and w_j = P_j / S.
class ScalePartition {
public:
    explicit ScalePartition(int jmax = 8);

    int jmax() const { return jmax_; }
    double chi0(double t) const;
    double chi(double u) const;
    double chi_j(int j, double tau) const; // chi0 for j = 0, chi(2^-j tau) otherwise

    double profile(int j, double tau) const; // P_j
    double S(double tau) const;
    double weight(int j, double tau) const; // w_j
    double weight_ir(double tau) const { return 1.0 - weight(0, tau); } // scales >= 1

    // range on which S >= 1/2 is guaranteed
    double covered_min() const { return 0.5; }
    double covered_max() const { return std::ldexp(1.0, jmax_ + 1); }
    // support of w_j
    double support_lo(int j) const { return j == 0 ? 0.0 : std::ldexp(1.0, j); }
    double support_hi(int j) const { return j == 0 ? 4.0 : std::ldexp(1.0, j + 2); }

    // heat-kernel operators in (tau, x) and Fourier (tau, |xi|)
    double A(int j, double nu, int d, double tau, double r) const;
    double G(int j, double nu, int d, double tau, double r) const;
    double G_hat(int j, double nu, double tau, double k) const;

    struct Table {
        std::vector<double> tau, S;
        double s_min = 0.0, s_max = 0.0;
        double max_reconstruction_error = 0.0;
    };
    Table tabulate(int n_tau = 400, const std::vector<double>& ks = {0.0, 0.1, 0.5, 1.0, 3.0}, double nu = 1.0) const;

private:
    int jmax_;
    struct Tables;
    std::shared_ptr<const Tables> tab_;
};

double heat_kernel(double nu, int d, double tau, double r);

// |d^k/dx^k g| for the 1D Gaussian of variance s2
double gauss_deriv_1d(int k, double s2, double x);

struct ScaleReport {
    int j = 0;
    int kt = 0, kx = 0; // time and x1 derivative orders
    double mass = 0.0;
    double mass_constant = 0.0; // mass / 2^{j/2}
    double sup = 0.0;
    double sup_constant = 0.0;  // sup / (2^{-j/2(2kt+kx)} 2^{-j(d+1)/2})
};

ScaleReport check_single_scale(const ScalePartition& P, int j, int kt, int kx, int d, double nu = 1.0);

struct TwoScaleReport {
    int j = 0;
    double sup = 0.0;
    double constant = 0.0; // sup / (2^{-j(k1+k2)/2} 2^{-jd/2})
};

// sup of int |d^k1 A^j| |d^k2 B^j| over the composed arguments
TwoScaleReport check_two_scale(const ScalePartition& P, int j, int k1, int k2, int d, double nu = 1.0);

struct PW1Row {
    int j = 0;
    double constant = 0.0;
};

struct DivergentRow {
    double t = 0.0;
    double ratio = 0.0;
};

struct PW1Report {
    std::vector<PW1Row> rows;
    double spread = 0.0; // max/min constant
    std::vector<DivergentRow> kappa0, kappa2;
    double kappa0_exponent = 0.0;
    double kappa2_log_slope = 0.0;
    double kappa2_r2 = 0.0;
};

// int G |d1^3 G^j| bounded by 2^{-j/2} G_{2 nu}; divergent |kappa| = 0, 2 with the IR kernel
PW1Report check_pw1(const ScalePartition& P, const std::vector<int>& js, int d, double nu = 1.0, bool divergent = true);

struct PW2Result {
    bool holds = false;
    double margin = 0.0; // log2 of rhs / lhs
};

PW2Result check_pw2(int d, int j1, int j2);

struct GradientBoundReport {
    double C = 0.0;
    double C_refined = 0.0; // on a 2x finer grid
    double C_extended = 0.0; // on a 2x wider grid
    double nu_shift = 0.0;
    bool bounded = false;
};

GradientBoundReport gradient_bound_check(double nu, double lambda, const std::array<int, 4>& kappa, int d,
                                         int grid = 200, bool shift = true);

enum class PropagatorMode { tilde, one_eff, eff };

// Fourier transform in R^dim of the unit-mass radial bump of given radius
double radial_bump_fourier(int dim, double radius, double q);

class EffectivePropagator {
public:
    EffectivePropagator(const ScalePartition& P, double nu, double dnu, int d, PropagatorMode mode,
                        double h = 1.0 / 32);

    // per spatial mode; for one_eff this is the Volterra solution
    double fourier(double tau, double k) const;
    double fourier_closed(double tau, double k) const; // closed form (one_eff, eff)
    double value(double tau, double r) const;          // spatial kernel via Hankel transform
    double multiplier(double k) const;                 // -k^2 chi0bar_hat(k)

    int last_terms() const { return last_terms_; }

private:
    const ScalePartition& P_;
    double nu_, dnu_;
    int d_;
    PropagatorMode mode_;
    double h_;
    mutable int last_terms_ = 0;
};

struct NeumannResult {
    std::vector<double> w;       // sum of terms at time T
    std::vector<double> ratios;  // sup |u_n| / sup |u_{n-1}|
    double truncation = 0.0;     // sup |u_N|
};

// w = sum_{n <= N} (G g (eta - v))^n G w0 on the lattice (left-point Duhamel)
NeumannResult vertex_neumann(NoiseSource& noise, const SimConfig& c, int N);

} // namespace kpz
