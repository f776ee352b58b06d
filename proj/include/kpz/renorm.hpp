#pragma once
#include "kpz/lattice_spde.hpp"
#include "kpz/multiscale.hpp"
#include "kpz/noise.hpp"

#include <vector>

namespace kpz {

// Leading-order renormalized constants by deterministic quadrature.
// Noise covariance is (omega*omega); the bare coupling carries sqrt(D0).

struct Quad {
    double value = 0.0;
    double error = 0.0; // difference between two refinements
};

double coupling(const SimConfig& c);

Quad v0_leading(const SimConfig& c, const ScalePartition& P, const Mollifier& m);

struct FixedPoint {
    double value = 0.0;
    int iterations = 0;
    double max_ratio = 0.0; // largest observed step ratio
};
FixedPoint v0_fixed_point(const SimConfig& c, const ScalePartition& P, const Mollifier& m, double tol = 1e-13);

// x_axis^2 weighted form; axis selects the coordinate
Quad delta_nu(const SimConfig& c, const ScalePartition& P, const Mollifier& m, int axis = 0);
// |x|^2/(4d) form over the symmetric time axis
Quad delta_nu_isotropic(const SimConfig& c, const ScalePartition& P, const Mollifier& m);

struct DEffResult {
    double ratio = 1.0;
    double c2 = 0.0;
    double c4 = 0.0;
    double c4_error = 0.0;
    double c4_hankel = 0.0; // same integral with the covariance transform done by Hankel quadrature
    double K = 0.0;         // |ratio - 1| / g0^2
};
DEffResult d_eff_ratio(const SimConfig& c, const Mollifier& m);

struct BoundaryRow {
    double T;
    double vT;
    double diff;
};
struct BoundaryReport {
    std::vector<BoundaryRow> rows;
    double slope = 0.0; // fit of log|diff| against T over positive differences
    bool monotone = true;
    bool decays = true;
};
BoundaryReport boundary_decay_check(const SimConfig& c, const ScalePartition& P, const Mollifier& m,
                                    const std::vector<double>& Ts);

struct RenormConstants {
    double g0 = 0.0;
    Quad v0_leading;
    FixedPoint v0_fixed_point;
    Quad delta_nu;
    Quad delta_nu_isotropic;
    DEffResult d_eff;
};
RenormConstants renorm_constants(const SimConfig& c, const ScalePartition& P, const Mollifier& m);

} // namespace kpz
