#pragma once
#include "kpz/lattice_spde.hpp"
#include "kpz/noise.hpp"
#include "kpz/rng.hpp"

#include <span>
#include <vector>

namespace kpz {

struct PolymerEstimate {
    double value = 0.0;
    double stderr_ = 0.0;
    long n_paths = 0;
    std::vector<double> a, b;
    double T = 0.0;
};

// multilinear interpolation of a lattice slice at a continuum point
double interpolate_space(const Lattice& lat, std::span<const double> f, std::span<const double> x);

// Quenched average over Brownian paths started at a, with E[(B_t - a)^2] = 2 nu0 t per axis.
PolymerEstimate estimate_w(double T, std::span<const double> a, const NoiseField& noise, const SimConfig& c,
                           long n_paths, const StreamKey& key);

// Paths pinned to a at time 0 and b at time T; no initial-condition factor.
PolymerEstimate estimate_w_bridge(double T, std::span<const double> a, std::span<const double> b,
                                  const NoiseField& noise, const SimConfig& c, long n_paths, const StreamKey& key);

struct V0TildeEstimate {
    double value = 0.0;
    double stderr_ = 0.0;
    double mean_weight = 1.0;
    // second-order cumulant (g/2) Var(int_0^1 eta(0, B_t) dt)
    double cumulant = 0.0;
    double cumulant_stderr = 0.0;
};

V0TildeEstimate estimate_v0_tilde(const SimConfig& c, long n_paths, long n_noise, long n_oracle_paths = 0);

struct FeketeRow {
    double T = 0.0;
    double mean_h = 0.0;
    double stderr_ = 0.0;
};

struct FeketePair {
    double T1 = 0.0, T2 = 0.0;
    double excess = 0.0; // <h_{T1+T2}> - <h_T1> - <h_T2>
    double stderr_ = 0.0;
    bool ok = true;
};

struct FeketeReport {
    std::vector<FeketeRow> rows;
    std::vector<FeketePair> pairs;
    bool nonnegative = true;
    bool superadditive = true;
    double v_est = 0.0; // <h_T>/(T sqrt(D0)) at the largest horizon
    double v_est_stderr = 0.0;
};

// Runs the height equation with zero bare velocity and records <h_T> at each horizon.
FeketeReport fekete_diagnostics(const SimConfig& c, const std::vector<double>& horizons, std::size_t replicas,
                                const Mollifier* moll = nullptr);

} // namespace kpz
