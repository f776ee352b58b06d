#pragma once
#include "kpz/lattice.hpp"
#include "kpz/noise.hpp"

#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace kpz {

struct StepFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SimConfig {
    int d = 3;
    int L = 16;
    double dx = 1.0;
    double dt = 0.05;
    double T = 1.0;
    double nu0 = 1.0;
    double D0 = 1.0;
    double lambda = 0.0;
    double v0 = 0.0;
    std::uint64_t seed = 1;
    NoiseKind noise = NoiseKind::mollified;
    double kick_c = 0.25;
    double noise_h = 0.0;  // white-cell spacing, 0 = default
    double noise_ht = 0.0; // white-cell time spacing, 0 = default
    std::string h0 = "zero"; // zero | bump
    double h0_amp = 1.0;
    double h0_width = 1.5;

    Lattice lattice() const { return Lattice(d, L, dx); }
    long steps() const;
    double g0() const { return lambda / nu0 * std::sqrt(D0); }
    void validate() const;
};

enum class Equation { kpz, ew, she };

Equation parse_equation(const std::string& s);

// Nearest-neighbour stencils on a periodic lattice.
class LatticeOps {
public:
    explicit LatticeOps(const Lattice& lat) : lat_(lat), nb_(lat.neighbors()) {}
    const Lattice& lattice() const { return lat_; }
    double laplacian(std::span<const double> f, std::size_t i) const;
    double grad2(std::span<const double> f, std::size_t i) const; // centered |grad f|^2

private:
    Lattice lat_;
    std::vector<std::size_t> nb_;
};

void step_kpz(const LatticeOps& ops, const SimConfig& c, std::span<const double> h, std::span<const double> eta,
              std::span<double> out);
void step_ew(const LatticeOps& ops, const SimConfig& c, std::span<const double> h, std::span<const double> eta,
             std::span<double> out);
void step_she(const LatticeOps& ops, const SimConfig& c, std::span<const double> w, std::span<const double> eta,
              std::span<double> out);

std::vector<double> cole_hopf(std::span<const double> h, const SimConfig& c);
std::vector<double> inverse_cole_hopf(std::span<const double> w, const SimConfig& c);

std::vector<double> initial_height(const SimConfig& c);
// h0 at a continuum point, periodic
double initial_height_at(const SimConfig& c, std::span<const double> x);

using SliceObserver = std::function<void(long step, std::span<const double> field)>;

// Advances one trajectory. For she the observed field is w. Observer sees step 0 too.
std::vector<double> run_trajectory(const SimConfig& c, Equation eq, NoiseSource& noise, const SliceObserver& obs = {},
                                   long every = 1);

// Stream key for replica r of this configuration.
StreamKey noise_key(const SimConfig& c, std::uint64_t replica);

// Runs each replica on its own noise stream; result r is f(r, final field).
std::vector<double> run_replicas(const SimConfig& c, Equation eq, std::size_t n,
                                 const std::function<double(std::size_t, std::span<const double>)>& f,
                                 const Mollifier* moll = nullptr);

} // namespace kpz
