#pragma once
#include "kpz/lattice.hpp"
#include "kpz/rng.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace kpz {

enum class NoiseKind { mollified, kick, zero };

NoiseKind parse_noise_kind(const std::string& s);
std::string to_string(NoiseKind k);

// Radial bump exp(-1/(1-4 rho^2)) on the space-time ball of radius 1/2, unit mass.
class Mollifier {
public:
    explicit Mollifier(int d, int table_points = 1025);

    int dim() const { return d_; }
    double radius() const { return 0.5; }

    double profile(double rho) const;
    double operator()(double t, std::span<const double> x) const;

    // (omega*omega) as a function of the space-time distance
    double covariance_radial(double rho) const;
    double covariance(double dt, std::span<const double> dx) const;
    // direct bipolar quadrature of order n (no table)
    double covariance_direct(double rho, int n) const;

    // Fourier transform in R^(d+1), radial
    double fourier(double q) const;

    double mass(int n = 200) const;
    double self_overlap() const { return covariance_radial(0.0); }
    // integral of (omega*omega) over space-time
    double covariance_integral() const { return 1.0; }

private:
    int d_;
    double norm_ = 1.0;
    double q_max_ = 80.0;
    struct Tables;
    std::shared_ptr<const Tables> tab_;
    double fourier_direct(double q) const;
};

// Time-indexed source of lattice noise slices eta(k*dt, .).
class NoiseSource {
public:
    virtual ~NoiseSource() = default;
    virtual void fill(long step, std::span<double> out) = 0;
    virtual NoiseKind kind() const = 0;
};

class ZeroNoise : public NoiseSource {
public:
    void fill(long, std::span<double> out) override;
    NoiseKind kind() const override { return NoiseKind::zero; }
};

struct MollifiedParams {
    double hW = 0.0; // white-cell spacing in space, 0 = default
    double hT = 0.0; // white-cell spacing in time, 0 = default
};

// Point samples of omega convolved with white cells on a finer space-time grid.
class MollifiedSampler : public NoiseSource {
public:
    MollifiedSampler(const Mollifier& m, const Lattice& lat, double dt, std::uint64_t key,
                     MollifiedParams p = {});

    void fill(long step, std::span<double> out) override;
    NoiseKind kind() const override { return NoiseKind::mollified; }

    double hW() const { return hW_; }
    double hT() const { return hT_; }
    int rs() const { return rs_; }
    int rt() const { return rt_; }

    // exact covariance of the sampled field between (k1, site i1) and (k2, site i2)
    double lattice_covariance(long k1, std::size_t i1, long k2, std::size_t i2) const;

private:
    struct Entry {
        int dm;          // time-cell offset from floor(k / rt)
        std::size_t off; // spatial offset id
        double w;
    };
    const Mollifier& moll_;
    Lattice lat_;
    double dt_;
    std::uint64_t key_;
    double hW_, hT_;
    int rs_, rt_;
    std::size_t ncell_;
    std::vector<std::array<int, 4>> offsets_;
    std::vector<std::uint32_t> cell_of_; // offsets_.size() x sites
    std::vector<std::vector<Entry>> stencil_; // per phase
    std::map<long, std::vector<double>> slabs_;

    const std::vector<double>& slab(long m);
    double weight(double tt, const std::array<int, 4>& e) const;
};

// Kick force: piecewise constant in time on [n, n+1), spatial smoothing e^{c Delta}.
class KickSampler : public NoiseSource {
public:
    KickSampler(const Lattice& lat, double dt, std::uint64_t key, double c = 0.25);
    ~KickSampler() override;
    KickSampler(const KickSampler&) = delete;
    KickSampler& operator=(const KickSampler&) = delete;

    void fill(long step, std::span<double> out) override;
    NoiseKind kind() const override { return NoiseKind::kick; }

    const std::vector<double>& interval(long n);
    // exact spatial covariance of the smoothed lattice field at site offset
    double spatial_covariance(const std::array<int, 4>& offset) const;
    double c() const { return c_; }

private:
    Lattice lat_;
    double dt_;
    std::uint64_t key_;
    double c_;
    long cached_ = -1;
    std::vector<double> field_;
    std::vector<double> cov_;
    struct Plan;
    std::unique_ptr<Plan> plan_;
};

// Random-access mollified noise on a fixed torus of side Ls, independent of any lattice.
class ContinuumNoise {
public:
    ContinuumNoise(const Mollifier& m, double Ls, double hW, double hT, double t_max, std::uint64_t key);
    double eval(double t, std::span<const double> x) const;
    // fills eta(t, i*dx) for a lattice with lat.side() == Ls
    void fill(double t, const Lattice& lat, std::span<double> out) const;

private:
    const Mollifier& moll_;
    double Ls_, hW_, hT_;
    int n_;
    long m_lo_, m_hi_;
    std::vector<double> white_;
    double scale_;
};

class ContinuumLatticeNoise : public NoiseSource {
public:
    ContinuumLatticeNoise(const ContinuumNoise& c, const Lattice& lat, double dt) : c_(c), lat_(lat), dt_(dt) {}
    void fill(long step, std::span<double> out) override { c_.fill(step * dt_, lat_, out); }
    NoiseKind kind() const override { return NoiseKind::mollified; }

private:
    const ContinuumNoise& c_;
    Lattice lat_;
    double dt_;
};

// Stored realization on (time step, site).
struct NoiseField {
    Lattice lat;
    double dt = 0.0;
    long nt = 0; // number of stored slices, times 0..nt-1
    NoiseKind kind = NoiseKind::mollified;
    std::uint64_t seed = 0;
    std::uint64_t replica = 0;
    std::vector<double> values;

    double at(long k, std::size_t i) const { return values[k * lat.size() + i]; }
    std::span<const double> slice(long k) const { return {values.data() + k * lat.size(), lat.size()}; }
    double horizon() const { return (nt - 1) * dt; }
    // multilinear interpolation in (t, x); x in physical units, periodic
    double interpolate(double t, std::span<const double> x) const;
};

NoiseField record_noise(NoiseSource& src, const Lattice& lat, double dt, long nt);
// kind-dispatching sampler construction
std::unique_ptr<NoiseSource> make_noise(NoiseKind kind, const Mollifier* m, const Lattice& lat, double dt,
                                        std::uint64_t key, double kick_c = 0.25, MollifiedParams p = {});

void write_noise_field(const NoiseField& f, const std::string& path);
NoiseField read_noise_field(const std::string& path);
void write_covariance_csv(const Mollifier& m, std::ostream& os, int n_dt = 21, int n_dx = 21);

// Large-field labels on unit boxes: -1 = small, k >= 0 = size-k large field.
int classify_value(double sup_abs, double lambda);

struct BoxClassification {
    std::vector<int> labels;
    std::vector<double> sups;
    long n_time = 0;
    int n_space = 0; // boxes per axis
};

BoxClassification classify_boxes(const NoiseField& f, double lambda);

} // namespace kpz
