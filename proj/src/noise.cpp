#include "kpz/noise.hpp"
#include "kpz/quadrature.hpp"

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>
#include <boost/random/normal_distribution.hpp>
#include <fftw3.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <mutex>
#include <ostream>

namespace kpz {

using Spline = boost::math::interpolators::cardinal_cubic_b_spline<double>;

NoiseKind parse_noise_kind(const std::string& s)
{
    if (s == "mollified") return NoiseKind::mollified;
    if (s == "kick") return NoiseKind::kick;
    if (s == "zero") return NoiseKind::zero;
    throw ConfigError("unknown noise kind '" + s + "'");
}

std::string to_string(NoiseKind k)
{
    switch (k) {
    case NoiseKind::mollified: return "mollified";
    case NoiseKind::kick: return "kick";
    case NoiseKind::zero: return "zero";
    }
    return "?";
}

// ---------------------------------------------------------------- Mollifier

struct Mollifier::Tables {
    Spline cov;
    Spline ft;
};

namespace {

double bump(double rho)
{
    const double u = 1.0 - 4.0 * rho * rho;
    return u > 0.0 ? std::exp(-1.0 / u) : 0.0;
}

} // namespace

Mollifier::Mollifier(int d, int table_points) : d_(d)
{
    if (d < 1 || d > 4) throw ConfigError("mollifier dimension must be in 1..4");
    norm_ = 1.0 / mass(200);

    const int n = table_points;
    std::vector<double> cv(n);
    const double h = 1.0 / (n - 1);
    for (int i = 0; i < n; ++i) cv[i] = covariance_direct(i * h, 64);

    const int nf = 4001;
    const double hf = q_max_ / (nf - 1);
    std::vector<double> fv(nf);
    for (int i = 0; i < nf; ++i) fv[i] = fourier_direct(i * hf);

    tab_ = std::make_shared<const Tables>(Tables{Spline(cv.begin(), cv.end(), 0.0, h, 0.0),
                                                 Spline(fv.begin(), fv.end(), 0.0, hf, 0.0)});
}

double Mollifier::profile(double rho) const { return norm_ * bump(rho); }

double Mollifier::operator()(double t, std::span<const double> x) const
{
    double r2 = t * t;
    for (int a = 0; a < d_; ++a) r2 += x[a] * x[a];
    return profile(std::sqrt(r2));
}

double Mollifier::mass(int n) const
{
    const int dim = d_ + 1;
    auto f = [&](double r) { return std::pow(r, dim - 1) * bump(r); };
    double m = sphere_area(dim) * integrate_panels(f, 0.0, 0.5, 8, n / 8 + 4);
    return m * norm_;
}

double Mollifier::covariance_direct(double R, int nq) const
{
    R = std::abs(R);
    if (R >= 1.0) return 0.0;
    const int dim = d_ + 1;
    const double sa = sphere_area(dim - 1);
    auto inner = [&](double s) {
        const double q2 = std::min(0.25 - s * s, 0.25 - (s - R) * (s - R));
        if (q2 <= 0.0) return 0.0;
        const double qm = std::sqrt(q2);
        auto g = [&](double q) {
            return std::pow(q, dim - 2) * profile(std::sqrt(s * s + q * q)) *
                   profile(std::sqrt((s - R) * (s - R) + q * q));
        };
        return sa * integrate_gl(g, 0.0, qm, nq);
    };
    const double lo = R - 0.5, mid = 0.5 * R, hi = 0.5;
    return integrate_gl(inner, lo, mid, nq) + integrate_gl(inner, mid, hi, nq);
}

double Mollifier::covariance_radial(double rho) const
{
    rho = std::abs(rho);
    if (rho >= 1.0) return 0.0;
    return tab_->cov(rho);
}

double Mollifier::covariance(double dt, std::span<const double> dx) const
{
    double r2 = dt * dt;
    for (int a = 0; a < d_; ++a) r2 += dx[a] * dx[a];
    return covariance_radial(std::sqrt(r2));
}

double Mollifier::fourier_direct(double q) const
{
    const int n = d_ + 1;
    if (q < 1e-10) return 1.0;
    const double nu = 0.5 * n - 1.0;
    auto f = [&](double r) { return std::pow(r, 0.5 * n) * std::cyl_bessel_j(nu, q * r) * profile(r); };
    const double I = integrate_panels(f, 0.0, 0.5, 16, 24);
    return std::pow(2.0 * M_PI, 0.5 * n) * std::pow(q, 1.0 - 0.5 * n) * I;
}

double Mollifier::fourier(double q) const
{
    q = std::abs(q);
    if (q >= q_max_) return 0.0;
    return tab_->ft(q);
}

// ---------------------------------------------------------------- sources

void ZeroNoise::fill(long, std::span<double> out) { std::fill(out.begin(), out.end(), 0.0); }

namespace {

long floor_div(long a, long b)
{
    long q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

bool divides(double h, double len)
{
    const double r = len / h;
    return std::abs(r - std::round(r)) < 1e-9 && std::round(r) >= 1;
}

constexpr long kSlabOffset = 1L << 30;

void white_slab(std::uint64_t key, long m, std::size_t ncell, double* out)
{
    CounterRng eng(mix64(key ^ static_cast<std::uint64_t>(m + kSlabOffset)), 0);
    boost::random::normal_distribution<double> nd;
    for (std::size_t c = 0; c < ncell; ++c) out[c] = nd(eng);
}

} // namespace

MollifiedSampler::MollifiedSampler(const Mollifier& m, const Lattice& lat, double dt, std::uint64_t key,
                                   MollifiedParams p)
    : moll_(m), lat_(lat), dt_(dt), key_(key)
{
    if (m.dim() != lat.d) throw ConfigError("mollifier and lattice dimensions differ");
    if (!(dt > 0)) throw ConfigError("dt must be positive");
    if (p.hW > 0) {
        hW_ = p.hW;
        if (!divides(hW_, lat.dx))
            throw ConfigError("noise_h must divide the lattice spacing");
    } else {
        hW_ = 0;
        for (int r = 1; r <= 64; ++r) {
            double h = lat.dx / r;
            if (h <= 0.25 + 1e-12 && divides(h, 0.5)) {
                hW_ = h;
                break;
            }
        }
        if (hW_ == 0) throw ConfigError("no white-cell spacing dividing 1/2 fits this lattice spacing");
    }
    if (hW_ > 0.25 + 1e-12 || !divides(hW_, 0.5))
        throw ConfigError("lattice too coarse to resolve the mollifier support (noise_h must divide 1/2 and be <= 1/4)");
    rs_ = static_cast<int>(std::lround(lat.dx / hW_));

    if (p.hT > 0) {
        rt_ = static_cast<int>(std::lround(p.hT / dt));
        if (rt_ < 1 || std::abs(rt_ * dt - p.hT) > 1e-9 * p.hT)
            throw ConfigError("noise_ht must be a multiple of dt");
    } else {
        rt_ = std::max(1, static_cast<int>(std::floor(0.25 / dt + 1e-9)));
    }
    hT_ = rt_ * dt;
    if (hT_ > 0.25 + 1e-12) throw ConfigError("time step too coarse to resolve the mollifier support");

    const int N = lat.L * rs_;
    ncell_ = 1;
    for (int a = 0; a < lat.d; ++a) ncell_ *= static_cast<std::size_t>(N);
    if (ncell_ > (1UL << 32)) throw ConfigError("white-cell grid too large");

    const int emax = static_cast<int>(std::ceil(0.5 / hW_));
    std::array<int, 4> e{0, 0, 0, 0};
    std::function<void(int)> rec = [&](int a) {
        if (a == lat.d) {
            double r2 = 0;
            for (int b = 0; b < lat.d; ++b) r2 += (e[b] * hW_) * (e[b] * hW_);
            if (r2 < 0.25) offsets_.push_back(e);
            return;
        }
        for (int v = -emax; v <= emax; ++v) {
            e[a] = v;
            rec(a + 1);
        }
        e[a] = 0;
    };
    rec(0);

    const std::size_t ns = lat.size();
    cell_of_.resize(offsets_.size() * ns);
    for (std::size_t i = 0; i < ns; ++i) {
        auto c = lat.coords(i);
        for (std::size_t o = 0; o < offsets_.size(); ++o) {
            std::size_t idx = 0;
            for (int a = lat.d - 1; a >= 0; --a) {
                int v = ((rs_ * c[a] + offsets_[o][a]) % N + N) % N;
                idx = idx * N + v;
            }
            cell_of_[o * ns + i] = static_cast<std::uint32_t>(idx);
        }
    }

    stencil_.resize(rt_);
    for (int ph = 0; ph < rt_; ++ph) {
        const double tp = ph * dt_;
        const int dlo = static_cast<int>(std::ceil((tp - 0.5) / hT_));
        const int dhi = static_cast<int>(std::floor((tp + 0.5) / hT_));
        for (int dm = dlo; dm <= dhi; ++dm) {
            const double tt = tp - dm * hT_;
            for (std::size_t o = 0; o < offsets_.size(); ++o) {
                double w = weight(tt, offsets_[o]);
                if (w != 0.0) stencil_[ph].push_back({dm, o, w});
            }
        }
    }
}

double MollifiedSampler::weight(double tt, const std::array<int, 4>& e) const
{
    double r2 = tt * tt;
    for (int a = 0; a < lat_.d; ++a) r2 += (e[a] * hW_) * (e[a] * hW_);
    return moll_.profile(std::sqrt(r2)) * std::sqrt(hT_ * std::pow(hW_, lat_.d));
}

const std::vector<double>& MollifiedSampler::slab(long m)
{
    auto it = slabs_.find(m);
    if (it != slabs_.end()) return it->second;
    std::vector<double> v(ncell_);
    white_slab(key_, m, ncell_, v.data());
    return slabs_.emplace(m, std::move(v)).first->second;
}

void MollifiedSampler::fill(long step, std::span<double> out)
{
    const std::size_t ns = lat_.size();
    const long m0 = floor_div(step, rt_);
    const int ph = static_cast<int>(step - m0 * rt_);
    const auto& st = stencil_[ph];
    if (!st.empty()) {
        const long keep = m0 + st.front().dm;
        while (!slabs_.empty() && slabs_.begin()->first < keep) slabs_.erase(slabs_.begin());
    }
    std::fill(out.begin(), out.end(), 0.0);
    int cur_dm = INT32_MIN;
    const double* s = nullptr;
    for (const Entry& en : st) {
        if (en.dm != cur_dm) {
            cur_dm = en.dm;
            s = slab(m0 + en.dm).data();
        }
        const std::uint32_t* co = cell_of_.data() + en.off * ns;
        const double w = en.w;
        for (std::size_t i = 0; i < ns; ++i) out[i] += w * s[co[i]];
    }
}

double MollifiedSampler::lattice_covariance(long k1, std::size_t i1, long k2, std::size_t i2) const
{
    const std::size_t ns = lat_.size();
    std::map<std::pair<long, std::uint32_t>, double> a;
    auto collect = [&](long k, std::size_t i, auto&& fn) {
        const long m0 = floor_div(k, rt_);
        const int ph = static_cast<int>(k - m0 * rt_);
        for (const Entry& en : stencil_[ph]) fn(std::make_pair(m0 + en.dm, cell_of_[en.off * ns + i]), en.w);
    };
    collect(k1, i1, [&](auto key, double w) { a[key] += w; });
    double s = 0.0;
    collect(k2, i2, [&](auto key, double w) {
        auto it = a.find(key);
        if (it != a.end()) s += it->second * w;
    });
    return s;
}

// ---------------------------------------------------------------- kick

namespace {
std::mutex& fftw_mutex()
{
    static std::mutex mu;
    return mu;
}
} // namespace

struct KickSampler::Plan {
    int nreal = 0;
    int ncomplex = 0;
    double* real = nullptr;
    fftw_complex* spec = nullptr;
    fftw_plan fwd = nullptr;
    fftw_plan bwd = nullptr;
    std::vector<double> damp; // per complex mode: e^{-c lambda_k} / N
    ~Plan()
    {
        std::lock_guard<std::mutex> lock(fftw_mutex());
        if (fwd) fftw_destroy_plan(fwd);
        if (bwd) fftw_destroy_plan(bwd);
        fftw_free(real);
        fftw_free(spec);
    }
};

namespace {

// lattice eigenvalues per r2c complex mode, fastest axis halved
std::vector<double> r2c_eigenvalues(const Lattice& lat)
{
    const int L = lat.L, Lh = L / 2 + 1;
    std::size_t nc = Lh;
    for (int a = 1; a < lat.d; ++a) nc *= L;
    std::vector<double> ev(nc);
    for (std::size_t c = 0; c < nc; ++c) {
        std::size_t r = c;
        std::array<int, 4> k{0, 0, 0, 0};
        k[0] = static_cast<int>(r % Lh);
        r /= Lh;
        for (int a = 1; a < lat.d; ++a) {
            k[a] = static_cast<int>(r % L);
            r /= L;
        }
        ev[c] = lat.laplacian_eigenvalue(k);
    }
    return ev;
}

} // namespace

KickSampler::KickSampler(const Lattice& lat, double dt, std::uint64_t key, double c)
    : lat_(lat), dt_(dt), key_(key), c_(c), plan_(std::make_unique<Plan>())
{
    if (c < 0) throw ConfigError("kick smoothing must be >= 0");
    const std::size_t n = lat.size();
    std::vector<int> dims(lat.d, lat.L);
    auto ev = r2c_eigenvalues(lat);
    plan_->nreal = static_cast<int>(n);
    plan_->ncomplex = static_cast<int>(ev.size());
    {
        std::lock_guard<std::mutex> lock(fftw_mutex());
        plan_->real = fftw_alloc_real(n);
        plan_->spec = fftw_alloc_complex(ev.size());
        plan_->fwd = fftw_plan_dft_r2c(lat.d, dims.data(), plan_->real, plan_->spec, FFTW_ESTIMATE);
        plan_->bwd = fftw_plan_dft_c2r(lat.d, dims.data(), plan_->spec, plan_->real, FFTW_ESTIMATE);
    }
    plan_->damp.resize(ev.size());
    for (std::size_t i = 0; i < ev.size(); ++i) plan_->damp[i] = std::exp(-c_ * ev[i]) / static_cast<double>(n);

    // covariance table: (1/dx^d) e^{2c Delta} delta
    const double vol = lat.cell_volume();
    for (std::size_t i = 0; i < ev.size(); ++i) {
        plan_->spec[i][0] = std::exp(-2.0 * c_ * ev[i]) / (static_cast<double>(n) * vol);
        plan_->spec[i][1] = 0.0;
    }
    fftw_execute(plan_->bwd);
    cov_.assign(plan_->real, plan_->real + n);
    field_.resize(n);
}

KickSampler::~KickSampler() = default;

double KickSampler::spatial_covariance(const std::array<int, 4>& offset) const
{
    return cov_[lat_.index(offset)];
}

const std::vector<double>& KickSampler::interval(long nint)
{
    if (nint == cached_) return field_;
    const std::size_t n = lat_.size();
    const double s = 1.0 / std::sqrt(lat_.cell_volume());
    std::vector<double> w(n);
    white_slab(key_, nint, n, w.data());
    for (std::size_t i = 0; i < n; ++i) plan_->real[i] = s * w[i];
    fftw_execute(plan_->fwd);
    for (int i = 0; i < plan_->ncomplex; ++i) {
        plan_->spec[i][0] *= plan_->damp[i];
        plan_->spec[i][1] *= plan_->damp[i];
    }
    fftw_execute(plan_->bwd);
    std::copy(plan_->real, plan_->real + n, field_.begin());
    cached_ = nint;
    return field_;
}

void KickSampler::fill(long step, std::span<double> out)
{
    const long nint = static_cast<long>(std::floor(step * dt_ + 1e-9));
    const auto& f = interval(nint);
    std::copy(f.begin(), f.end(), out.begin());
}

// ---------------------------------------------------------------- continuum

ContinuumNoise::ContinuumNoise(const Mollifier& m, double Ls, double hW, double hT, double t_max,
                               std::uint64_t key)
    : moll_(m), Ls_(Ls), hW_(hW), hT_(hT)
{
    if (!divides(hW, Ls)) throw ConfigError("noise_h must divide the torus side");
    if (hW > 0.25 + 1e-12 || !divides(hW, 0.5)) throw ConfigError("noise_h must divide 1/2 and be <= 1/4");
    if (hT > 0.25 + 1e-12) throw ConfigError("noise_ht must be <= 1/4");
    n_ = static_cast<int>(std::lround(Ls / hW));
    m_lo_ = static_cast<long>(std::floor(-0.5 / hT)) - 1;
    m_hi_ = static_cast<long>(std::ceil((t_max + 0.5) / hT)) + 1;
    std::size_t ncell = 1;
    for (int a = 0; a < m.dim(); ++a) ncell *= static_cast<std::size_t>(n_);
    white_.resize(ncell * (m_hi_ - m_lo_ + 1));
    for (long mm = m_lo_; mm <= m_hi_; ++mm) white_slab(key, mm, ncell, white_.data() + (mm - m_lo_) * ncell);
    scale_ = std::sqrt(hT * std::pow(hW, m.dim()));
}

double ContinuumNoise::eval(double t, std::span<const double> x) const
{
    const int d = moll_.dim();
    const long mlo = static_cast<long>(std::ceil((t - 0.5) / hT_));
    const long mhi = static_cast<long>(std::floor((t + 0.5) / hT_));
    if (mlo < m_lo_ || mhi > m_hi_) throw ConfigError("continuum noise evaluated beyond its horizon");
    std::size_t ncell = 1;
    for (int a = 0; a < d; ++a) ncell *= static_cast<std::size_t>(n_);
    double sum = 0.0;
    std::array<long, 4> lo{}, hi{}, l{};
    for (long mm = mlo; mm <= mhi; ++mm) {
        const double tt = t - mm * hT_;
        const double rem = 0.25 - tt * tt;
        if (rem <= 0) continue;
        const double r = std::sqrt(rem);
        for (int a = 0; a < d; ++a) {
            lo[a] = static_cast<long>(std::ceil((x[a] - r) / hW_));
            hi[a] = static_cast<long>(std::floor((x[a] + r) / hW_));
            l[a] = lo[a];
        }
        const double* slab = white_.data() + (mm - m_lo_) * ncell;
        while (true) {
            double r2 = tt * tt;
            std::size_t idx = 0;
            for (int a = d - 1; a >= 0; --a) {
                const double dxa = x[a] - l[a] * hW_;
                r2 += dxa * dxa;
                idx = idx * n_ + static_cast<std::size_t>(((l[a] % n_) + n_) % n_);
            }
            if (r2 < 0.25) sum += moll_.profile(std::sqrt(r2)) * slab[idx];
            int a = 0;
            while (a < d && ++l[a] > hi[a]) {
                l[a] = lo[a];
                ++a;
            }
            if (a == d) break;
        }
    }
    return sum * scale_;
}

void ContinuumNoise::fill(double t, const Lattice& lat, std::span<double> out) const
{
    if (std::abs(lat.side() - Ls_) > 1e-9 * Ls_) throw ConfigError("lattice does not cover the noise torus");
    std::array<double, 4> x{};
    for (std::size_t i = 0; i < lat.size(); ++i) {
        auto c = lat.coords(i);
        for (int a = 0; a < lat.d; ++a) x[a] = c[a] * lat.dx;
        out[i] = eval(t, std::span<const double>(x.data(), lat.d));
    }
}

// ---------------------------------------------------------------- stored field

double NoiseField::interpolate(double t, std::span<const double> x) const
{
    const int d = lat.d;
    double u = t / dt;
    long k = static_cast<long>(std::floor(u));
    k = std::clamp(k, 0L, nt - 2);
    const double ft = std::clamp(u - k, 0.0, 1.0);
    std::array<int, 4> base{};
    std::array<double, 4> fr{};
    for (int a = 0; a < d; ++a) {
        double y = x[a] / lat.dx;
        double fl = std::floor(y);
        base[a] = static_cast<int>(fl);
        fr[a] = y - fl;
    }
    double s = 0.0;
    const std::size_t ns = lat.size();
    for (int corner = 0; corner < (1 << d); ++corner) {
        double w = 1.0;
        std::array<int, 4> c{};
        for (int a = 0; a < d; ++a) {
            const int bit = (corner >> a) & 1;
            c[a] = base[a] + bit;
            w *= bit ? fr[a] : 1.0 - fr[a];
        }
        if (w == 0.0) continue;
        const std::size_t i = lat.index(c);
        s += w * ((1.0 - ft) * values[k * ns + i] + ft * values[(k + 1) * ns + i]);
    }
    return s;
}

NoiseField record_noise(NoiseSource& src, const Lattice& lat, double dt, long nt)
{
    NoiseField f;
    f.lat = lat;
    f.dt = dt;
    f.nt = nt;
    f.kind = src.kind();
    f.values.resize(static_cast<std::size_t>(nt) * lat.size());
    for (long k = 0; k < nt; ++k)
        src.fill(k, std::span<double>(f.values.data() + k * lat.size(), lat.size()));
    return f;
}

std::unique_ptr<NoiseSource> make_noise(NoiseKind kind, const Mollifier* m, const Lattice& lat, double dt,
                                        std::uint64_t key, double kick_c, MollifiedParams p)
{
    switch (kind) {
    case NoiseKind::mollified:
        if (!m) throw ConfigError("mollified noise needs a mollifier");
        return std::make_unique<MollifiedSampler>(*m, lat, dt, key, p);
    case NoiseKind::kick: return std::make_unique<KickSampler>(lat, dt, key, kick_c);
    case NoiseKind::zero: return std::make_unique<ZeroNoise>();
    }
    throw ConfigError("unknown noise kind");
}

void write_noise_field(const NoiseField& f, const std::string& path)
{
    nlohmann::json h;
    h["format"] = "kpz-field-v1";
    h["shape"] = {f.nt, f.lat.size()};
    h["d"] = f.lat.d;
    h["L"] = f.lat.L;
    h["dx"] = f.lat.dx;
    h["dt"] = f.dt;
    h["kind"] = to_string(f.kind);
    h["seed"] = f.seed;
    h["replica"] = f.replica;
    const std::string hs = h.dump();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path);
    std::uint64_t n = hs.size();
    os.write(reinterpret_cast<const char*>(&n), sizeof n);
    os.write(hs.data(), static_cast<std::streamsize>(n));
    os.write(reinterpret_cast<const char*>(f.values.data()),
             static_cast<std::streamsize>(f.values.size() * sizeof(double)));
}

NoiseField read_noise_field(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    std::uint64_t n = 0;
    is.read(reinterpret_cast<char*>(&n), sizeof n);
    std::string hs(n, '\0');
    is.read(hs.data(), static_cast<std::streamsize>(n));
    auto h = nlohmann::json::parse(hs);
    if (h.value("format", "") != "kpz-field-v1") throw std::runtime_error("bad field header in " + path);
    NoiseField f;
    f.lat = Lattice(h["d"], h["L"], h["dx"]);
    f.dt = h["dt"];
    f.nt = h["shape"][0];
    f.kind = parse_noise_kind(h["kind"]);
    f.seed = h["seed"];
    f.replica = h["replica"];
    f.values.resize(static_cast<std::size_t>(f.nt) * f.lat.size());
    is.read(reinterpret_cast<char*>(f.values.data()), static_cast<std::streamsize>(f.values.size() * sizeof(double)));
    if (!is) throw std::runtime_error("truncated field file " + path);
    return f;
}

void write_covariance_csv(const Mollifier& m, std::ostream& os, int n_dt, int n_dx)
{
    os << "dt,abs_dx,value\n";
    std::array<double, 4> x{};
    for (int i = 0; i < n_dt; ++i)
        for (int j = 0; j < n_dx; ++j) {
            const double t = i / double(n_dt - 1), r = j / double(n_dx - 1);
            x[0] = r;
            os << t << ',' << r << ',' << m.covariance(t, std::span<const double>(x.data(), m.dim())) << '\n';
        }
}

// ---------------------------------------------------------------- large fields

int classify_value(double sup_abs, double lambda)
{
    const double thr = 1.0 / std::sqrt(lambda);
    if (sup_abs <= thr) return -1;
    int k = 0;
    while (sup_abs > thr * std::ldexp(1.0, k + 1)) ++k;
    return k;
}

BoxClassification classify_boxes(const NoiseField& f, double lambda)
{
    if (!(lambda > 0)) throw ConfigError("lambda must be positive for box classification");
    BoxClassification bc;
    bc.n_space = std::max(1, static_cast<int>(std::floor(f.lat.side() + 1e-9)));
    bc.n_time = std::max(1L, static_cast<long>(std::floor(f.horizon() + 1e-9)));
    std::size_t nsb = 1;
    for (int a = 0; a < f.lat.d; ++a) nsb *= static_cast<std::size_t>(bc.n_space);
    bc.sups.assign(nsb * bc.n_time, 0.0);
    const std::size_t ns = f.lat.size();
    std::vector<std::size_t> box_of(ns);
    for (std::size_t i = 0; i < ns; ++i) {
        auto c = f.lat.coords(i);
        std::size_t b = 0;
        for (int a = f.lat.d - 1; a >= 0; --a)
            b = b * bc.n_space + std::min<std::size_t>(bc.n_space - 1, static_cast<std::size_t>(c[a] * f.lat.dx + 1e-9));
        box_of[i] = b;
    }
    for (long k = 0; k < f.nt; ++k) {
        const long tb = static_cast<long>(std::floor(k * f.dt + 1e-9));
        if (tb >= bc.n_time) continue;
        for (std::size_t i = 0; i < ns; ++i) {
            double& s = bc.sups[tb * nsb + box_of[i]];
            s = std::max(s, std::abs(f.at(k, i)));
        }
    }
    bc.labels.resize(bc.sups.size());
    for (std::size_t b = 0; b < bc.sups.size(); ++b) bc.labels[b] = classify_value(bc.sups[b], lambda);
    return bc;
}

} // namespace kpz
