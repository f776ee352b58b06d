#pragma once
#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace kpz {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Periodic hypercubic lattice of side L (sites) and spacing dx, d <= 4.
struct Lattice {
    int d = 3;
    int L = 16;
    double dx = 1.0;

    Lattice() = default;
    Lattice(int d_, int L_, double dx_) : d(d_), L(L_), dx(dx_)
    {
        if (d < 1 || d > 4) throw ConfigError("lattice dimension must be in 1..4");
        if (L < 2) throw ConfigError("lattice side must be >= 2");
        if (!(dx > 0)) throw ConfigError("lattice spacing must be positive");
    }

    std::size_t size() const
    {
        std::size_t n = 1;
        for (int i = 0; i < d; ++i) n *= static_cast<std::size_t>(L);
        return n;
    }
    double side() const { return L * dx; }
    double cell_volume() const { return std::pow(dx, d); }

    std::size_t stride(int axis) const
    {
        std::size_t s = 1;
        for (int i = 0; i < axis; ++i) s *= static_cast<std::size_t>(L);
        return s;
    }

    std::array<int, 4> coords(std::size_t idx) const
    {
        std::array<int, 4> c{0, 0, 0, 0};
        for (int i = 0; i < d; ++i) {
            c[i] = static_cast<int>(idx % L);
            idx /= L;
        }
        return c;
    }
    std::size_t index(const std::array<int, 4>& c) const
    {
        std::size_t idx = 0;
        for (int i = d - 1; i >= 0; --i) idx = idx * L + static_cast<std::size_t>(((c[i] % L) + L) % L);
        return idx;
    }

    // neighbor table: nb[2*d*i + 2*a] = +e_a, nb[2*d*i + 2*a + 1] = -e_a
    std::vector<std::size_t> neighbors() const
    {
        const std::size_t n = size();
        std::vector<std::size_t> nb(2 * d * n);
        for (std::size_t i = 0; i < n; ++i) {
            auto c = coords(i);
            for (int a = 0; a < d; ++a) {
                auto p = c, m = c;
                p[a] += 1;
                m[a] -= 1;
                nb[2 * d * i + 2 * a] = index(p);
                nb[2 * d * i + 2 * a + 1] = index(m);
            }
        }
        return nb;
    }

    // eigenvalue of -Laplacian for integer mode vector k
    double laplacian_eigenvalue(const std::array<int, 4>& k) const
    {
        double s = 0.0;
        for (int a = 0; a < d; ++a) {
            double sn = std::sin(M_PI * k[a] / L);
            s += 4.0 * sn * sn;
        }
        return s / (dx * dx);
    }
};

} // namespace kpz
