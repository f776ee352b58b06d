#pragma once
#include <cmath>
#include <functional>
#include <vector>

namespace kpz {

struct GaussRule {
    std::vector<double> x;
    std::vector<double> w;
};

// Gauss-Legendre nodes on [a,b]; cached per n
const GaussRule& gauss_legendre(int n);
GaussRule gauss_legendre(int n, double a, double b);

double integrate_gl(const std::function<double(double)>& f, double a, double b, int n);

// composite rule: m panels of n-point Gauss-Legendre
double integrate_panels(const std::function<double(double)>& f, double a, double b, int panels, int n);

inline double sphere_area(int dim) // surface of unit sphere in R^dim
{
    return 2.0 * std::pow(M_PI, 0.5 * dim) / std::tgamma(0.5 * dim);
}

} // namespace kpz
