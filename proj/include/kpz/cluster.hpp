#pragma once
#include "kpz/rng.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace kpz {

// Sparse multivariate polynomial with real coefficients.
class Polynomial {
public:
    using Exponents = std::vector<std::uint8_t>;

    explicit Polynomial(int nvars = 0) : n_(nvars) {}
    static Polynomial constant(int nvars, double c);
    static Polynomial variable(int nvars, int i);

    int nvars() const { return n_; }
    const std::map<Exponents, double>& terms() const { return terms_; }
    void add_term(const Exponents& e, double c);

    Polynomial operator+(const Polynomial& o) const;
    Polynomial operator-(const Polynomial& o) const;
    Polynomial operator*(const Polynomial& o) const;
    Polynomial operator*(double s) const;

    Polynomial derivative(int i) const;
    double eval(std::span<const double> x) const;
    int total_degree() const;
    int max_var_degree() const;
    bool depends_on(int i) const;
    bool is_zero() const { return terms_.empty(); }

private:
    int n_;
    std::map<Exponents, double> terms_;
};

struct DegreeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// index of unordered pair {p, q} among n objects
int pair_index(int n, int p, int q);
std::pair<int, int> pair_of(int n, int idx);
inline int pair_count(int n) { return n * (n - 1) / 2; }

struct ObjectSet {
    int n = 0;
    std::vector<std::pair<int, int>> allowed; // p < q
    std::vector<int> type;                    // 1 or 2; empty = all type 1

    static ObjectSet complete(int n);
    bool is_allowed(int p, int q) const;
    int type_of(int i) const { return type.empty() ? 1 : type[i]; }
};

struct Forest {
    std::vector<std::pair<int, int>> links; // p < q
};

constexpr int kMaxObjects = 8;

std::vector<Forest> enumerate_forests(const ObjectSet& o);
// forests in which every component holds at most one type-2 object, no type-2/type-2 links
std::vector<Forest> enumerate_restricted_forests(const ObjectSet& o);

// s-matrix over all pairs (pair_index order): path minimum, 0 across components.
// merge_type2 treats all type-2 objects as one vertex (type-2 pairs get 1).
std::vector<double> interpolation_matrix(const ObjectSet& o, const Forest& f, std::span<const double> w,
                                         bool merge_type2 = false);

// integral over [0,1]^links of (prod d/ds_l) F evaluated at s(w), exact
double forest_term(const Polynomial& F, const ObjectSet& o, const Forest& f, bool merge_type2 = false);

double bkar_sum(const Polynomial& F, const ObjectSet& o);
double bkar2_sum(const Polynomial& F, const ObjectSet& o, std::vector<double>* per_forest = nullptr,
                 std::vector<Forest>* forests = nullptr);

// Weakened non-overlap indicator over polymers (objects of the cluster expansion).
struct Polymer {
    std::vector<int> boxes;
    std::vector<int> external; // subset of boxes, never weakened
};

class MayerWeakening {
public:
    explicit MayerWeakening(std::vector<Polymer> polymers);
    int size() const { return static_cast<int>(polys_.size()); }
    // number of shared non-external boxes between p and q
    int overlaps(int p, int q) const { return m_[pair_index(size(), p, q)]; }
    double value(std::span<const double> S) const;
    // mixed derivative over the listed pair indices, evaluated at S
    double derivative(std::span<const int> pairs, std::span<const double> S) const;
    Polynomial polynomial() const;
    double indicator() const; // 1 if no polymers share a box

private:
    std::vector<Polymer> polys_;
    std::vector<int> m_;
};

// Gaussian moments by pairing: covariance entries are linear in s.
struct LinearCovariance {
    int k = 0;
    std::vector<double> c0; // k*k
    std::vector<double> c1; // k*k, zero diagonal
    double at(int i, int j, double s) const { return c0[i * k + j] + s * c1[i * k + j]; }
};

// <F>_s as coefficients of a polynomial in s
std::vector<double> wick_expectation(const Polynomial& F, const LinearCovariance& C);

struct DsIdentityReport {
    std::vector<double> lhs; // d/ds <F>_s coefficients
    std::vector<double> rhs; // sum_pairs C1_ij <d_i d_j F>_s coefficients
    double max_abs_diff = 0.0;
};

DsIdentityReport gaussian_ds_identity_check(const LinearCovariance& C, const Polynomial& F);

// Set partitions in restricted-growth-string order, each as a list of blocks (0-based).
using SetPartition = std::vector<std::vector<int>>;
std::vector<SetPartition> set_partitions(int n);

std::vector<std::pair<SetPartition, long long>> log_derivative_coeffs(int n);
// symbolic differentiation of log w, term by term
std::map<SetPartition, long long> log_derivative_symbolic(int n);

// random polynomial in the listed variables, coefficients uniform in [-1, 1]
Polynomial random_polynomial(int nvars, int max_deg, int nterms, const std::vector<int>& vars, CounterRng& rng);

struct IdentityCheck {
    std::string name;
    long cases = 0;
    double max_error = 0.0;
    double tolerance = 0.0;
    bool pass() const { return max_error <= tolerance; }
};

// bkar (all link subsets, n <= max_n), bkar2 (all type labelings), log-derivative (n <= 5)
// and the Gaussian ds-identity on random functionals
std::vector<IdentityCheck> cluster_identity_suite(std::uint64_t seed, int functionals = 50, int max_n = 4);

} // namespace kpz
