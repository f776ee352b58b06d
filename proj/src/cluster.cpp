#include "kpz/cluster.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace kpz {

// ---------------------------------------------------------------- Polynomial

Polynomial Polynomial::constant(int nvars, double c)
{
    Polynomial p(nvars);
    p.add_term(Exponents(nvars, 0), c);
    return p;
}

Polynomial Polynomial::variable(int nvars, int i)
{
    Polynomial p(nvars);
    Exponents e(nvars, 0);
    e[i] = 1;
    p.add_term(e, 1.0);
    return p;
}

void Polynomial::add_term(const Exponents& e, double c)
{
    if (c == 0.0) return;
    auto it = terms_.find(e);
    if (it == terms_.end()) {
        terms_.emplace(e, c);
        return;
    }
    it->second += c;
    if (it->second == 0.0) terms_.erase(it);
}

Polynomial Polynomial::operator+(const Polynomial& o) const
{
    Polynomial r = *this;
    for (const auto& [e, c] : o.terms_) r.add_term(e, c);
    return r;
}

Polynomial Polynomial::operator-(const Polynomial& o) const { return *this + o * -1.0; }

Polynomial Polynomial::operator*(const Polynomial& o) const
{
    Polynomial r(n_);
    for (const auto& [a, ca] : terms_)
        for (const auto& [b, cb] : o.terms_) {
            Exponents e(n_);
            for (int i = 0; i < n_; ++i) e[i] = static_cast<std::uint8_t>(a[i] + b[i]);
            r.add_term(e, ca * cb);
        }
    return r;
}

Polynomial Polynomial::operator*(double s) const
{
    Polynomial r(n_);
    for (const auto& [e, c] : terms_) r.add_term(e, c * s);
    return r;
}

Polynomial Polynomial::derivative(int i) const
{
    Polynomial r(n_);
    for (const auto& [e, c] : terms_) {
        if (e[i] == 0) continue;
        Exponents f = e;
        f[i] -= 1;
        r.add_term(f, c * e[i]);
    }
    return r;
}

double Polynomial::eval(std::span<const double> x) const
{
    double s = 0.0;
    for (const auto& [e, c] : terms_) {
        double m = c;
        for (int i = 0; i < n_; ++i)
            for (int k = 0; k < e[i]; ++k) m *= x[i];
        s += m;
    }
    return s;
}

int Polynomial::total_degree() const
{
    int d = 0;
    for (const auto& [e, c] : terms_) d = std::max(d, std::accumulate(e.begin(), e.end(), 0));
    return d;
}

int Polynomial::max_var_degree() const
{
    int d = 0;
    for (const auto& [e, c] : terms_)
        for (auto v : e) d = std::max<int>(d, v);
    return d;
}

bool Polynomial::depends_on(int i) const
{
    for (const auto& [e, c] : terms_)
        if (e[i] > 0) return true;
    return false;
}

// ---------------------------------------------------------------- objects and forests

int pair_index(int n, int p, int q)
{
    if (p > q) std::swap(p, q);
    return p * n - p * (p + 1) / 2 + (q - p - 1);
}

std::pair<int, int> pair_of(int n, int idx)
{
    for (int p = 0; p < n; ++p) {
        const int row = n - p - 1;
        if (idx < row) return {p, p + 1 + idx};
        idx -= row;
    }
    return {-1, -1};
}

ObjectSet ObjectSet::complete(int n)
{
    ObjectSet o;
    o.n = n;
    for (int p = 0; p < n; ++p)
        for (int q = p + 1; q < n; ++q) o.allowed.emplace_back(p, q);
    return o;
}

bool ObjectSet::is_allowed(int p, int q) const
{
    if (p > q) std::swap(p, q);
    return std::find(allowed.begin(), allowed.end(), std::make_pair(p, q)) != allowed.end();
}

namespace {

void check_size(const ObjectSet& o)
{
    if (o.n > kMaxObjects) {
        const double est = std::sqrt(std::exp(1.0)) * std::pow(double(o.n), o.n - 2);
        std::ostringstream ss;
        ss << "refusing to enumerate forests on " << o.n << " objects (about " << est << " forests)";
        throw std::length_error(ss.str());
    }
}

struct Dsu {
    std::vector<int> parent;
    std::vector<int> roots2; // type-2 count per root
    explicit Dsu(const ObjectSet& o) : parent(o.n), roots2(o.n)
    {
        std::iota(parent.begin(), parent.end(), 0);
        for (int i = 0; i < o.n; ++i) roots2[i] = o.type_of(i) == 2 ? 1 : 0;
    }
    int find(int x) const
    {
        while (parent[x] != x) x = parent[x];
        return x;
    }
};

void enumerate(const ObjectSet& o, std::size_t next, Dsu& dsu, Forest& cur, bool restricted,
               std::vector<Forest>& out)
{
    if (next == o.allowed.size()) {
        out.push_back(cur);
        return;
    }
    enumerate(o, next + 1, dsu, cur, restricted, out);
    auto [p, q] = o.allowed[next];
    const int a = dsu.find(p), b = dsu.find(q);
    if (a == b) return;
    if (restricted && dsu.roots2[a] + dsu.roots2[b] > 1) return;
    dsu.parent[b] = a;
    dsu.roots2[a] += dsu.roots2[b];
    cur.links.emplace_back(std::min(p, q), std::max(p, q));
    enumerate(o, next + 1, dsu, cur, restricted, out);
    cur.links.pop_back();
    dsu.roots2[a] -= dsu.roots2[b];
    dsu.parent[b] = b;
}

// bitmask of links on the path between every pair, or -1 if disconnected; -2 marks merged pairs
std::vector<long> path_masks(const ObjectSet& o, const Forest& f, bool merge)
{
    const int n = o.n;
    std::vector<int> vid(n);
    int merged = -1;
    int nv = 0;
    for (int i = 0; i < n; ++i) {
        if (merge && o.type_of(i) == 2) {
            if (merged < 0) merged = nv++;
            vid[i] = merged;
        } else {
            vid[i] = nv++;
        }
    }
    std::vector<std::vector<std::pair<int, int>>> adj(nv);
    for (std::size_t l = 0; l < f.links.size(); ++l) {
        const int a = vid[f.links[l].first], b = vid[f.links[l].second];
        adj[a].emplace_back(b, static_cast<int>(l));
        adj[b].emplace_back(a, static_cast<int>(l));
    }
    // masks from every vertex
    std::vector<std::vector<long>> from(nv, std::vector<long>(nv, -1));
    for (int s = 0; s < nv; ++s) {
        from[s][s] = 0;
        std::vector<int> stack{s};
        while (!stack.empty()) {
            int u = stack.back();
            stack.pop_back();
            for (auto [v, l] : adj[u])
                if (from[s][v] < 0) {
                    from[s][v] = from[s][u] | (1L << l);
                    stack.push_back(v);
                }
        }
    }
    std::vector<long> m(pair_count(n));
    for (int p = 0; p < n; ++p)
        for (int q = p + 1; q < n; ++q) {
            long v = from[vid[p]][vid[q]];
            if (vid[p] == vid[q]) v = -2;
            m[pair_index(n, p, q)] = v;
        }
    return m;
}

} // namespace

std::vector<Forest> enumerate_forests(const ObjectSet& o)
{
    check_size(o);
    ObjectSet plain = o;
    plain.type.clear();
    Dsu dsu(plain);
    Forest cur;
    std::vector<Forest> out;
    enumerate(plain, 0, dsu, cur, false, out);
    return out;
}

std::vector<Forest> enumerate_restricted_forests(const ObjectSet& o)
{
    check_size(o);
    Dsu dsu(o);
    Forest cur;
    std::vector<Forest> out;
    enumerate(o, 0, dsu, cur, true, out);
    return out;
}

std::vector<double> interpolation_matrix(const ObjectSet& o, const Forest& f, std::span<const double> w,
                                         bool merge_type2)
{
    auto masks = path_masks(o, f, merge_type2);
    std::vector<double> s(masks.size());
    for (std::size_t i = 0; i < masks.size(); ++i) {
        if (masks[i] == -2) {
            s[i] = 1.0;
        } else if (masks[i] < 0) {
            s[i] = 0.0;
        } else {
            double m = 1.0;
            for (std::size_t l = 0; l < f.links.size(); ++l)
                if (masks[i] & (1L << l)) m = std::min(m, w[l]);
            s[i] = m;
        }
    }
    return s;
}

double forest_term(const Polynomial& F, const ObjectSet& o, const Forest& f, bool merge_type2)
{
    Polynomial G = F;
    for (auto [p, q] : f.links) {
        G = G.derivative(pair_index(o.n, p, q));
        if (G.is_zero()) return 0.0;
    }
    const int k = static_cast<int>(f.links.size());
    const auto masks = path_masks(o, f, merge_type2);

    struct Mono {
        double c;
        std::vector<std::pair<long, int>> factors; // (path mask, exponent)
    };
    std::vector<Mono> monos;
    for (const auto& [e, c] : G.terms()) {
        Mono m{c, {}};
        bool zero = false;
        for (std::size_t i = 0; i < e.size(); ++i) {
            if (e[i] == 0 || masks[i] == -2) continue;
            if (masks[i] < 0) {
                zero = true;
                break;
            }
            m.factors.emplace_back(masks[i], e[i]);
        }
        if (!zero) monos.push_back(std::move(m));
    }
    if (monos.empty()) return 0.0;

    std::vector<int> order(k), rank(k);
    std::iota(order.begin(), order.end(), 0);
    double total = 0.0;
    std::vector<int> b(k);
    do {
        for (int r = 0; r < k; ++r) rank[order[r]] = r;
        for (const Mono& m : monos) {
            std::fill(b.begin(), b.end(), 0);
            for (auto [mask, a] : m.factors) {
                int best = k;
                for (int l = 0; l < k; ++l)
                    if ((mask >> l) & 1) best = std::min(best, rank[l]);
                b[best] += a;
            }
            double v = m.c;
            int B = 0;
            for (int i = 0; i < k; ++i) {
                B += b[i];
                v /= static_cast<double>(B + i + 1);
            }
            total += v;
        }
    } while (std::next_permutation(order.begin(), order.end()));
    return total;
}

namespace {
void check_degree(const Polynomial& F)
{
    if (F.max_var_degree() > 6) throw DegreeError("functional degree exceeds 6 in some pair variable");
}
} // namespace

double bkar_sum(const Polynomial& F, const ObjectSet& o)
{
    check_degree(F);
    if (F.nvars() != pair_count(o.n)) throw std::invalid_argument("functional must have one variable per pair");
    double s = 0.0;
    for (const Forest& f : enumerate_forests(o)) s += forest_term(F, o, f, false);
    return s;
}

double bkar2_sum(const Polynomial& F, const ObjectSet& o, std::vector<double>* per_forest, std::vector<Forest>* forests)
{
    check_degree(F);
    if (F.nvars() != pair_count(o.n)) throw std::invalid_argument("functional must have one variable per pair");
    bool has1 = false;
    for (int i = 0; i < o.n; ++i) has1 |= o.type_of(i) == 1;
    if (!has1) throw std::invalid_argument("restricted forest formula needs a type-1 object");
    auto fs = enumerate_restricted_forests(o);
    double s = 0.0;
    if (per_forest) per_forest->clear();
    for (const Forest& f : fs) {
        const double v = forest_term(F, o, f, true);
        if (per_forest) per_forest->push_back(v);
        s += v;
    }
    if (forests) *forests = std::move(fs);
    return s;
}

// ---------------------------------------------------------------- Mayer

MayerWeakening::MayerWeakening(std::vector<Polymer> polymers) : polys_(std::move(polymers))
{
    const int n = size();
    m_.assign(pair_count(n), 0);
    auto contains = [](const std::vector<int>& v, int x) { return std::find(v.begin(), v.end(), x) != v.end(); };
    for (int p = 0; p < n; ++p)
        for (int q = p + 1; q < n; ++q) {
            for (int b : polys_[p].boxes) {
                if (!contains(polys_[q].boxes, b)) continue;
                if (contains(polys_[p].external, b) || contains(polys_[q].external, b))
                    throw std::invalid_argument("external boxes may not overlap across polymers");
                ++m_[pair_index(n, p, q)];
            }
        }
}

double MayerWeakening::value(std::span<const double> S) const
{
    double v = 1.0;
    for (std::size_t i = 0; i < m_.size(); ++i) v *= std::pow(1.0 - S[i], m_[i]);
    return v;
}

double MayerWeakening::derivative(std::span<const int> pairs, std::span<const double> S) const
{
    std::vector<int> r(m_.size(), 0);
    for (int p : pairs) ++r[p];
    double v = 1.0;
    for (std::size_t i = 0; i < m_.size(); ++i) {
        if (r[i] > m_[i]) return 0.0;
        double f = 1.0;
        for (int k = 0; k < r[i]; ++k) f *= -(m_[i] - k);
        v *= f * std::pow(1.0 - S[i], m_[i] - r[i]);
    }
    return v;
}

Polynomial MayerWeakening::polynomial() const
{
    const int np = static_cast<int>(m_.size());
    Polynomial P = Polynomial::constant(np, 1.0);
    for (int i = 0; i < np; ++i) {
        Polynomial f = Polynomial::constant(np, 1.0) - Polynomial::variable(np, i);
        for (int k = 0; k < m_[i]; ++k) P = P * f;
    }
    return P;
}

double MayerWeakening::indicator() const
{
    for (int m : m_)
        if (m > 0) return 0.0;
    return 1.0;
}

// ---------------------------------------------------------------- Wick

namespace {

using SPoly = std::vector<double>;

SPoly smul(const SPoly& a, const SPoly& b)
{
    if (a.empty() || b.empty()) return {};
    SPoly r(a.size() + b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) r[i + j] += a[i] * b[j];
    return r;
}

void sadd(SPoly& a, const SPoly& b, double f)
{
    if (a.size() < b.size()) a.resize(b.size(), 0.0);
    for (std::size_t i = 0; i < b.size(); ++i) a[i] += f * b[i];
}

SPoly moment(Polynomial::Exponents alpha, const LinearCovariance& C, std::map<Polynomial::Exponents, SPoly>& memo)
{
    int i = -1, deg = 0;
    for (int v = 0; v < C.k; ++v) {
        deg += alpha[v];
        if (i < 0 && alpha[v] > 0) i = v;
    }
    if (i < 0) return {1.0};
    if (deg % 2) return {};
    auto it = memo.find(alpha);
    if (it != memo.end()) return it->second;
    const auto key = alpha;
    alpha[i] -= 1;
    SPoly r;
    for (int j = 0; j < C.k; ++j) {
        if (alpha[j] == 0) continue;
        const double mult = alpha[j];
        auto beta = alpha;
        beta[j] -= 1;
        SPoly c{C.c0[i * C.k + j], C.c1[i * C.k + j]};
        sadd(r, smul(c, moment(beta, C, memo)), mult);
    }
    memo[key] = r;
    return r;
}

} // namespace

std::vector<double> wick_expectation(const Polynomial& F, const LinearCovariance& C)
{
    if (F.nvars() != C.k) throw std::invalid_argument("functional and covariance sizes differ");
    std::map<Polynomial::Exponents, SPoly> memo;
    SPoly r;
    for (const auto& [e, c] : F.terms()) sadd(r, moment(e, C, memo), c);
    while (!r.empty() && r.back() == 0.0) r.pop_back();
    return r;
}

DsIdentityReport gaussian_ds_identity_check(const LinearCovariance& C, const Polynomial& F)
{
    const int k = C.k;
    if (F.total_degree() > 6) throw DegreeError("functional degree exceeds 6");
    Eigen::MatrixXd A(k, k), B(k, k);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
            if (C.c0[i * k + j] != C.c0[j * k + i] || C.c1[i * k + j] != C.c1[j * k + i])
                throw std::invalid_argument("covariance family must be symmetric");
            if (i == j && C.c1[i * k + i] != 0.0) throw std::invalid_argument("interpolation must be off-diagonal");
            A(i, j) = C.c0[i * k + j];
            B(i, j) = C.c0[i * k + j] + C.c1[i * k + j];
        }
    for (const auto* M : {&A, &B}) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(*M);
        if (es.eigenvalues().minCoeff() < -1e-12)
            throw std::invalid_argument("covariance family is not positive semidefinite on [0,1]");
    }
    DsIdentityReport rep;
    auto m = wick_expectation(F, C);
    for (std::size_t i = 1; i < m.size(); ++i) rep.lhs.push_back(i * m[i]);
    for (int i = 0; i < k; ++i)
        for (int j = i + 1; j < k; ++j) {
            const double c = C.c1[i * k + j];
            if (c == 0.0) continue;
            sadd(rep.rhs, wick_expectation(F.derivative(i).derivative(j), C), c);
        }
    const std::size_t n = std::max(rep.lhs.size(), rep.rhs.size());
    rep.lhs.resize(n, 0.0);
    rep.rhs.resize(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) rep.max_abs_diff = std::max(rep.max_abs_diff, std::abs(rep.lhs[i] - rep.rhs[i]));
    return rep;
}

// ---------------------------------------------------------------- partitions

std::vector<SetPartition> set_partitions(int n)
{
    std::vector<SetPartition> out;
    if (n <= 0) return out;
    std::vector<int> a(n, 0), mx(n, 0);
    while (true) {
        const int m = *std::max_element(a.begin(), a.end()) + 1;
        SetPartition p(m);
        for (int i = 0; i < n; ++i) p[a[i]].push_back(i);
        out.push_back(std::move(p));
        int i = n - 1;
        while (i > 0 && a[i] == mx[i - 1] + 1) --i;
        if (i == 0) break;
        ++a[i];
        mx[i] = std::max(mx[i - 1], a[i]);
        for (int j = i + 1; j < n; ++j) {
            a[j] = 0;
            mx[j] = mx[i];
        }
    }
    return out;
}

std::vector<std::pair<SetPartition, long long>> log_derivative_coeffs(int n)
{
    if (n < 1 || n > 8) throw std::invalid_argument("log derivative coefficients need 1 <= n <= 8");
    std::vector<std::pair<SetPartition, long long>> out;
    for (auto& p : set_partitions(n)) {
        const int m = static_cast<int>(p.size());
        long long f = 1;
        for (int k = 2; k < m; ++k) f *= k;
        out.emplace_back(std::move(p), (m % 2 ? 1 : -1) * f);
    }
    return out;
}

std::map<SetPartition, long long> log_derivative_symbolic(int n)
{
    // a term is (sorted block masks, power of 1/w); blocks are derivatives of w
    using Term = std::pair<std::vector<unsigned>, int>;
    std::map<Term, long long> cur{{{{1u}, 1}, 1}};
    for (int i = 1; i < n; ++i) {
        std::map<Term, long long> nxt;
        const unsigned bit = 1u << i;
        for (const auto& [t, c] : cur) {
            for (std::size_t b = 0; b < t.first.size(); ++b) {
                auto blocks = t.first;
                blocks[b] |= bit;
                std::sort(blocks.begin(), blocks.end());
                nxt[{blocks, t.second}] += c;
            }
            auto blocks = t.first;
            blocks.push_back(bit);
            std::sort(blocks.begin(), blocks.end());
            nxt[{blocks, t.second + 1}] += -static_cast<long long>(t.second) * c;
        }
        cur.swap(nxt);
    }
    std::map<SetPartition, long long> out;
    for (const auto& [t, c] : cur) {
        if (c == 0) continue;
        SetPartition p;
        for (unsigned m : t.first) {
            std::vector<int> blk;
            for (int i = 0; i < n; ++i)
                if (m >> i & 1u) blk.push_back(i);
            p.push_back(blk);
        }
        std::sort(p.begin(), p.end());
        out[p] += c;
    }
    return out;
}

} // namespace kpz

namespace kpz {

Polynomial random_polynomial(int nvars, int max_deg, int nterms, const std::vector<int>& vars, CounterRng& rng)
{
    Polynomial p(nvars);
    for (int t = 0; t < nterms; ++t) {
        Polynomial::Exponents e(nvars, 0);
        const int deg = static_cast<int>(rng() % (max_deg + 1));
        for (int k = 0; k < deg && !vars.empty(); ++k) e[vars[rng() % vars.size()]] += 1;
        p.add_term(e, 2.0 * rng.uniform() - 1.0);
    }
    return p;
}

namespace {

std::vector<int> pair_vars(const ObjectSet& o)
{
    std::vector<int> v;
    for (auto [p, q] : o.allowed) v.push_back(pair_index(o.n, p, q));
    return v;
}

ObjectSet with_links(int n, unsigned mask)
{
    ObjectSet o;
    o.n = n;
    for (int i = 0; i < pair_count(n); ++i)
        if (mask >> i & 1) o.allowed.push_back(pair_of(n, i));
    return o;
}

} // namespace

std::vector<IdentityCheck> cluster_identity_suite(std::uint64_t seed, int functionals, int max_n)
{
    std::vector<IdentityCheck> out;
    CounterRng rng(StreamKey{seed, 0, Purpose::functional});

    IdentityCheck b{"bkar", 0, 0.0, 1e-9};
    IdentityCheck b2{"bkar2", 0, 0.0, 1e-9};
    for (int n = 1; n <= max_n; ++n) {
        const std::vector<double> ones(pair_count(n), 1.0);
        for (unsigned mask = 0; mask < (1U << pair_count(n)); ++mask) {
            ObjectSet o = with_links(n, mask);
            const auto vars = pair_vars(o);
            for (int f = 0; f < functionals; ++f) {
                const Polynomial F = random_polynomial(pair_count(n), 3, 6, vars, rng);
                b.max_error = std::max(b.max_error, std::abs(bkar_sum(F, o) - F.eval(ones)));
                ++b.cases;
            }
        }
        // type labels on the complete set; all-type-1 is the plain formula
        ObjectSet o = ObjectSet::complete(n);
        const auto vars = pair_vars(o);
        for (unsigned types = 0; types < (1U << n); ++types) {
            if (types == (1U << n) - 1) continue; // needs a type-1 object
            o.type.assign(n, 1);
            for (int i = 0; i < n; ++i)
                if (types >> i & 1) o.type[i] = 2;
            for (int f = 0; f < functionals; ++f) {
                const Polynomial F = random_polynomial(pair_count(n), 3, 6, vars, rng);
                double err = std::abs(bkar2_sum(F, o) - F.eval(ones));
                if (types == 0) err = std::max(err, std::abs(bkar2_sum(F, o) - bkar_sum(F, o)));
                b2.max_error = std::max(b2.max_error, err);
                ++b2.cases;
            }
        }
    }
    out.push_back(b);
    out.push_back(b2);

    IdentityCheck lg{"log_derivative", 0, 0.0, 0.0};
    for (int n = 1; n <= 5; ++n) {
        const auto sym = log_derivative_symbolic(n);
        const auto cf = log_derivative_coeffs(n);
        if (sym.size() != cf.size()) lg.max_error = std::max(lg.max_error, 1.0);
        for (auto& [p, c] : cf) {
            auto it = sym.find(p);
            const double diff = it == sym.end() ? std::abs(double(c)) : std::abs(double(it->second - c));
            lg.max_error = std::max(lg.max_error, diff);
            ++lg.cases;
        }
    }
    out.push_back(lg);

    IdentityCheck ds{"gaussian_ds", 0, 0.0, 1e-10};
    while (ds.cases < 20) {
        LinearCovariance C;
        C.k = 1 + static_cast<int>(rng() % 4);
        const int k = C.k;
        Eigen::MatrixXd A(k, k), B = Eigen::MatrixXd::Zero(k, k);
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) A(i, j) = rng.gauss();
        Eigen::MatrixXd c0 = A * A.transpose() / k + Eigen::MatrixXd::Identity(k, k);
        for (int i = 0; i < k; ++i)
            for (int j = i + 1; j < k; ++j) B(i, j) = B(j, i) = 0.6 * (2.0 * rng.uniform() - 1.0) / k;
        C.c0.assign(c0.data(), c0.data() + k * k);
        C.c1.assign(B.data(), B.data() + k * k);
        std::vector<int> vars(k);
        for (int i = 0; i < k; ++i) vars[i] = i;
        Polynomial F = random_polynomial(k, 4, 8, vars, rng);
        try {
            ds.max_error = std::max(ds.max_error, gaussian_ds_identity_check(C, F).max_abs_diff);
            ++ds.cases;
        } catch (const std::invalid_argument&) {
            // family left the PSD cone, draw again
        }
    }
    out.push_back(ds);
    return out;
}

} // namespace kpz
