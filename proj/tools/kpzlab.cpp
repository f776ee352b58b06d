#include "kpz/cluster.hpp"
#include "kpz/config.hpp"
#include "kpz/feynman_kac.hpp"
#include "kpz/lattice_spde.hpp"
#include "kpz/multiscale.hpp"
#include "kpz/noise.hpp"
#include "kpz/parallel.hpp"
#include "kpz/renorm.hpp"
#include "kpz/scaling.hpp"
#include "manifest.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace kpz;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// A named invariant failed; exit status 3.
struct CheckFailed : std::runtime_error {
    std::string check;
    CheckFailed(const std::string& name, const std::string& what) : std::runtime_error(what), check(name) {}
};

struct Run {
    std::string subcommand;
    KeyValues kv;
    std::uint64_t seed = 1;
    long replicas = 0; // 0 = subcommand default
    fs::path out;
    std::vector<std::string> files;

    SimConfig sim(const std::set<std::string>& extra) const
    {
        std::set<std::string> all = extra;
        SimConfig c = sim_config_from(kv, all);
        c.seed = seed;
        return c;
    }
    long reps(long fallback) const { return replicas > 0 ? replicas : fallback; }

    std::string path(const std::string& name)
    {
        files.push_back(name);
        return (out / name).string();
    }
    std::ofstream csv(const std::string& name, const std::string& kind)
    {
        std::ofstream os(path(name));
        if (!os) throw std::runtime_error("cannot write " + (out / name).string());
        os << "# kpzlab-csv/1 " << kind << "\n";
        os.precision(12);
        return os;
    }
    void write_json(const std::string& name, json j)
    {
        j["format"] = "kpzlab-json/1";
        std::ofstream os(path(name));
        os << j.dump(2) << "\n";
    }
};

std::vector<double> point_list(const KeyValues& kv, const std::string& key, int d)
{
    auto v = get_list(kv, key, std::vector<double>(d, 0.0));
    if (static_cast<int>(v.size()) != d) throw SchemaError("key '" + key + "' needs " + std::to_string(d) + " coordinates", {key});
    return v;
}

// "t x0 x1 .. / t x0 x1 ..; ..."
std::vector<PointPair> parse_pairs(const std::string& s, int d)
{
    std::vector<PointPair> out;
    std::stringstream all(s);
    std::string item;
    auto point = [&](const std::string& txt) {
        std::stringstream ss(txt);
        STPoint p;
        if (!(ss >> p.t)) throw SchemaError("key 'pairs': bad point '" + txt + "'", {"pairs"});
        for (int a = 0; a < d; ++a)
            if (!(ss >> p.x[a])) throw SchemaError("key 'pairs': point needs t and " + std::to_string(d) + " coordinates", {"pairs"});
        return p;
    };
    while (std::getline(all, item, ';')) {
        if (item.find_first_not_of(" \t") == std::string::npos) continue;
        const auto slash = item.find('/');
        if (slash == std::string::npos) throw SchemaError("key 'pairs': expected 'p / q'", {"pairs"});
        out.push_back({point(item.substr(0, slash)), point(item.substr(slash + 1))});
    }
    if (out.empty()) throw SchemaError("key 'pairs' is empty", {"pairs"});
    return out;
}

std::vector<PointPair> default_pairs()
{
    auto P = [](double t, double a, double b) { return STPoint{t, {a, b, 0, 0}}; };
    return {{P(2, 1.5, 0), P(2, 0, 0)}, {P(2, 2, 0), P(2, 0, 0)}, {P(2, 1, 1), P(2, 0, 0)},
            {P(2, 0, 0), P(0.5, 0, 0)}, {P(2, 1, 0), P(1, 0, 0)}, {P(2, 2, 0), P(1, 0, 0)}};
}

json mean_err(const MeanErr& m) { return {{"mean", m.mean}, {"stderr", m.stderr_}, {"n", m.n}}; }
json quad(const Quad& q) { return {{"value", q.value}, {"error", q.error}}; }

void simulate(Run& r)
{
    const SimConfig c = r.sim({"equation", "every", "replica"});
    const Equation eq = parse_equation(get_string(r.kv, "equation", "kpz"));
    const long every = std::max(1L, get_long(r.kv, "every", std::max(1L, c.steps() / 16)));
    const auto replica = static_cast<std::uint64_t>(get_long(r.kv, "replica", 0));
    const Mollifier m(c.d);
    auto src = make_noise(c.noise, &m, c.lattice(), c.dt, noise_key(c, replica).hash(), c.kick_c,
                          {c.noise_h, c.noise_ht});

    std::ofstream bin(r.path("trajectory.bin"), std::ios::binary);
    auto stats = r.csv("trajectory.csv", "trajectory");
    stats << "step,t,mean,sd,min,max\n";
    std::vector<long> steps;
    run_trajectory(
        c, eq, *src,
        [&](long k, std::span<const double> f) {
            bin.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(double)));
            steps.push_back(k);
            std::vector<double> v(f.begin(), f.end());
            const MeanErr me = mean_stderr(v);
            stats << k << ',' << k * c.dt << ',' << me.mean << ',' << me.sd << ','
                  << *std::min_element(v.begin(), v.end()) << ',' << *std::max_element(v.begin(), v.end()) << '\n';
        },
        every);
    json h;
    h["data"] = "trajectory.bin";
    h["dtype"] = "float64";
    h["byte_order"] = "native";
    h["layout"] = "snapshot-major, site index x0 fastest";
    h["shape"] = {steps.size(), c.lattice().size()};
    h["equation"] = get_string(r.kv, "equation", "kpz");
    h["steps"] = steps;
    h["dt"] = c.dt;
    h["config"] = to_key_values(c);
    r.write_json("trajectory.json", h);
}

void polymer(Run& r)
{
    const SimConfig c = r.sim({"paths", "horizons", "a"});
    const long paths = get_long(r.kv, "paths", 10000);
    const auto horizons = get_list(r.kv, "horizons", {c.T});
    const auto a = point_list(r.kv, "a", c.d);
    const auto R = static_cast<std::size_t>(r.reps(8));
    const double tmax = *std::max_element(horizons.begin(), horizons.end());
    const long nt = static_cast<long>(std::ceil(tmax / c.dt)) + 2;
    const Mollifier m(c.d);

    std::vector<std::vector<double>> vals(R, std::vector<double>(horizons.size()));
    parallel_for(R, [&](std::size_t k) {
        auto src = make_noise(c.noise, &m, c.lattice(), c.dt, noise_key(c, k).hash(), c.kick_c,
                              {c.noise_h, c.noise_ht});
        const NoiseField f = record_noise(*src, c.lattice(), c.dt, nt);
        for (std::size_t i = 0; i < horizons.size(); ++i)
            vals[k][i] = estimate_w(horizons[i], a, f, c, paths, StreamKey{c.seed, k, Purpose::paths}).value;
    });
    auto os = r.csv("polymer.csv", "polymer");
    os << "T";
    for (int i = 0; i < c.d; ++i) os << ",a_" << i;
    os << ",value,stderr,n_paths,noise_replicas\n";
    for (std::size_t i = 0; i < horizons.size(); ++i) {
        std::vector<double> v(R);
        for (std::size_t k = 0; k < R; ++k) v[k] = vals[k][i];
        const MeanErr me = mean_stderr(v);
        os << horizons[i];
        for (double x : a) os << ',' << x;
        os << ',' << me.mean << ',' << me.stderr_ << ',' << paths << ',' << R << '\n';
    }
}

void renorm(Run& r)
{
    const SimConfig c = r.sim({"jmax"});
    const ScalePartition P(static_cast<int>(get_long(r.kv, "jmax", 12)));
    const Mollifier m(c.d);
    const RenormConstants rc = renorm_constants(c, P, m);
    json j;
    j["g0"] = rc.g0;
    j["v0_leading"] = quad(rc.v0_leading);
    j["v0_fixed_point"] = {{"value", rc.v0_fixed_point.value},
                           {"iterations", rc.v0_fixed_point.iterations},
                           {"max_ratio", rc.v0_fixed_point.max_ratio}};
    j["delta_nu"] = quad(rc.delta_nu);
    j["delta_nu_isotropic"] = quad(rc.delta_nu_isotropic);
    j["d_eff_ratio"] = {{"value", rc.d_eff.ratio},  {"c2", rc.d_eff.c2}, {"c4", rc.d_eff.c4},
                        {"c4_error", rc.d_eff.c4_error}, {"c4_hankel", rc.d_eff.c4_hankel}, {"K", rc.d_eff.K}};
    j["provenance"] = {
        {"config_hash", kpzlab::sha256_hex(canonical(to_key_values(c)))},
        {"jmax", P.jmax()},
        {"quadrature",
         {{"v0", "Gauss-Legendre time panels x radial panels, refinement levels 2 and 4"},
          {"delta_nu", "tensor Gauss-Legendre, 16 nodes per level per axis, levels compared at rel 1e-4"},
          {"d_eff", "closed Fourier form, sinh substitution in frequency, Hankel cross-check"}}}};
    r.write_json("renorm.json", j);
}

void powercount(Run& r)
{
    const SimConfig c = r.sim({"jmax"});
    const int jmax = static_cast<int>(get_long(r.kv, "jmax", 8));
    const ScalePartition P(jmax + 4);
    auto os = r.csv("powercount.csv", "powercount");
    os << "check,j,kappa,measured,bound,pass\n";
    std::vector<std::string> failed;

    // constants must stay within a factor 2 of their smallest value across j
    auto uniform = [&](const std::string& name, const std::string& kappa, const std::vector<double>& v) {
        const double lo = *std::min_element(v.begin(), v.end());
        for (int j = 1; j <= static_cast<int>(v.size()); ++j) {
            const bool ok = v[j - 1] <= 2.0 * lo;
            os << name << ',' << j << ',' << kappa << ',' << v[j - 1] << ',' << 2.0 * lo << ',' << ok << '\n';
            if (!ok) failed.push_back(name + "[j=" + std::to_string(j) + "]");
        }
    };
    for (auto [kt, kx] : {std::pair{0, 0}, {0, 1}, {1, 0}}) {
        std::vector<double> mass, sup;
        for (int j = 1; j <= jmax; ++j) {
            const ScaleReport s = check_single_scale(P, j, kt, kx, c.d, c.nu0);
            mass.push_back(s.mass_constant);
            sup.push_back(s.sup_constant);
        }
        const std::string kappa = std::to_string(kt) + ":" + std::to_string(kx);
        uniform("single_scale_mass", kappa, mass);
        uniform("single_scale_sup", kappa, sup);
    }
    {
        std::vector<double> two;
        for (int j = 1; j <= jmax; ++j) two.push_back(check_two_scale(P, j, 1, 1, c.d, c.nu0).constant);
        uniform("two_scale", "1:1", two);
    }
    std::vector<int> js;
    for (int j = 1; j <= jmax; ++j) js.push_back(j);
    const PW1Report pw = check_pw1(P, js, c.d, c.nu0, true);
    std::vector<double> pc;
    for (const auto& row : pw.rows) pc.push_back(row.constant);
    uniform("pw1", "3", pc);
    const bool e0 = std::abs(pw.kappa0_exponent - 1.0) <= 0.1, e2 = pw.kappa2_r2 > 0.99;
    os << "pw1_divergent_exponent,0,0," << pw.kappa0_exponent << ",1.0," << e0 << '\n';
    os << "pw1_divergent_log_r2,0,2," << pw.kappa2_r2 << ",0.99," << e2 << '\n';
    if (!e0) failed.push_back("pw1_divergent_exponent");
    if (!e2) failed.push_back("pw1_divergent_log_r2");
    if (c.d >= 3)
        for (int j2 = 1; j2 <= 12; ++j2)
            for (int j1 = 1; j1 <= j2; ++j1) {
                const PW2Result p2 = check_pw2(c.d, j1, j2);
                os << "pw2," << j2 << ',' << j1 << ',' << p2.margin << ",0," << p2.holds << '\n';
                if (!p2.holds) failed.push_back("pw2[" + std::to_string(j1) + "," + std::to_string(j2) + "]");
            }
    if (!failed.empty()) throw CheckFailed(failed.front(), std::to_string(failed.size()) + " power-counting checks failed");
}

void cluster_selftest(Run& r)
{
    const auto checks = cluster_identity_suite(r.seed, static_cast<int>(get_long(r.kv, "functionals", 50)));
    json j;
    j["checks"] = json::array();
    for (const auto& ch : checks)
        j["checks"].push_back({{"name", ch.name},
                               {"cases", ch.cases},
                               {"max_error", ch.max_error},
                               {"tolerance", ch.tolerance},
                               {"pass", ch.pass()}});
    for (int n = 1; n <= 4; ++n) {
        json fs = json::array();
        for (const Forest& f : enumerate_forests(ObjectSet::complete(n))) fs.push_back(f.links);
        j["forests"][std::to_string(n)] = fs;
        json coeffs = json::array();
        for (const auto& [p, cf] : log_derivative_coeffs(n)) coeffs.push_back({{"partition", p}, {"coefficient", cf}});
        j["log_derivative"][std::to_string(n)] = coeffs;
    }
    r.write_json("cluster_selftest.json", j);
    for (const auto& ch : checks)
        if (!ch.pass()) throw CheckFailed(ch.name, "identity check " + ch.name + " exceeded its tolerance");
}

void scaling(Run& r)
{
    const SimConfig c = r.sim({"epsilons", "pairs", "control", "center", "fit"});
    const auto eps = get_list(r.kv, "epsilons", {1.0, 0.5, 0.25});
    const auto base = r.kv.count("pairs") ? parse_pairs(r.kv.at("pairs"), c.d) : default_pairs();
    const Mollifier m(c.d);
    EstimatorOptions o;
    o.center = get_long(r.kv, "center", 1) != 0;
    std::unique_ptr<DiscreteEWOracle> oracle;
    if (get_long(r.kv, "control", c.noise == NoiseKind::mollified) != 0) {
        oracle = std::make_unique<DiscreteEWOracle>(make_ew_oracle(c, m, base, eps));
        o.control = oracle.get();
    }
    const CollapseReport rep = scaling_collapse(c, eps, base, static_cast<std::size_t>(r.reps(8)), &m, o);

    auto os = r.csv("two_point.csv", "two_point");
    for (std::size_t i = 0; i < rep.estimates.size(); ++i) write_two_point_csv(os, rep.estimates[i], c.d, i == 0);

    json j;
    j["epsilons"] = rep.epsilons;
    j["discrepancy"] = rep.discrepancy;
    j["shrinking"] = rep.shrinking;
    j["link_exponent"] = {{"value", rep.link_exponent}, {"stderr", rep.link_exponent_stderr}};
    j["rescaled"] = json::array();
    for (const auto& row : rep.rescaled) {
        json jr = json::array();
        for (const auto& me : row) jr.push_back(mean_err(me));
        j["rescaled"].push_back(jr);
    }
    if (get_long(r.kv, "fit", 1) != 0 && !rep.estimates.empty()) {
        const EWFit f = fit_effective_constants(c, rep.estimates.back(), c.nu0, c.D0);
        j["fit"] = {{"nu", f.nu},
                    {"D", f.D},
                    {"nu_stderr", std::sqrt(f.cov(0, 0))},
                    {"D_stderr", std::sqrt(f.cov(1, 1))},
                    {"condition", f.condition},
                    {"chi2", f.chi2},
                    {"dof", f.dof}};
    }
    r.write_json("scaling.json", j);
}

// Inputs for the figure scripts: EW covariance against its oracle, drift calibration.
void report_data(Run& r)
{
    SimConfig c = r.sim({"drift_t", "T_drift", "epsilons"});
    const Mollifier m(c.d);
    const auto R = static_cast<std::size_t>(r.reps(16));
    {
        SimConfig ew = c;
        ew.lambda = 0.0;
        ew.v0 = 0.0;
        auto P = [](double t, double a) { return STPoint{t, {a, 0, 0, 0}}; };
        const std::vector<PointPair> probes{{P(2, 0), P(2, 0)}, {P(2, 1), P(2, 0)}, {P(2, 2), P(2, 0)},
                                            {P(2, 0), P(1, 0)}, {P(2, 1), P(1, 0)}, {P(2, 3), P(2, 0)}};
        std::unique_ptr<DiscreteEWOracle> oracle;
        if (ew.noise == NoiseKind::mollified) oracle = std::make_unique<DiscreteEWOracle>(make_ew_oracle(ew, m, probes, {1.0}));
        const TwoPointEstimate est = connected_two_point(ew, probes, 1.0, R, &m, {});
        auto os = r.csv("covariance.csv", "covariance");
        os << "t1,x1,t2,x2,estimate,stderr,oracle,analytic,replicas\n";
        for (std::size_t i = 0; i < probes.size(); ++i) {
            const auto a = locate(ew, probes[i].p), b = locate(ew, probes[i].q);
            const double orc = oracle ? oracle->covariance(a.step, a.site, b.step, b.site) : std::nan("");
            os << probes[i].p.t << ',' << probes[i].p.x[0] << ',' << probes[i].q.t << ',' << probes[i].q.x[0] << ','
               << est.value[i].mean << ',' << est.value[i].stderr_ << ',' << orc << ','
               << ew_covariance_analytic(ew.nu0, ew.D0, probes[i], ew.lattice()) << ',' << R << '\n';
        }
    }
    {
        const double t = get_double(r.kv, "drift_t", 1.0);
        const DriftReport d = mean_drift(c, get_list(r.kv, "epsilons", {1.0, 0.5, 0.25}), t, R, &m,
                                         get_double(r.kv, "T_drift", c.T));
        auto os = r.csv("drift.csv", "drift");
        os << "kind,epsilon,t,mean,stderr,replicas\n";
        for (const auto& row : d.rows)
            os << "bump," << row.epsilon << ',' << row.t << ',' << row.bump.mean << ',' << row.bump.stderr_ << ',' << R << '\n';
        os << "calibrated,1," << get_double(r.kv, "T_drift", c.T) << ',' << d.calibrated.mean << ','
           << d.calibrated.stderr_ << ',' << R << '\n';
        os << "uncalibrated,1," << get_double(r.kv, "T_drift", c.T) << ',' << d.uncalibrated.mean << ','
           << d.uncalibrated.stderr_ << ',' << R << '\n';
    }
}

void dispatch(Run& r)
{
    if (r.subcommand == "simulate") simulate(r);
    else if (r.subcommand == "polymer") polymer(r);
    else if (r.subcommand == "renorm") renorm(r);
    else if (r.subcommand == "powercount") powercount(r);
    else if (r.subcommand == "cluster-selftest") cluster_selftest(r);
    else if (r.subcommand == "scaling") scaling(r);
    else if (r.subcommand == "report-data") report_data(r);
    else throw SchemaError("unknown subcommand " + r.subcommand, {});
}

kpzlab::Manifest execute(Run& r)
{
    fs::create_directories(r.out);
    const auto t0 = std::chrono::steady_clock::now();
    dispatch(r);
    kpzlab::Manifest man;
    man.subcommand = r.subcommand;
    man.config = r.kv;
    man.seed = r.seed;
    man.replicas = r.replicas;
    for (const auto& f : r.files) man.outputs.push_back({f, kpzlab::sha256_file((r.out / f).string())});
    man.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    man.write((r.out / "manifest.json").string());
    return man;
}

int fail(const std::string& kind, const std::string& msg, const json& extra = json::object())
{
    json e = extra;
    e["error"] = kind;
    e["message"] = msg;
    std::cerr << e.dump() << std::endl;
    return kind == "schema" ? 2 : kind == "check" ? 3 : 1;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"kpzlab: lattice KPZ / stochastic heat equation experiments"};
    app.set_version_flag("--version", kpzlab::kVersion);
    std::string config_file, replay;
    std::vector<std::string> sets;
    std::uint64_t seed = 0;
    long replicas = 0;
    int threads = 1;
    const char* env_out = std::getenv("KPZLAB_OUT");
    std::string out = env_out ? env_out : "kpzlab_out";

    app.add_option("--config", config_file, "key = value configuration file")->check(CLI::ExistingFile);
    app.add_option("--set", sets, "override, key=value (repeatable)");
    auto* seed_opt = app.add_option("--seed", seed, "master seed");
    app.add_option("--replicas", replicas, "replica count (0 = subcommand default)");
    app.add_option("--threads", threads, "worker threads; results do not depend on it");
    app.add_option("--out", out, "output directory (default $KPZLAB_OUT or ./kpzlab_out)");
    app.add_option("--replay", replay, "re-run a manifest and compare output digests")->check(CLI::ExistingFile);

    const std::vector<std::pair<std::string, std::string>> subs{
        {"simulate", "integrate KPZ, EW or SHE and write snapshots"},
        {"polymer", "Feynman-Kac polymer estimates of w"},
        {"renorm", "renormalized constants by quadrature"},
        {"powercount", "multiscale kernel estimates"},
        {"cluster-selftest", "forest formula and cumulant identities"},
        {"scaling", "two-point scaling collapse and effective constants"},
        {"report-data", "covariance and drift tables for figures"}};
    for (const auto& [name, help] : subs) app.add_subcommand(name, help);
    app.require_subcommand(0, 1);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        set_threads(threads);
        Run r;
        r.out = out;
        if (!replay.empty()) {
            const auto man = kpzlab::Manifest::read(replay);
            r.subcommand = man.subcommand;
            r.kv = man.config;
            r.seed = man.seed;
            r.replicas = man.replicas;
            const auto again = execute(r);
            std::vector<std::string> differ;
            for (std::size_t i = 0; i < man.outputs.size(); ++i)
                if (i >= again.outputs.size() || again.outputs[i].sha256 != man.outputs[i].sha256)
                    differ.push_back(man.outputs[i].name);
            if (!differ.empty() || again.outputs.size() != man.outputs.size())
                return fail("check", "replay digests differ", {{"check", "replay"}, {"files", differ}});
            std::cout << "replay identical: " << man.outputs.size() << " outputs\n";
            return 0;
        }
        if (app.get_subcommands().empty()) {
            std::cerr << app.help();
            return 2;
        }
        r.subcommand = app.get_subcommands().front()->get_name();
        r.kv = config_file.empty() ? to_key_values(SimConfig{}) : read_key_values(config_file);
        for (const auto& s : sets) apply_override(r.kv, s);
        if (seed_opt->count()) r.kv["seed"] = std::to_string(seed);
        r.seed = static_cast<std::uint64_t>(get_long(r.kv, "seed", 1));
        r.replicas = replicas;
        const auto man = execute(r);
        std::cout << "wrote " << man.outputs.size() << " outputs and manifest.json to " << r.out.string() << "\n";
        return 0;
    } catch (const SchemaError& e) {
        return fail("schema", e.what(), {{"keys", e.keys}});
    } catch (const CheckFailed& e) {
        return fail("check", e.what(), {{"check", e.check}});
    } catch (const ConfigError& e) {
        return fail("config", e.what());
    } catch (const std::exception& e) {
        return fail("runtime", e.what());
    }
}
