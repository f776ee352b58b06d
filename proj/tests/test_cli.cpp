#include "kpz/config.hpp"
#include "manifest.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace kpz;
namespace fs = std::filesystem;

namespace {

struct Result {
    int status;
    std::string err;
};

fs::path scratch(const std::string& name)
{
    auto p = fs::temp_directory_path() / ("kpzlab_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

Result run_cli(const std::string& args, const fs::path& dir)
{
    const char* bin = std::getenv("KPZLAB_BIN");
    REQUIRE(bin != nullptr);
    const auto err = dir / "stderr.txt";
    const std::string cmd = std::string(bin) + " " + args + " > " + (dir / "stdout.txt").string() + " 2> " + err.string();
    const int rc = std::system(cmd.c_str());
    std::ifstream in(err);
    std::stringstream ss;
    ss << in.rdbuf();
    return {WIFEXITED(rc) ? WEXITSTATUS(rc) : -1, ss.str()};
}

void write(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

} // namespace

TEST_CASE("key-value parsing")
{
    std::istringstream in("# comment\nd = 3\n\nL=8   # inline\nnu0 = 1.5\nD0=1\nlambda = 0.1\n");
    KeyValues kv = parse_key_values(in);
    CHECK(kv.at("L") == "8");
    apply_override(kv, "lambda=0.25");
    const SimConfig c = sim_config_from(kv);
    CHECK(c.lambda == 0.25);
    CHECK(c.nu0 == 1.5);
    CHECK(c.L == 8);
    CHECK(sim_config_from(to_key_values(c)).lambda == c.lambda);

    std::istringstream dup("d = 3\nd = 4\n");
    CHECK_THROWS_AS(parse_key_values(dup), SchemaError);
    std::istringstream junk("d 3\n");
    CHECK_THROWS_AS(parse_key_values(junk), SchemaError);

    KeyValues missing = kv;
    missing.erase("nu0");
    missing["colour"] = "red";
    try {
        sim_config_from(missing);
        FAIL("expected a schema error");
    } catch (const SchemaError& e) {
        CHECK(std::string(e.what()).find("nu0") != std::string::npos);
        CHECK(e.keys == std::vector<std::string>{"nu0", "colour"});
    }
    KeyValues bad = kv;
    bad["dt"] = "fast";
    CHECK_THROWS_WITH(sim_config_from(bad), doctest::Contains("dt"));
    CHECK(get_list(kv, "none", {1.0}) == std::vector<double>{1.0});
    kv["eps"] = "1, 0.5,0.25";
    CHECK(get_list(kv, "eps", {}) == std::vector<double>{1.0, 0.5, 0.25});
}

TEST_CASE("sha256")
{
    CHECK(kpzlab::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(kpzlab::sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("cluster self-test with defaults")
{
    const auto dir = scratch("selftest");
    const auto r = run_cli("--out " + (dir / "out").string() + " cluster-selftest --functionals 10", dir);
    // the flag belongs to no subcommand; CLI11 rejects it
    CHECK(r.status != 0);
    const auto ok = run_cli("--out " + (dir / "out").string() + " cluster-selftest", dir);
    CHECK(ok.status == 0);
    CHECK(fs::exists(dir / "out" / "cluster_selftest.json"));
    const auto man = kpzlab::Manifest::read((dir / "out" / "manifest.json").string());
    CHECK(man.subcommand == "cluster-selftest");
    REQUIRE(man.outputs.size() == 1);
    CHECK(man.outputs[0].sha256 == kpzlab::sha256_file((dir / "out" / "cluster_selftest.json").string()));
}

TEST_CASE("schema errors name the offending key")
{
    const auto dir = scratch("schema");
    write(dir / "cfg.txt", "d = 1\nL = 8\nD0 = 1\nlambda = 0\n");
    const auto r = run_cli("--config " + (dir / "cfg.txt").string() + " --out " + (dir / "out").string() + " simulate", dir);
    CHECK(r.status == 2);
    CHECK(r.err.find("\"nu0\"") != std::string::npos);
    CHECK(r.err.find("\"error\":\"schema\"") != std::string::npos);
}

TEST_CASE("replay reproduces digests independent of threads")
{
    const auto dir = scratch("replay");
    write(dir / "cfg.txt", "d = 2\nL = 8\nnu0 = 1\nD0 = 1\nlambda = 0.2\ndt = 0.05\nT = 1\nnoise = kick\nevery = 5\n");
    const auto a = run_cli("--config " + (dir / "cfg.txt").string() + " --seed 7 --threads 1 --out " +
                              (dir / "a").string() + " simulate",
                          dir);
    REQUIRE(a.status == 0);
    const auto b = run_cli("--replay " + (dir / "a" / "manifest.json").string() + " --threads 2 --out " + (dir / "b").string(), dir);
    CHECK(b.status == 0);
    const auto ma = kpzlab::Manifest::read((dir / "a" / "manifest.json").string());
    const auto mb = kpzlab::Manifest::read((dir / "b" / "manifest.json").string());
    REQUIRE(ma.outputs.size() == 3);
    for (std::size_t i = 0; i < ma.outputs.size(); ++i) CHECK(ma.outputs[i].sha256 == mb.outputs[i].sha256);
    CHECK(ma.config.at("seed") == "7");

    // a different seed changes the trajectory
    const auto c = run_cli("--config " + (dir / "cfg.txt").string() + " --seed 8 --out " + (dir / "c").string() + " simulate", dir);
    REQUIRE(c.status == 0);
    const auto mc = kpzlab::Manifest::read((dir / "c" / "manifest.json").string());
    CHECK(mc.outputs[0].sha256 != ma.outputs[0].sha256);

    // tampering with an output is caught by replay
    auto m2 = ma;
    m2.outputs[0].sha256 = std::string(64, '0');
    m2.write((dir / "tampered.json").string());
    const auto t = run_cli("--replay " + (dir / "tampered.json").string() + " --out " + (dir / "t").string(), dir);
    CHECK(t.status == 3);
    CHECK(t.err.find("trajectory.bin") != std::string::npos);
}

TEST_CASE("polymer and scaling subcommands write their tables")
{
    const auto dir = scratch("tables");
    write(dir / "cfg.txt", "d = 1\nL = 16\nnu0 = 1\nD0 = 1\nlambda = 0.1\ndt = 0.05\nT = 1\nnoise = kick\n"
                           "paths = 200\nhorizons = 0.5, 1\n");
    const auto p = run_cli("--config " + (dir / "cfg.txt").string() + " --replicas 4 --out " + (dir / "p").string() + " polymer", dir);
    REQUIRE(p.status == 0);
    std::ifstream in(dir / "p" / "polymer.csv");
    std::string version, header;
    std::getline(in, version);
    std::getline(in, header);
    CHECK(version.rfind("# kpzlab-csv/1", 0) == 0);
    CHECK(header == "T,a_0,value,stderr,n_paths,noise_replicas");
}
