#include <doctest.h>

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#ifndef VPROF_BIN
#define VPROF_BIN "vprof"
#endif

namespace {

namespace fs = std::filesystem;

struct RunResult {
    int exit_code = -1;
    std::string dir;
};

RunResult run(const std::string& args, const std::string& tag) {
    fs::path dir = fs::temp_directory_path() / ("vprof_cli_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::string cmd = std::string(VPROF_BIN) + " " + args + " --out " + dir.string() +
                      " > " + (dir / "stdout.txt").string() + " 2> " +
                      (dir / "stderr.txt").string();
    int rc = std::system(cmd.c_str());
    RunResult res;
    res.exit_code = WEXITSTATUS(rc);
    res.dir = dir.string();
    return res;
}

int run_bare(const std::string& args) {
    int rc = std::system((std::string(VPROF_BIN) + " " + args + " > /dev/null 2>&1").c_str());
    return WEXITSTATUS(rc);
}

nlohmann::json load_json(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    nlohmann::json j;
    in >> j;
    return j;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_SUITE("cli") {

TEST_CASE("catalog lists all ten systems and exits 0") {
    RunResult r = run("catalog", "catalog");
    CHECK(r.exit_code == 0);
    std::string out = slurp(r.dir + "/stdout.txt");
    for (const char* name :
         {"burgers", "linear-example-3", "jordan-example", "scalar-linear-bl", "p-system",
          "singular-fast-ex", "singular-slow-ex", "rotation-toy", "toy-5d", "ns-polytropic"}) {
        CHECK(out.find(name) != std::string::npos);
    }
}

TEST_CASE("unknown flags and systems produce usage/error codes") {
    CHECK(run_bare("wave-fan --system burgers --uminus 0 --family 1 --s 1 --frobnicate") == 64);
    CHECK(run_bare("no-such-command") == 64);
    CHECK(run_bare("spectrum --system no-such-system") == 1);
}

TEST_CASE("wave-fan burgers s=-1: one jump at speed -1/2, exit 0") {
    RunResult r = run("wave-fan --system burgers --uminus 0 --family 1 --s -1", "fan");
    CHECK(r.exit_code == 0);
    auto j = load_json(r.dir + "/fan.json");
    REQUIRE(j["segments"].size() == 1);
    CHECK(j["segments"][0]["type"] == "jump");
    CHECK(std::abs(j["segments"][0]["speed"].get<double>() + 0.5) <= 1e-8);
}

TEST_CASE("wave-fan s=0 emits an empty segment array") {
    RunResult r = run("wave-fan --system burgers --uminus 0.2 --family 1 --s 0", "fan0");
    CHECK(r.exit_code == 0);
    auto j = load_json(r.dir + "/fan.json");
    CHECK(j["segments"].empty());
}

TEST_CASE("boundary-layer scalar-linear-bl matches the exponential, exit codes") {
    RunResult r = run("boundary-layer --system scalar-linear-bl --a -1 --u0 0 --ub 1", "bl");
    CHECK(r.exit_code == 0);
    // CSV matches (ub - u0) e^{-x} + u0 = e^{-x}.
    std::ifstream in(r.dir + "/boundary_layer.csv");
    std::string line;
    std::getline(in, line); // header
    double worst = 0.0;
    while (std::getline(in, line)) {
        std::stringstream ss(line);
        std::string tok;
        std::getline(ss, tok, ',');
        double x = std::stod(tok);
        std::getline(ss, tok, ',');
        double u = std::stod(tok);
        if (x <= 10.0) worst = std::max(worst, std::abs(u - std::exp(-x)));
    }
    CHECK(worst <= 1e-8);

    // Inadmissible datum: exit 2 (negative result, not a crash).
    RunResult bad = run("traveling-wave --system burgers --uminus -1 --uplus 1", "noconn");
    CHECK(bad.exit_code == 2);
}

TEST_CASE("profile CSV round-trips floats exactly") {
    RunResult r = run("traveling-wave --system burgers --uminus 1 --uplus -1 --sigma 0", "tw");
    CHECK(r.exit_code == 0);
    std::ifstream in(r.dir + "/profile.csv");
    std::string header, line1;
    std::getline(in, header);
    std::getline(in, line1);
    // Re-parse and re-print: 17 significant digits recover the same string.
    std::stringstream ss(line1);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        double v = std::stod(tok);
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        CHECK(std::string(buf) == tok);
    }
}

TEST_CASE("hypotheses: failures exit 2 with a witness in the report") {
    RunResult r = run("hypotheses --system singular-fast-ex --samples 100", "hyfast");
    CHECK(r.exit_code == 2);
    auto j = load_json(r.dir + "/hypotheses.json");
    CHECK(j["all_pass"] == false);
    // H5 fails with witness component -v2 as the residual.
    auto h5 = j["hypotheses"][4];
    CHECK(h5["status"] == "fail");
    double resid = h5["residual"].get<double>();
    double v2 = h5["witness"][1].get<double>();
    CHECK(std::abs(resid - std::abs(v2)) <= 1e-10);
}

TEST_CASE("spectrum of the linear example") {
    RunResult r = run("spectrum --system linear-example-3", "spec");
    CHECK(r.exit_code == 0);
    auto j = load_json(r.dir + "/spectrum.json");
    CHECK(j["dim_stable"] == 1);
    CHECK(j["dim_unstable"] == 1);
    CHECK(j["dim_center"] == 2);
    CHECK(std::abs(j["beta_plus"].get<double>() - 2.0) <= 1e-12);
    CHECK(std::abs(j["beta_minus"].get<double>() - 1.0) <= 1e-12);
}

TEST_CASE("singular-integrate reports the hit time") {
    RunResult r = run("singular-integrate --system singular-fast-ex --v0 0.5,1 --t-end 5",
                      "sing");
    CHECK(r.exit_code == 0);
    auto j = load_json(r.dir + "/event.json");
    CHECK(j["singular_hit"] == true);
    double tstar = -std::log(1.0 - 0.25 / 2.0);
    CHECK(std::abs(j["hit_time"].get<double>() - tstar) <= 1e-8);
}

TEST_CASE("config file mirrors flags; determinism across runs") {
    fs::path dir = fs::temp_directory_path() / "vprof_cli_config";
    fs::remove_all(dir);
    fs::create_directories(dir);
    {
        std::ofstream cfg(dir / "cfg.json");
        cfg << "{\"system\": \"burgers\", \"uminus\": \"0\", \"family\": 1, \"s\": -1.0}\n";
    }
    std::string cmd = std::string(VPROF_BIN) + " wave-fan --config " + (dir / "cfg.json").string() +
                      " --out " + dir.string() + " > /dev/null 2>&1";
    CHECK(WEXITSTATUS(std::system(cmd.c_str())) == 0);
    auto j = load_json((dir / "fan.json").string());
    CHECK(j["segments"].size() == 1);

    // Re-running writes a byte-identical artifact.
    std::string first = slurp((dir / "fan.json").string());
    CHECK(WEXITSTATUS(std::system(cmd.c_str())) == 0);
    CHECK(slurp((dir / "fan.json").string()) == first);
}

TEST_CASE("slow-fast emits the decomposition for the toy system") {
    RunResult r = run("slow-fast --system toy-5d --coords 0.05,0.04,0.06 --delta 0.2 "
                      "--nested-delta 0.05",
                      "sf");
    CHECK(r.exit_code == 0);
    auto j = load_json(r.dir + "/slow_fast.json");
    CHECK(std::abs(j["fast_rate"].get<double>() - 1.0) <= 0.05);
    CHECK(j["physical_time_available"] == true);
}

} // TEST_SUITE
