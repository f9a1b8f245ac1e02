#include "quasilin/report.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kTmp = fs::path(QUASILIN_TEST_TMP) / "cli";

int run(const std::string& args) {
    fs::create_directories(kTmp);
    const std::string cmd = std::string("\"") + QUASILIN_CLI + "\" " + args + " > \"" + (kTmp / "last.log").string() +
                            "\" 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path write_cfg(const std::string& name, const std::string& text) {
    fs::create_directories(kTmp);
    const fs::path p = kTmp / name;
    std::ofstream(p) << text;
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

fs::path out_dir(const std::string& name) {
    const fs::path d = kTmp / name;
    fs::remove_all(d);
    return d;
}

std::string args(const fs::path& cfg, const fs::path& out) {
    return "--config \"" + cfg.string() + "\" --out \"" + out.string() + "\"";
}

const char* kPoisson = R"(psi = { kind = "p_power", p = 2 }
f = { kind = "bump", center = [0.5, 0.5], width = 0.3, height = 5 }
g = 0
[space]
kind = "grid2d"
nx = 17
[solver]
method = "full"
)";

const char* kP3 = R"(seed = 4
psi = { kind = "p_power", p = 3 }
f = 1
[space]
kind = "grid2d"
nx = 9
)";

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("solve the p = 2 sample") {
    const fs::path cfg = write_cfg("poisson.cfg", kPoisson);
    const fs::path out = out_dir("poisson");
    REQUIRE(run("solve " + args(cfg, out)) == 0);
    const json j = read_json(out / "solve.json");
    CHECK(j["certified"] == true);
    CHECK(j["true_residual"].get<double>() <= 1e-10);
    CHECK(j["vertices"] == 289);
    const std::string csv = slurp(out / "solution.csv");
    CHECK(csv.rfind("vertex,x,y,boundary,u,grad_modulus\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 290);
}

TEST_CASE("shipped Poisson config") {
    const fs::path out = out_dir("shipped_poisson");
    REQUIRE(run("solve " + args(fs::path(QUASILIN_CONFIGS) / "poisson_p2.cfg", out)) == 0);
    CHECK(read_json(out / "solve.json")["true_residual"].get<double>() <= 1e-10);
}

TEST_CASE("usage and config errors exit with 1") {
    CHECK(run("") == 1);
    CHECK(run("frobnicate") == 1);
    CHECK(run("solve") == 1);
    CHECK(run("solve --config /nonexistent.cfg") == 1);
    const fs::path bad = write_cfg("bad.cfg", "psi = { kind = \"p_power\", p = 3 \n[space]\n");
    CHECK(run("solve " + args(bad, out_dir("bad"))) == 1);
    CHECK(slurp(kTmp / "last.log").find("line") != std::string::npos);
    const fs::path unknown = write_cfg("unknown.cfg", "psi = { kind = \"warp\" }\n[space]\nkind = \"path\"\nn = 5\n");
    CHECK(run("solve " + args(unknown, out_dir("unknown"))) == 1);
    CHECK(run("eigen --space path:9") == 1);
    CHECK(run("solve --threads 0 --config x.cfg") == 1);
    CHECK(run("--help") == 0);
}

TEST_CASE("p = 3 runs are byte-identical") {
    const fs::path cfg = write_cfg("p3.cfg", kP3);
    const fs::path a = out_dir("p3_a"), b = out_dir("p3_b");
    REQUIRE(run("solve " + args(cfg, a)) == 0);
    REQUIRE(run("solve " + args(cfg, b)) == 0);
    for (const char* f : {"solve.json", "solution.csv"}) {
        CAPTURE(f);
        const std::string x = slurp(a / f);
        CHECK_FALSE(x.empty());
        CHECK(x == slurp(b / f));
    }
    CHECK(read_json(a / "solve.json")["seed"] == 4);
    const fs::path c = out_dir("p3_seed");
    REQUIRE(run("solve " + args(cfg, c) + " --seed 9") == 0);
    CHECK(read_json(c / "solve.json")["seed"] == 9);
}

TEST_CASE("check-psi on the 3-power conductivity passes") {
    const fs::path cfg = write_cfg("psi3.cfg", "psi = { kind = \"p_power\", p = 3 }\n[check]\nsamples = 2000\n");
    const fs::path out = out_dir("psi3");
    CHECK(run("check-psi " + args(cfg, out)) == 0);
    const json j = read_json(out / "check_psi.json");
    CHECK(j["passed"] == true);
    CHECK(j["phi_M"].size() == 4);
}

TEST_CASE("eigen on a path matches the closed form") {
    const fs::path out = out_dir("eigen_path");
    REQUIRE(run("eigen --space path:9 --k 7 --out \"" + out.string() + "\"") == 0);
    std::istringstream in(slurp(out / "eigenvalues.csv"));
    std::string line;
    std::getline(in, line);
    CHECK(line == "index,eigenvalue");
    const double h = 1.0 / 8.0;
    int rows = 0;
    while (std::getline(in, line)) {
        const auto comma = line.find(',');
        const int j = std::stoi(line.substr(0, comma));
        const double value = std::stod(line.substr(comma + 1));
        const double expected = 4.0 / (h * h) * std::pow(std::sin(j * M_PI / 16.0), 2);
        CHECK(std::abs(value - expected) <= 1e-10 * expected);
        ++rows;
    }
    CHECK(rows == 7);
    CHECK(fs::exists(out / "basis.csv"));

    const fs::path cfg = write_cfg("eigen.cfg", "[space]\nkind = \"path\"\nn = 9\n[eigen]\nk = 3\n");
    const fs::path out2 = out_dir("eigen_cfg");
    REQUIRE(run("eigen " + args(cfg, out2)) == 0);
    CHECK(slurp(out2 / "eigenvalues.csv").rfind("index,eigenvalue\n1,", 0) == 0);
    CHECK(run("eigen --space torus:3 --k 2 --out \"" + out2.string() + "\"") == 1);
}

TEST_CASE("verify with a wrong curvature candidate exits with 2") {
    const char* base = R"([space]
kind = "grid2d"
nx = 7
policy = "full"
[verify]
estimates = ["cd_certify", "bochner"]
battery = 30
)";
    const fs::path ok = write_cfg("cd_ok.cfg", std::string(base) + "K_candidate = 0\n");
    const fs::path out = out_dir("cd_ok");
    CHECK(run("verify " + args(ok, out)) == 0);
    const json j = read_json(out / "verify.json");
    CHECK(j["cd_certify"]["certified"] == true);
    CHECK(j["bochner"]["passed"] == true);

    const fs::path bad = write_cfg("cd_bad.cfg", std::string(base) + "K_candidate = 50\n");
    const fs::path out2 = out_dir("cd_bad");
    CHECK(run("verify " + args(bad, out2)) == 2);
    CHECK(read_json(out2 / "verify.json")["cd_certify"]["certified"] == false);
    CHECK(slurp(out2 / "estimates.csv").rfind("estimate,h,R,p,lhs,rhs,ratio,verdict\n", 0) == 0);
}

TEST_CASE("verify estimates on one level") {
    const fs::path dup = write_cfg("verify_dup.cfg", std::string("f = 2\n") + kP3);
    CHECK(run("verify " + args(dup, out_dir("verify_dup"))) == 1);
    const fs::path good = write_cfg("verify_p3b.cfg", std::string(kP3) + R"([verify]
estimates = ["laplacian_l2", "second_order_ball", "gradient_linf"]
R = 0.25
)");
    const fs::path out = out_dir("verify_p3");
    CHECK(run("verify " + args(good, out)) == 0);
    const json j = read_json(out / "verify.json");
    CHECK(j["estimates"].size() == 3);
    for (const auto& e : j["estimates"]) CHECK(e["ratio"].get<double>() >= 0.0);
}

TEST_CASE("continuation subcommand") {
    const fs::path cfg = write_cfg("cont_delta.cfg", std::string(kP3) + R"([continuation]
kind = "delta"
ladder = [1e-1, 1e-2, 1e-3, 1e-4]
)");
    const fs::path out = out_dir("cont_delta");
    // consecutive rungs still differ by more than distance_tol at delta = 1e-4
    CHECK(run("continuation " + args(cfg, out)) == 2);
    const json j = read_json(out / "continuation.json");
    CHECK(j["continuation"]["rungs"].size() == 4);
    CHECK(slurp(out / "rungs.csv").rfind("rung,parameter,", 0) == 0);

    const fs::path lin = write_cfg("cont_lin.cfg", std::string(kPoisson) + R"([continuation]
kind = "delta"
ladder = [1e-1, 1e-3, 1e-6]
)");
    CHECK(run("continuation " + args(lin, out_dir("cont_lin"))) == 0);

    const fs::path full = write_cfg("cont_full.cfg", kP3);
    const fs::path out2 = out_dir("cont_full");
    CHECK(run("continuation " + args(full, out2)) == 0);
    CHECK(fs::exists(out2 / "rungs_M.csv"));
    CHECK(fs::exists(out2 / "rungs_delta.csv"));

    const fs::path wrong = write_cfg("cont_wrong.cfg", std::string(kP3) + "[continuation]\nkind = \"sideways\"\n");
    CHECK(run("continuation " + args(wrong, out_dir("cont_wrong"))) == 1);
}

}
