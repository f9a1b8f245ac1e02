#include "commands.hpp"

#include "quasilin/report.hpp"

#include <cmath>
#include <filesystem>
#include <iostream>
#include <sstream>

namespace quasilin::cli {

using nlohmann::json;

namespace {

std::string in_out(const RunContext& ctx, const std::string& name) {
    std::filesystem::create_directories(ctx.out_dir);
    return (std::filesystem::path(ctx.out_dir) / name).string();
}

double num_or(const json& j, const char* key, double fallback) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_number()) throw ConfigError(std::string("'") + key + "' must be a number");
    return j.at(key).get<double>();
}

std::vector<double> list_or(const json& j, const char* key, std::vector<double> fallback) {
    if (!j.contains(key)) return fallback;
    std::vector<double> out;
    for (const auto& v : j.at(key)) {
        if (!v.is_number()) throw ConfigError(std::string("'") + key + "' must be a list of numbers");
        out.push_back(v.get<double>());
    }
    return out;
}

Index nearest_vertex(const GraphSpace& s, double x, double y) {
    if (static_cast<Index>(s.coordinates().size()) != s.vertex_count())
        throw ConfigError("a center position needs vertex coordinates");
    Index best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (Index v = 0; v < s.vertex_count(); ++v) {
        const auto& c = s.coordinates()[static_cast<std::size_t>(v)];
        const double d = std::hypot(c[0] - x, c[1] - y);
        if (d < bd) {
            bd = d;
            best = v;
        }
    }
    return best;
}

Index center_of(const GraphSpace& s, const json& sec) {
    if (sec.contains("center_vertex")) return sec.at("center_vertex").get<Index>();
    if (sec.contains("center")) {
        const auto xs = list_or(sec, "center", {});
        if (xs.empty()) throw ConfigError("center must have coordinates");
        return nearest_vertex(s, xs[0], xs.size() > 1 ? xs[1] : 0.0);
    }
    if (static_cast<Index>(s.coordinates().size()) != s.vertex_count())
        throw ConfigError("verify needs center_vertex when the space has no coordinates");
    double cx = 0.0, cy = 0.0;
    for (const auto& c : s.coordinates()) {
        cx += c[0];
        cy += c[1];
    }
    const double n = static_cast<double>(s.vertex_count());
    return nearest_vertex(s, cx / n, cy / n);
}

struct Outcome {
    SolveReport report;
    double true_residual = 0.0;
    bool certified = false;
    json details = json::object();
};

Outcome solve_problem(const ExperimentConfig& cfg, const DirichletProblem& problem) {
    Outcome o;
    const std::string method = cfg.method();
    const double certify_tol = num_or(cfg.section("solver"), "certify_tol", 1e-8);
    if (method == "direct") {
        DirectOptions d;
        d.tol = cfg.tol();
        if (cfg.max_iter() > 0) d.max_iter = cfg.max_iter();
        o.report = minimize_direct(problem, d);
        o.true_residual = scaled_residual(problem, el_residual(problem, o.report.u));
        o.certified = o.report.converged && o.true_residual <= certify_tol;
    } else if (method == "galerkin") {
        const json& g = cfg.section("galerkin");
        const Index k = g.contains("k") ? g.at("k").get<Index>() : problem.space.interior_count();
        GalerkinOptions opt;
        opt.tol = cfg.tol();
        opt.M = num_or(g, "M", std::numeric_limits<double>::infinity());
        if (cfg.max_iter() > 0) opt.max_iter = cfg.max_iter();
        GalerkinSolution sol;
        if (k == problem.space.interior_count()) {
            sol = solve_full_dimension(problem, opt);
        } else {
            sol = solve_reduced(problem, dirichlet_eigenbasis(problem.space, k), opt);
        }
        o.report = to_solve_report(problem, sol, k == problem.space.interior_count() ? "galerkin-full" : "galerkin");
        o.true_residual = scaled_residual(problem, el_residual(problem, sol.u));
        const bool exact = k == problem.space.interior_count() && std::isinf(opt.M);
        o.certified = sol.converged && (!exact || o.true_residual <= certify_tol);
        o.details = json{{"k", k}, {"M", number_json(opt.M)}, {"gradient_fallbacks", sol.gradient_fallbacks}};
        if (k < problem.space.interior_count()) {
            json c = json::array();
            for (Index i = 0; i < sol.coefficients.size(); ++i) c.push_back(sol.coefficients[i]);
            o.details["coefficients"] = c;
        }
    } else {
        const FullSolveReport r = solve_full(problem, cfg.strategy());
        o.report = r.solve;
        o.true_residual = r.true_residual;
        o.certified = r.certified;
        o.details = to_json(r);
        o.details.erase("solve");
    }
    return o;
}

json problem_summary(const ExperimentConfig& cfg, const DirichletProblem& p) {
    char hash[24];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(p.space.content_hash()));
    return json{{"config", cfg.raw},
                {"space_hash", hash},
                {"vertices", p.space.vertex_count()},
                {"interior", p.space.interior_count()},
                {"psi", p.psi.name()},
                {"psi_meta", to_json(p.psi.meta())},
                {"seed", cfg.seed}};
}

void write_solution(const RunContext& ctx, const DirichletProblem& p, const VertexFunction& u, const std::string& name) {
    std::ostringstream csv;
    write_vertex_csv(csv, p.space, {{"u", u}, {"grad_modulus", gradient_modulus(p.space, u)}});
    write_text_file(in_out(ctx, name), csv.str());
}

GraphSpace space_from_shorthand(const std::string& spec) {
    if (std::filesystem::exists(spec)) return read_graph_file(spec);
    std::vector<std::string> parts;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ':')) parts.push_back(item);
    if (parts.empty()) throw InvalidArgument("empty space spec");
    DomainSpec d;
    d.kind = parts[0];
    auto need = [&](std::size_t n) {
        if (parts.size() < n) throw InvalidArgument("space spec '" + spec + "' has too few fields");
    };
    if (d.kind == "path" || d.kind == "cycle") {
        need(2);
        d.n = std::stol(parts[1]);
        d.h = parts.size() > 2 ? std::stod(parts[2]) : 1.0 / static_cast<double>(d.kind == "cycle" ? d.n : d.n - 1);
    } else if (d.kind == "grid2d") {
        need(3);
        d.nx = std::stol(parts[1]);
        d.ny = std::stol(parts[2]);
        d.h = parts.size() > 3 ? std::stod(parts[3]) : 1.0 / static_cast<double>(d.nx - 1);
    } else if (d.kind == "annulus2d") {
        need(4);
        d.r_in = std::stod(parts[1]);
        d.r_out = std::stod(parts[2]);
        d.h = std::stod(parts[3]);
    } else {
        throw InvalidArgument("unknown space kind '" + d.kind + "' (expected a graph file, path:n, grid2d:nx:ny, ...)");
    }
    return build_space(d);
}

void write_eigen(const EigenBasis& basis, const std::string& basis_path, const std::string& values_path) {
    std::ostringstream b;
    write_basis_csv(b, basis);
    write_text_file(basis_path, b.str());
    std::ostringstream v;
    v << "index,eigenvalue\n";
    for (Index i = 0; i < basis.size(); ++i) v << (i + 1) << ',' << format_double(basis.eigenvalues[i]) << '\n';
    write_text_file(values_path, v.str());
}

}  // namespace

int cmd_solve(const RunContext& ctx) {
    const DirichletProblem problem = ctx.config.problem();
    const Outcome o = solve_problem(ctx.config, problem);
    json j = problem_summary(ctx.config, problem);
    j["report"] = to_json(o.report);
    j["residual"] = number_json(o.report.residual);
    j["true_residual"] = number_json(o.true_residual);
    j["certified"] = o.certified;
    j["details"] = o.details;
    write_json_file(in_out(ctx, "solve.json"), j);
    write_solution(ctx, problem, o.report.u, "solution.csv");
    std::cout << "solve: " << (o.certified ? "certified" : "NOT certified") << ", residual "
              << format_double(o.report.residual) << ", true-Psi residual " << format_double(o.true_residual) << '\n';
    return o.certified ? 0 : 2;
}

int cmd_eigen(const RunContext& ctx, std::optional<Index> k_override) {
    const GraphSpace space = ctx.config.space();
    const json& e = ctx.config.section("eigen");
    const Index k = k_override ? *k_override : (e.contains("k") ? e.at("k").get<Index>() : 8);
    const EigenBasis basis = dirichlet_eigenbasis(space, k);
    write_eigen(basis, in_out(ctx, "basis.csv"), in_out(ctx, "eigenvalues.csv"));
    std::cout << "eigen: " << k << " Dirichlet eigenpairs, lambda_1 = " << format_double(basis.eigenvalues[0]) << '\n';
    return 0;
}

int cmd_eigen_space(const std::string& space_spec, Index k, const std::string& out) {
    const GraphSpace space = space_from_shorthand(space_spec);
    const EigenBasis basis = dirichlet_eigenbasis(space, k);
    std::filesystem::path basis_path = out, values_path;
    if (basis_path.extension() == ".csv") {
        if (basis_path.has_parent_path()) std::filesystem::create_directories(basis_path.parent_path());
        values_path = basis_path;
        values_path.replace_extension(".eigenvalues.csv");
    } else {
        std::filesystem::create_directories(basis_path);
        values_path = basis_path / "eigenvalues.csv";
        basis_path /= "basis.csv";
    }
    write_eigen(basis, basis_path.string(), values_path.string());
    std::cout << "eigen: " << k << " Dirichlet eigenpairs, lambda_1 = " << format_double(basis.eigenvalues[0]) << '\n';
    return 0;
}

int cmd_continuation(const RunContext& ctx) {
    const DirichletProblem problem = ctx.config.problem();
    const json& c = ctx.config.section("continuation");
    const std::string kind = c.contains("kind") ? c.at("kind").get<std::string>() : "full";
    ContinuationOptions opt;
    opt.tol = ctx.config.tol();
    opt.run_oracle = !c.contains("oracle") || c.at("oracle").get<bool>();
    opt.distance_tol = num_or(c, "distance_tol", opt.distance_tol);
    json j = problem_summary(ctx.config, problem);
    bool ok = false;
    if (kind == "full") {
        const FullSolveReport r = solve_full(problem, ctx.config.strategy());
        j["continuation"] = to_json(r);
        std::ostringstream m, d;
        write_rungs_csv(m, r.m_ladder);
        write_rungs_csv(d, r.delta_ladder);
        write_text_file(in_out(ctx, "rungs_M.csv"), m.str());
        write_text_file(in_out(ctx, "rungs_delta.csv"), d.str());
        write_solution(ctx, problem, r.solve.u, "solution.csv");
        ok = r.certified;
    } else {
        ContinuationReport r;
        if (kind == "M") {
            r = m_truncation_path(problem, list_or(c, "ladder", SolveStrategy::defaults().Ms), opt);
        } else if (kind == "delta") {
            r = delta_regularization_path(problem, list_or(c, "ladder", SolveStrategy::defaults().deltas), opt);
        } else if (kind == "f") {
            r = f_continuity_study(problem, list_or(c, "ladder", {1.0, 10.0, 100.0}), opt);
        } else {
            throw ConfigError("unknown continuation kind '" + kind + "' (M, delta, f or full)");
        }
        j["continuation"] = to_json(r);
        std::ostringstream csv;
        write_rungs_csv(csv, r);
        write_text_file(in_out(ctx, "rungs.csv"), csv.str());
        if (!r.rungs.empty()) write_solution(ctx, problem, r.rungs.back().solve.u, "solution.csv");
        ok = !r.aborted && r.distances_decreasing && (kind == "f" || r.converged);
    }
    write_json_file(in_out(ctx, "continuation.json"), j);
    std::cout << "continuation (" << kind << "): " << (ok ? "converged" : "NOT certified") << '\n';
    return ok ? 0 : 2;
}

int cmd_verify(const RunContext& ctx) {
    const json& v = ctx.config.section("verify");
    std::vector<std::string> selected;
    if (v.contains("estimates")) {
        for (const auto& e : v.at("estimates")) selected.push_back(e.get<std::string>());
    } else {
        selected = {"laplacian_l2", "second_order_ball", "gradient_linf"};
    }
    auto wants = [&](const std::string& name) {
        return std::find(selected.begin(), selected.end(), name) != selected.end();
    };
    for (const auto& s : selected) {
        if (s != "laplacian_l2" && s != "second_order_ball" && s != "gradient_linf" && s != "cd_certify" &&
            s != "bochner")
            throw ConfigError("unknown estimate '" + s + "'");
    }

    json j = json::object();
    j["config"] = ctx.config.raw;
    j["seed"] = ctx.seed;
    bool pass = true;
    std::vector<EstimateReport> rows;

    const bool any_estimate = wants("laplacian_l2") || wants("second_order_ball") || wants("gradient_linf");
    if (any_estimate) {
        const std::vector<double> levels = list_or(v, "levels", {});
        const double R = num_or(v, "R", 0.25);
        const double window = num_or(v, "window_radius", 0.25);
        const double q = num_or(v, "q", 4.0);
        const double C0 = num_or(v, "C0", std::numeric_limits<double>::infinity());
        const double factor = num_or(v, "factor", 4.0);

        auto measure = [&](const ExperimentConfig& cfg, std::vector<EstimateReport>& out) {
            const DirichletProblem problem = cfg.problem();
            const Outcome o = solve_problem(cfg, problem);
            if (!o.certified) throw NumericalError("verify: solve failed (true residual " + format_double(o.true_residual) + ")");
            const Index c = center_of(problem.space, v);
            if (wants("laplacian_l2"))
                out.push_back(laplacian_l2_ratio(problem, o.report.u, ball(problem.space, c, window).members));
            if (wants("second_order_ball")) out.push_back(second_order_ball_ratio(problem, o.report.u, c, R));
            if (wants("gradient_linf")) out.push_back(gradient_linf_ratio(problem, o.report.u, c, R, q, C0));
        };

        if (levels.empty()) {
            measure(ctx.config, rows);
            for (auto& r : rows) r.verdict = r.defined ? "measured" : "excluded";
        } else {
            if (levels.size() < 3) throw ConfigError("verify levels needs at least 3 entries");
            std::vector<std::vector<EstimateReport>> per_level;
            for (double h : levels) {
                ExperimentConfig cfg = ctx.config;
                auto& sp = cfg.raw["space"];
                sp["h"] = h;
                if (sp.value("kind", "") == "grid2d") {
                    const auto n = static_cast<long long>(std::llround(1.0 / h)) + 1;
                    sp["nx"] = n;
                    sp["ny"] = n;
                }
                std::vector<EstimateReport> level;
                measure(cfg, level);
                per_level.push_back(std::move(level));
            }
            json tables = json::array();
            for (std::size_t e = 0; e < per_level.front().size(); ++e) {
                std::vector<EstimateReport> study;
                for (const auto& level : per_level) study.push_back(level[e]);
                const RefinementTable t = refinement_study(study, factor);
                if (t.verdict == "unbounded") pass = false;
                tables.push_back(to_json(t));
                rows.insert(rows.end(), t.rows.begin(), t.rows.end());
            }
            j["refinement"] = tables;
        }
    }
    json est = json::array();
    for (const auto& r : rows) est.push_back(to_json(r));
    j["estimates"] = est;

    if (wants("cd_certify") || wants("bochner")) {
        const GraphSpace space = ctx.config.space();
        const double K = num_or(v, "K_candidate", space.curvature() ? space.curvature()->K : 0.0);
        const auto battery = static_cast<std::size_t>(num_or(v, "battery", 200));
        const CdCertificate cert = cd_certify(space, K, ctx.seed, battery);
        j["cd_certify"] = to_json(cert);
        if (!cert.certified) pass = false;
        if (wants("bochner")) {
            if (!cert.certified) {
                j["bochner"] = json{{"skipped", "curvature not certified"}};
            } else {
                GraphSpace declared = space;
                if (!declared.curvature()) declared.set_curvature({K, std::numeric_limits<double>::infinity()});
                const auto us = cd_battery(declared, ctx.seed, battery);
                std::vector<VertexFunction> phis;
                for (const auto& u : us) {
                    VertexFunction phi = u.cwiseAbs();
                    for (Index x = 0; x < phi.size(); ++x)
                        if (declared.is_boundary(x)) phi[x] = 0.0;
                    phis.push_back(phi);
                    if (phis.size() == 8) break;
                }
                const CdCertificate cert2 = cd_certify(declared, K, ctx.seed, battery);
                const BochnerReport b = bochner_check(declared, us, phis, cert2);
                j["bochner"] = to_json(b);
                if (!b.passed) pass = false;
            }
        }
    }
    j["passed"] = pass;
    write_json_file(in_out(ctx, "verify.json"), j);
    std::ostringstream csv;
    write_estimate_csv(csv, rows);
    write_text_file(in_out(ctx, "estimates.csv"), csv.str());
    std::cout << "verify: " << (pass ? "pass" : "FAIL") << '\n';
    return pass ? 0 : 2;
}

int cmd_check_psi(const RunContext& ctx) {
    const Conductivity psi = ctx.config.psi();
    const json& c = ctx.config.section("check");
    const std::vector<double> grid = log_grid(num_or(c, "lo", 1e-4), num_or(c, "hi", 1e4),
                                              static_cast<int>(num_or(c, "points", 200)));
    json j{{"config", ctx.config.raw}, {"psi", psi.name()}, {"meta", to_json(psi.meta())}, {"seed", ctx.seed}};
    const InvariantReport inv = check_invariants(psi, grid);
    const PsiBasicReport basic = check_psi_basic(psi, grid);
    j["invariants"] = to_json(inv);
    j["psi_basic"] = to_json(basic);
    bool pass = inv.ok() && basic.max_violation() <= 1e-9;
    json phim = json::array();
    for (double M : list_or(c, "Ms", {1.0, 2.0, 4.0, 8.0})) {
        const PhiMReport r = check_phiM_properties(psi, M, grid);
        phim.push_back(to_json(r));
        pass = pass && r.passed();
    }
    j["phi_M"] = phim;
    if (psi.meta().lambda <= 0.0) {
        const GapSuiteReport g = gap_suite(psi, static_cast<std::size_t>(num_or(c, "samples", 10000)), ctx.seed);
        j["gaps"] = json{{"samples", g.samples},
                         {"convexity", number_json(g.convexity)},
                         {"bregman", number_json(g.bregman)},
                         {"monotonicity", number_json(g.monotonicity)},
                         {"vector_bregman", number_json(g.vector_bregman)}};
        pass = pass && g.worst() >= -1e-12;
    } else {
        j["gaps"] = json{{"skipped", "lambda > 0: the quantitative monotonicity constants need lambda <= 0"}};
    }
    j["passed"] = pass;
    write_json_file(in_out(ctx, "check_psi.json"), j);
    std::cout << "check-psi " << psi.name() << ": " << (pass ? "pass" : "FAIL") << '\n';
    return pass ? 0 : 2;
}

}  // namespace quasilin::cli
