#include "quasilin/continuation.hpp"

#include <algorithm>
#include <cmath>

namespace quasilin {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw InvalidArgument(what);
}

double interior_max(const GraphSpace& s, const VertexFunction& v) {
    double out = 0.0;
    for (Index x : s.interior()) out = std::max(out, v[x]);
    return out;
}

GalerkinSolution rung_solve(const DirichletProblem& problem, double M, const std::optional<VertexFunction>& initial,
                            const ContinuationOptions& opt) {
    GalerkinOptions g;
    g.M = M;
    g.tol = opt.tol;
    g.max_iter = opt.max_newton;
    g.initial = initial;
    return solve_full_dimension(problem, g);
}

// Strict decrease, except that values already at the stationary floor may stay there.
void finish_monotonicity_floor(ContinuationReport& rep, bool use_oracle, double floor) {
    rep.distances_decreasing = true;
    const std::size_t first = use_oracle ? 0 : 1;
    for (std::size_t i = first + 1; i < rep.rungs.size(); ++i) {
        const double prev = use_oracle ? rep.rungs[i - 1].distance_oracle : rep.rungs[i - 1].distance_prev;
        const double cur = use_oracle ? rep.rungs[i].distance_oracle : rep.rungs[i].distance_prev;
        if (cur < prev) continue;
        if (prev <= floor && cur <= floor) continue;
        rep.distances_decreasing = false;
    }
}

std::optional<SolveReport> run_oracle(const DirichletProblem& problem, const ContinuationOptions& opt) {
    if (!opt.run_oracle) return std::nullopt;
    DirectOptions d;
    d.tol = opt.tol;
    d.record_history = false;
    SolveReport r = minimize_direct(problem, d);
    if (!r.converged) throw NumericalError("oracle minimization did not converge: " + r.message);
    return r;
}

}  // namespace

SolveReport to_solve_report(const DirichletProblem& problem, const GalerkinSolution& sol, const std::string& method) {
    SolveReport r;
    r.u = sol.u;
    r.iterations = sol.iterations;
    r.converged = sol.converged;
    r.residual = sol.projected_residual;
    r.energy = sol.energy;
    r.residual_history = sol.residual_history;
    r.method = method;
    r.psi_name = problem.psi.name();
    r.message = sol.message;
    return r;
}

ContinuationReport m_truncation_path(const DirichletProblem& problem, const std::vector<double>& Ms,
                                     const ContinuationOptions& opt) {
    require(!Ms.empty(), "M ladder is empty");
    for (std::size_t i = 0; i < Ms.size(); ++i) {
        require(Ms[i] > 0.0, "M ladder values must be positive");
        require(i == 0 || Ms[i] > Ms[i - 1], "M ladder must be strictly increasing");
    }
    const PsiMeta& meta = problem.psi.meta();
    require(meta.p < 2.0 || (meta.c && *meta.c > 0.0),
            "M truncation with p >= 2 needs Psi >= c > 0 (regularize the conductivity first)");
    const GraphSpace& s = problem.space;
    const double p = meta.p;
    ContinuationReport rep;
    rep.kind = "M";
    rep.q = std::min(p, 2.0);

    const VertexFunction lift = harmonic_lift(problem);
    const VertexFunction grad_lift = gradient_modulus(s, lift);
    const double p_dual = p / (p - 1.0);
    double data = 0.0;
    for (Index x = 0; x < s.vertex_count(); ++x) {
        double term = std::pow(std::abs(lift[x]), p) + std::pow(grad_lift[x], std::max(p, 2.0)) + 1.0;
        if (!s.is_boundary(x)) term += std::pow(std::abs(problem.f[x]), std::max(p_dual, 2.0));
        data += s.mass()[x] * term;
    }

    rep.oracle = run_oracle(problem, opt);
    if (rep.oracle) rep.solution_scale = w1q_norm(s, rep.oracle->u, rep.q);

    std::optional<VertexFunction> warm = opt.initial;
    for (double M : Ms) {
        const GalerkinSolution sol = rung_solve(problem, M, warm, opt);
        ContinuationRung rung;
        rung.parameter = M;
        rung.solve = to_solve_report(problem, sol, "galerkin-full");
        if (!sol.converged) {
            rep.aborted = true;
            rep.message = "rung M=" + std::to_string(M) + " failed: " + sol.message;
            rep.rungs.push_back(std::move(rung));
            return rep;
        }
        const VertexFunction g = gradient_modulus(s, sol.u);
        rung.max_gradient = interior_max(s, g);
        rung.max_gradient_all = g.maxCoeff();
        for (Index x = 0; x < s.vertex_count(); ++x)
            if (g[x] > 0.0) rung.flux_l1 += s.mass()[x] * problem.psi(std::min(g[x], M)) * g[x];
        rung.uniform_ratio = rung.flux_l1 / data;
        rung.energy_true = energy(problem, sol.u);
        if (warm && !rep.rungs.empty()) rung.distance_prev = w1q_norm(s, sol.u - *warm, rep.q);
        if (rep.oracle) rung.distance_oracle = w1q_norm(s, sol.u - rep.oracle->u, rep.q);
        warm = sol.u;
        rep.rungs.push_back(std::move(rung));
    }
    if (!rep.oracle) rep.solution_scale = w1q_norm(s, rep.rungs.back().solve.u, rep.q);
    const double scale = std::max(1.0, rep.solution_scale);
    finish_monotonicity_floor(rep, rep.oracle.has_value(), opt.stationary_tol * scale);
    const ContinuationRung& last = rep.rungs.back();
    rep.converged = rep.rungs.size() >= 2 && last.distance_prev < opt.distance_tol * scale && last.parameter > last.max_gradient_all;
    if (!rep.converged && rep.message.empty()) rep.message = "ladder ended before the truncation became inactive";
    return rep;
}

ContinuationReport delta_regularization_path(const DirichletProblem& problem, const std::vector<double>& deltas,
                                             const ContinuationOptions& opt) {
    require(!deltas.empty(), "delta ladder is empty");
    for (std::size_t i = 0; i < deltas.size(); ++i) {
        require(deltas[i] > 0.0, "delta ladder values must be positive");
        require(i == 0 || deltas[i] < deltas[i - 1], "delta ladder must be strictly decreasing");
    }
    const GraphSpace& s = problem.space;
    ContinuationReport rep;
    rep.kind = "delta";
    rep.q = problem.psi.meta().p;
    rep.oracle = run_oracle(problem, opt);
    double oracle_energy = 0.0;
    if (rep.oracle) {
        rep.solution_scale = w1q_norm(s, rep.oracle->u, rep.q);
        oracle_energy = energy(problem, rep.oracle->u);
    }
    double total_a = 0.0;
    for (Index x = 0; x < s.vertex_count(); ++x) total_a += s.mass()[x] * (problem.a ? (*problem.a)[x] : 1.0);

    std::optional<VertexFunction> warm = opt.initial;
    for (double delta : deltas) {
        const DirichletProblem reg = with_psi(problem, regularize_delta(problem.psi, delta));
        const GalerkinSolution sol = rung_solve(reg, opt.M, warm, opt);
        ContinuationRung rung;
        rung.parameter = delta;
        rung.solve = to_solve_report(reg, sol, "galerkin-full");
        if (!sol.converged) {
            rep.aborted = true;
            rep.message = "rung delta=" + std::to_string(delta) + " failed: " + sol.message;
            rep.rungs.push_back(std::move(rung));
            return rep;
        }
        const VertexFunction g = gradient_modulus(s, sol.u);
        rung.max_gradient = interior_max(s, g);
        rung.max_gradient_all = g.maxCoeff();
        // the regularized potential is shifted to vanish at 0; undo the shift
        rung.energy_regularized = energy(reg, sol.u) + problem.psi.phi(std::sqrt(delta)) * total_a;
        rung.energy_true = energy(problem, sol.u);
        rung.energy_gap = rung.energy_regularized - oracle_energy;
        if (warm && !rep.rungs.empty()) rung.distance_prev = w1q_norm(s, sol.u - *warm, rep.q);
        if (rep.oracle) rung.distance_oracle = w1q_norm(s, sol.u - rep.oracle->u, rep.q);
        warm = sol.u;
        rep.rungs.push_back(std::move(rung));
    }
    if (!rep.oracle) rep.solution_scale = w1q_norm(s, rep.rungs.back().solve.u, rep.q);
    const double scale = std::max(1.0, rep.solution_scale);
    finish_monotonicity_floor(rep, rep.oracle.has_value(), opt.stationary_tol * scale);
    const ContinuationRung& last = rep.rungs.back();
    rep.converged = rep.rungs.size() >= 2 && last.distance_prev < opt.distance_tol * scale;
    if (!rep.converged && rep.message.empty()) rep.message = "consecutive rungs still differ above distance_tol";
    return rep;
}

ContinuationReport f_continuity_study(const DirichletProblem& problem, const std::vector<double>& ns,
                                      const ContinuationOptions& opt) {
    require(!ns.empty(), "clamp ladder is empty");
    for (std::size_t i = 0; i < ns.size(); ++i) {
        require(ns[i] > 0.0, "clamp levels must be positive");
        require(i == 0 || ns[i] > ns[i - 1], "clamp levels must be strictly increasing");
    }
    const double p = problem.psi.meta().p;
    require(p > 1.0, "f continuity needs p > 1");
    const GraphSpace& s = problem.space;
    ContinuationReport rep;
    rep.kind = "f";
    rep.q = p - 1.0;

    const GalerkinSolution ref = rung_solve(problem, std::numeric_limits<double>::infinity(), opt.initial, opt);
    if (!ref.converged) throw NumericalError("f continuity: reference solve failed: " + ref.message);
    rep.oracle = to_solve_report(problem, ref, "galerkin-full");
    rep.solution_scale = lq_norm(s, gradient_modulus(s, ref.u), rep.q);

    std::optional<VertexFunction> warm = ref.u;
    VertexFunction prev_u;
    for (double n : ns) {
        const VertexFunction fn = problem.f.cwiseMax(-n).cwiseMin(n);
        const DirichletProblem pn = with_f(problem, fn);
        const GalerkinSolution sol = rung_solve(pn, std::numeric_limits<double>::infinity(), warm, opt);
        ContinuationRung rung;
        rung.parameter = n;
        rung.solve = to_solve_report(pn, sol, "galerkin-full");
        if (!sol.converged) {
            rep.aborted = true;
            rep.message = "rung n=" + std::to_string(n) + " failed: " + sol.message;
            rep.rungs.push_back(std::move(rung));
            return rep;
        }
        const VertexFunction g = gradient_modulus(s, sol.u);
        rung.max_gradient = interior_max(s, g);
        rung.max_gradient_all = g.maxCoeff();
        rung.gradient_norm = lq_norm(s, g, rep.q);
        rung.energy_true = energy(pn, sol.u);
        rung.distance_oracle = lq_norm(s, gradient_modulus(s, sol.u - ref.u), rep.q);
        if (!rep.rungs.empty()) rung.distance_prev = lq_norm(s, gradient_modulus(s, sol.u - prev_u), rep.q);
        prev_u = sol.u;
        rep.rungs.push_back(std::move(rung));
    }
    finish_monotonicity_floor(rep, true, 0.0);
    rep.converged = rep.rungs.back().distance_oracle <= opt.distance_tol * std::max(1.0, rep.solution_scale);
    if (!rep.converged) rep.message = "largest clamp level still differs from the reference";
    return rep;
}

SolveStrategy SolveStrategy::defaults() {
    SolveStrategy s;
    for (int j = 0; j <= 10; ++j) s.Ms.push_back(std::ldexp(1.0, j));
    for (int j = 1; j <= 8; ++j) s.deltas.push_back(std::pow(10.0, -j));
    return s;
}

FullSolveReport solve_full(const DirichletProblem& problem, const SolveStrategy& strategy) {
    validate(problem);
    require(!strategy.deltas.empty() && !strategy.Ms.empty(), "solve_full needs nonempty M and delta ladders");
    require(strategy.tol > 0.0 && strategy.certify_tol > 0.0, "tolerances must be positive");
    FullSolveReport out;
    ContinuationOptions opt;
    opt.tol = strategy.tol;
    opt.run_oracle = strategy.run_oracle;

    const PsiMeta& meta = problem.psi.meta();
    auto certify = [&](const VertexFunction& u) {
        out.true_residual = scaled_residual(problem, el_residual(problem, u));
        out.certified = out.true_residual <= strategy.certify_tol;
        if (!out.certified)
            out.message = "true-Psi residual " + std::to_string(out.true_residual) + " exceeds certify_tol";
    };

    if (meta.lambda == 0.0 && meta.Lambda == 0.0) {
        // constant conductivity: one linear solve, ladders are trivial
        out.linear_path = true;
        const GalerkinSolution sol = rung_solve(problem, std::numeric_limits<double>::infinity(), std::nullopt, opt);
        out.solve = to_solve_report(problem, sol, "galerkin-full");
        certify(sol.u);
        return out;
    }

    std::optional<VertexFunction> warm;
    if (!strategy.experimental_delta_first) {
        const DirichletProblem reg0 = with_psi(problem, regularize_delta(problem.psi, strategy.deltas.front()));
        out.m_ladder = m_truncation_path(reg0, strategy.Ms, opt);
        if (out.m_ladder.aborted) {
            out.message = "M ladder: " + out.m_ladder.message;
            out.solve = out.m_ladder.rungs.size() > 1 ? out.m_ladder.rungs[out.m_ladder.rungs.size() - 2].solve
                                                      : out.m_ladder.rungs.back().solve;
            return out;
        }
        opt.initial = out.m_ladder.rungs.back().solve.u;
        out.delta_ladder = delta_regularization_path(problem, strategy.deltas, opt);
    } else {
        opt.M = strategy.Ms.front();
        out.delta_ladder = delta_regularization_path(problem, strategy.deltas, opt);
        if (!out.delta_ladder.aborted) {
            opt.M = std::numeric_limits<double>::infinity();
            opt.initial = out.delta_ladder.rungs.back().solve.u;
            const DirichletProblem last =
                with_psi(problem, regularize_delta(problem.psi, strategy.deltas.back()));
            if (meta.p < 2.0 || last.psi.meta().c) out.m_ladder = m_truncation_path(last, strategy.Ms, opt);
        }
    }
    const ContinuationReport& tail = strategy.experimental_delta_first && !out.m_ladder.rungs.empty() ? out.m_ladder
                                                                                                      : out.delta_ladder;
    if (tail.aborted) {
        out.message = tail.kind + " ladder: " + tail.message;
        out.solve = tail.rungs.size() > 1 ? tail.rungs[tail.rungs.size() - 2].solve : tail.rungs.back().solve;
        return out;
    }
    warm = tail.rungs.back().solve.u;
    out.solve = tail.rungs.back().solve;
    if (strategy.exact_final) {
        const GalerkinSolution sol = rung_solve(problem, std::numeric_limits<double>::infinity(), warm, opt);
        if (sol.converged) {
            out.solve = to_solve_report(problem, sol, "galerkin-full");
        } else {
            out.message = "delta = 0 rung did not converge (" + sol.message + "); reporting the last regularized rung";
        }
    }
    certify(out.solve.u);
    return out;
}

}  // namespace quasilin
