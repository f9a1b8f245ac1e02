#pragma once

#include "quasilin/galerkin.hpp"

#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace quasilin {

struct ContinuationRung {
    double parameter = 0.0;  // M, delta or the clamp level n
    SolveReport solve;
    double distance_prev = 0.0;    // W^{1,q} distance to the previous rung (0 on the first)
    double distance_oracle = -1.0;  // W^{1,q} distance to the oracle; -1 when no oracle was run
    double max_gradient = 0.0;      // max interior |grad u|
    double max_gradient_all = 0.0;  // max |grad u| including boundary vertices; truncation above it is inactive
    double flux_l1 = 0.0;           // || Psi_M(|grad u|) |grad u| ||_{L1(m)} (M ladder)
    double uniform_ratio = 0.0;     // flux_l1 / data integral (M ladder)
    double energy_regularized = 0.0;  // F_{Phi^delta}(u_delta) with Phi^delta(t) = Phi(sqrt(t^2 + delta)) (delta ladder)
    double energy_true = 0.0;         // F_Phi(u) of this rung's solution
    double energy_gap = 0.0;          // energy_regularized - F_Phi(oracle) (delta ladder)
    double gradient_norm = 0.0;       // || |grad u_n| ||_{L^{p-1}} (f ladder)
};

struct ContinuationReport {
    std::string kind;  // "M", "delta" or "f"
    double q = 2.0;    // exponent of the distances
    std::vector<ContinuationRung> rungs;
    std::optional<SolveReport> oracle;
    double solution_scale = 0.0;  // W^{1,q} norm of the oracle (or of the last rung)
    bool converged = false;
    bool distances_decreasing = false;  // distances to the oracle (or between rungs) decrease
    bool aborted = false;
    std::string message;
};

struct ContinuationOptions {
    double tol = 1e-10;           // per-rung solver tolerance
    double distance_tol = 1e-8;   // consecutive W^{1,q} distance declaring convergence
    double stationary_tol = 1e-10;  // distances at or below this count as zero when testing monotonicity
    bool run_oracle = true;       // direct minimization with the true Psi
    int max_newton = 200;
    std::optional<VertexFunction> initial;  // warm start of the first rung
    double M = std::numeric_limits<double>::infinity();  // truncation kept fixed along a delta ladder
};

/// Solves with Psi(min(t, M)) for increasing M, warm-starting each rung.
ContinuationReport m_truncation_path(const DirichletProblem& problem, const std::vector<double>& Ms,
                                     const ContinuationOptions& options = {});

/// Solves with Psi(sqrt(t^2 + delta)) for decreasing delta, warm-starting each rung.
ContinuationReport delta_regularization_path(const DirichletProblem& problem, const std::vector<double>& deltas,
                                             const ContinuationOptions& options = {});

/// Solves with the clamped data f_n = max(-n, min(f, n)) for increasing n and compares
/// with the solution for f; distances are || |grad(u_n - u)| ||_{L^{p-1}(m)}.
ContinuationReport f_continuity_study(const DirichletProblem& problem, const std::vector<double>& ns,
                                      const ContinuationOptions& options = {});

struct SolveStrategy {
    std::vector<double> Ms;      // default 2^0 .. 2^10
    std::vector<double> deltas;  // default 10^-1 .. 10^-8
    double tol = 1e-10;
    double certify_tol = 1e-8;  // true-Psi scaled residual
    bool exact_final = true;    // finish with a delta = 0 rung on the true Psi
    bool experimental_delta_first = false;
    bool run_oracle = false;

    static SolveStrategy defaults();
};

struct FullSolveReport {
    SolveReport solve;  // final rung
    ContinuationReport m_ladder;
    ContinuationReport delta_ladder;
    double true_residual = 0.0;
    bool certified = false;
    bool linear_path = false;
    std::string message;
};

/// Galerkin full-dimension solves along truncate_M(regularize_delta(Psi, delta_0), M)
/// for M up the ladder, then regularize_delta(Psi, delta) for delta down the ladder.
FullSolveReport solve_full(const DirichletProblem& problem, const SolveStrategy& strategy = SolveStrategy::defaults());

/// Adapter from a Galerkin solve to the common report shape.
SolveReport to_solve_report(const DirichletProblem& problem, const GalerkinSolution& sol, const std::string& method);

}  // namespace quasilin
