#pragma once

#include "quasilin/conductivity.hpp"
#include "quasilin/space.hpp"

#include <Eigen/SparseCore>

#include <optional>
#include <string>
#include <vector>

namespace quasilin {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// div(a Psi(|grad u|) grad u) = f in the interior, u = g on the boundary.
struct DirichletProblem {
    GraphSpace space;
    Conductivity psi;
    VertexFunction f;  // read on interior vertices
    VertexFunction g;  // read on boundary vertices; interior entries seed the initial guess
    std::optional<VertexFunction> a;
    double A = 1.0;  // declared bound A^-1 <= a <= A
};

/// Throws InvalidArgument on size mismatches, non-finite data, a outside [1/A, A],
/// or an empty boundary.
void validate(const DirichletProblem& problem);

/// u with boundary entries replaced by g.
VertexFunction apply_boundary(const DirichletProblem& problem, VertexFunction u);
/// The same problem with a different conductivity (ladders, oracles).
DirichletProblem with_psi(const DirichletProblem& problem, Conductivity psi);
DirichletProblem with_f(const DirichletProblem& problem, VertexFunction f);

struct SolveReport {
    VertexFunction u;
    int iterations = 0;
    bool converged = false;
    double residual = 0.0;  // m-weighted l2 norm of el_residual divided by (||f|| + 1)
    double energy = 0.0;
    std::vector<double> residual_history;
    std::vector<double> energy_history;
    std::string method;
    std::string psi_name;
    std::string message;
    double wall_seconds = 0.0;  // diagnostic only, never serialized into hashed artifacts
};

/// sum_x m_x a_x Phi(|grad u|(x)) over all vertices + sum_{x interior} m_x f_x u_x.
/// Every |grad u|(x), boundary ones included, depends on interior unknowns, so all
/// of them are kept; this makes m r = -dE/du an exact identity.
double energy(const DirichletProblem& problem, const VertexFunction& u, bool waive_boundary_check = false);
double energy_with(const DirichletProblem& problem, const Conductivity& psi, const VertexFunction& u);

/// quasilinear_div(u) - f on interior vertices, 0 on the boundary.
VertexFunction el_residual(const DirichletProblem& problem, const VertexFunction& u);
VertexFunction el_residual_with(const DirichletProblem& problem, const Conductivity& psi, const VertexFunction& u);

/// sqrt(sum_x m_x v_x^2) over interior vertices.
double interior_l2(const GraphSpace& space, const VertexFunction& v);
/// Stopping metric: interior_l2(r) / (interior_l2(f) + 1).
double scaled_residual(const DirichletProblem& problem, const VertexFunction& r);

/// Energy Hessian with respect to interior unknowns (interior_count square),
/// using `psi` for both Psi and Psi'. Zero-gradient vertices are handled through
/// the floor sqrt(g^2 + floor_delta).
SparseMatrix energy_hessian(const DirichletProblem& problem, const Conductivity& psi, const VertexFunction& u,
                            double floor_delta);

/// sum_x [ c1_x S_x + c2_x (S_x u)(S_x u)^T ] restricted to interior unknowns, S_x
/// the star Laplacian at x. energy_hessian is the case c1 = a Psi/2, c2 = a Psi'/(4 m g).
SparseMatrix assemble_hessian(const GraphSpace& space, const VertexFunction& u, const VertexFunction& c1,
                              const VertexFunction& c2);

/// Interior stiffness matrix K_zz' of sum_edges w c (u_b - u_a)^2 / 2 with
/// c = (a_x + a_y)/2 (c = 1 without a).
SparseMatrix stiffness_matrix(const GraphSpace& space, const VertexFunction* a = nullptr);

/// Solves the linear Dirichlet problem div(c grad u) = f, u = g on the boundary,
/// with the averaged edge coefficient c = (a_x + a_y)/2.
VertexFunction linear_dirichlet_solve(const GraphSpace& space, const VertexFunction& f, const VertexFunction& g,
                                      const VertexFunction* a = nullptr);

struct DirectOptions {
    double tol = 1e-10;
    int max_iter = 200000;
    std::optional<VertexFunction> initial;
    bool record_history = true;
};

/// Accelerated (FISTA) descent on the interior unknowns in the metric of the
/// Dirichlet stiffness matrix, with a backtracked Lipschitz estimate and
/// gradient-based momentum restart. Deterministic.
SolveReport minimize_direct(const DirichletProblem& problem, const DirectOptions& options = {});

struct PoincareEstimate {
    double value = 0.0;
    bool exact = false;  // true for p = 2 (1 / lambda_1)
};
PoincareEstimate poincare_constant(const GraphSpace& space, double p);

// ---------------------------------------------------------------------------
// Discrete norms (m-weighted, all vertices)

double lq_norm(const GraphSpace& space, const VertexFunction& v, double q);
/// ||v||_q + || |grad v| ||_q.
double w1q_norm(const GraphSpace& space, const VertexFunction& v, double q);
/// sqrt(sum_edges w (v_b - v_a)^2) = sqrt(sum_x m_x |grad v|^2).
double energy_seminorm(const GraphSpace& space, const VertexFunction& v);

}  // namespace quasilin
