#pragma once

#include "quasilin/variational.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace quasilin {

/// First k Dirichlet eigenpairs of -Delta: Delta phi_i = -lambda_i phi_i on the
/// interior, phi_i = 0 on the boundary, sum_x m_x phi_i phi_j = delta_ij.
struct EigenBasis {
    Eigen::VectorXd eigenvalues;  // nondecreasing
    Eigen::MatrixXd vectors;      // vertex_count x k
    std::uint64_t space_hash = 0;

    Index size() const { return eigenvalues.size(); }
};

/// Dense symmetric solve of M^-1/2 K M^-1/2. Within a cluster of equal
/// eigenvalues the basis is rebuilt by projecting unit vectors in vertex order,
/// and every vector is signed so its first nonzero entry is positive.
EigenBasis dirichlet_eigenbasis(const GraphSpace& space, Index k);

void write_basis_csv(std::ostream& out, const EigenBasis& basis);
EigenBasis read_basis_csv(std::istream& in);
/// Loads `<dir>/basis_<hash>_<k>.csv` when present and matching, otherwise
/// computes and stores it.
EigenBasis cached_eigenbasis(const GraphSpace& space, Index k, const std::string& dir);

/// <v, phi_i>_{L2(m)} for every basis vector.
Eigen::VectorXd project(const GraphSpace& space, const EigenBasis& basis, const VertexFunction& v);

struct GalerkinOptions {
    double M = std::numeric_limits<double>::infinity();  // truncation level; inf = none
    std::optional<VertexFunction> eta;                    // cut-off in [0,1], default 1
    double tol = 1e-10;                                    // on ||P_k r||_m / (||f|| + 1)
    int max_iter = 200;
    double newton_floor = 1e-12;  // Hessian floor delta, multiplied by scale^2
    std::optional<VertexFunction> initial;
    bool nodal_when_full = true;  // k = interior dimension: Newton on vertex values
};

struct GalerkinSolution {
    Eigen::VectorXd coefficients;
    VertexFunction lift;
    VertexFunction u;
    int iterations = 0;
    bool converged = false;
    double projected_residual = 0.0;
    double energy = 0.0;  // truncated energy F_{Phi_M}
    int gradient_fallbacks = 0;
    std::vector<double> residual_history;
    std::string message;
};

/// Harmonic extension of the boundary data (interior values solve Delta u = 0).
VertexFunction harmonic_lift(const DirichletProblem& problem);

/// Damped Newton on the reduced energy c -> F_{Phi_M}(lift + sum c_i phi_i)
/// (Armijo backtracking), i.e. the Galerkin equations in V_k for the
/// conductivity Psi_{M,eta}(t) = Psi(min(t, M) eta^2).
GalerkinSolution solve_reduced(const DirichletProblem& problem, const EigenBasis& basis,
                               const GalerkinOptions& options = {});

/// Newton on all interior vertex values; equals solve_reduced with the full basis.
GalerkinSolution solve_full_dimension(const DirichletProblem& problem, const GalerkinOptions& options = {});

struct GalerkinStudyRow {
    Index k = 0;
    double l2_error = 0.0;      // ||u_k - u_*||_{L2(m)}
    double energy_error = 0.0;  // energy_seminorm(u_k - u_*)
    double w12_norm = 0.0;      // ||u_k||_{W^{1,2}}
    double fitted_C = 0.0;      // w12_norm / (||g||_{W^{1,2}} + ||f||_{L2})
    double energy = 0.0;
    double projected_residual = 0.0;
    int iterations = 0;
};

struct GalerkinStudy {
    std::vector<GalerkinStudyRow> rows;
    VertexFunction reference;
    double max_fitted_C = 0.0;
};

GalerkinStudy galerkin_convergence_study(const DirichletProblem& problem, const EigenBasis& basis,
                                         const std::vector<Index>& ks, double M = std::numeric_limits<double>::infinity());

}  // namespace quasilin
