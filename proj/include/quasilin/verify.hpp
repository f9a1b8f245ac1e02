#pragma once

#include "quasilin/variational.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace quasilin {

/// One measured constant: ratio = lhs / rhs.
struct EstimateReport {
    std::string estimate;  // laplacian_l2 | second_order_ball | gradient_linf | cheng_yau
    double h = 0.0;
    double R = 0.0;
    double p = 0.0;
    double lhs = 0.0;
    double rhs = 0.0;
    double ratio = 0.0;
    bool defined = true;     // false when rhs == 0 (ratio reported as 0)
    bool applicable = true;  // false when a hypothesis of the estimate fails; the ratio is still computed
    Index center = -1;
    std::size_t window_size = 0;
    double window_margin = 0.0;  // distance from the window to the Dirichlet set
    std::string verdict;         // set by refinement studies
    std::string note;
};

/// Shortest-path distance from every vertex to the Dirichlet set.
VertexFunction boundary_distance(const GraphSpace& space);

/// sum_{window} m (Lap u)^2 / sum m (f^2 + G^2 + |grad G|^2), G the harmonic
/// extension of the boundary data. The window must stay two edge lengths away
/// from the boundary.
EstimateReport laplacian_l2_ratio(const DirichletProblem& problem, const VertexFunction& u,
                                  const std::vector<Index>& window);

/// With h = Psi(|grad u|) |grad u|:
/// avg_{B_{R/4}} |grad h|^2 / (avg_{B_R} f^2 + (avg_{B_R} h)^2). B_R must avoid the boundary.
EstimateReport second_order_ball_ratio(const DirichletProblem& problem, const VertexFunction& u, Index center,
                                       double R);

/// max_{B_{R/4}} |grad u| / (1 + avg_{B_R} Psi(|grad u|) |grad u|)^(1/(p-1)). Flagged
/// inapplicable unless avg_{B_R} |f|^q <= C0 with q > max(N, 2).
EstimateReport gradient_linf_ratio(const DirichletProblem& problem, const VertexFunction& u, Index center, double R,
                                   double q_exponent, double C0);

/// max_{B_{R/2}} |grad log u| R / (1 + R sqrt(K-)), for u > 0 with
/// Delta_p u = 0 on the interior of B_R (scaled residual <= residual_tol).
EstimateReport cheng_yau_ratio(const GraphSpace& space, double p, const VertexFunction& u, Index center, double R,
                               double residual_tol = 1e-8);

/// Pointwise Gamma_2(u) = Lap Gamma(u) / 2 - Gamma(u, Lap u).
VertexFunction gamma2_pointwise(const GraphSpace& space, const VertexFunction& u);

struct CdCertificate {
    double K = 0.0;
    bool certified = false;
    double worst_margin = 0.0;    // min over battery and non-boundary vertices of Gamma_2 - K Gamma - (Lap u)^2 / N
    double worst_relative = 0.0;  // the same, each function divided by its own term scale
    std::size_t worst_function = 0;
    std::size_t functions_tested = 0;
    std::uint64_t space_hash = 0;
    std::uint64_t seed = 0;
};

/// The battery: coordinate monomials (when coordinates exist), the first few
/// Dirichlet eigenfunctions, and `random_count` seeded random functions, each
/// scaled to max |u| = 1. Deterministic for a given seed.
std::vector<VertexFunction> cd_battery(const GraphSpace& space, std::uint64_t seed, std::size_t random_count = 200);

/// Sampling check of Gamma_2 >= K Gamma (+ (Lap u)^2 / N for finite declared N)
/// at non-boundary vertices over the battery. Necessary-condition style: a pass
/// is evidence, never a proof.
CdCertificate cd_certify(const GraphSpace& space, double K_candidate, std::uint64_t seed = 0,
                         std::size_t random_count = 200);

struct BochnerReport {
    double min_value = 0.0;  // min over pairs of gamma2_form
    double min_scaled = 0.0;  // min over pairs of gamma2_form / term scale
    std::size_t pairs = 0;
    bool passed = false;  // every pair >= -1e-10 * scale
};

/// gamma2_form over all (u, phi) pairs. The certificate must be a passing
/// cd_certify result for this space at the declared K.
BochnerReport bochner_check(const GraphSpace& space, const std::vector<VertexFunction>& us,
                            const std::vector<VertexFunction>& phis, const CdCertificate& certificate);

struct RefinementTable {
    std::vector<EstimateReport> rows;
    double min_ratio = 0.0;
    double max_ratio = 0.0;
    double spread = 0.0;           // max / min over defined, nonzero rows
    double finest_change = 0.0;    // relative change between the two finest levels
    double factor = 4.0;
    std::string verdict;  // bounded | unbounded | excluded
};

/// Rows must be ordered coarse to fine (at least 3). Trivially zero rows are
/// excluded from the verdict.
RefinementTable refinement_study(std::vector<EstimateReport> rows, double factor = 4.0);

/// u = r^((p-2)/(p-1)) (log r for p = 2) evaluated at the vertex coordinates.
VertexFunction radial_p_harmonic(const GraphSpace& space, double p);

}  // namespace quasilin
