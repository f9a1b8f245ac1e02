#pragma once

#include "quasilin/types.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace quasilin {

enum class PsiKind { p_power, p_delta, minimal_surface, truncated, regularized, min_composite, max_composite, custom };

std::string to_string(PsiKind kind);

/// Structural constants of a conductivity:
///   ellipticity   lambda <= t Psi'(t) / Psi(t) <= Lambda, lambda > -1
///   p-growth      t^(p-2) / nu <= Psi(t) <= nu t^(p-2) for t >= 1
///   non-degeneracy c <= Psi <= 1/c (only when Psi is bounded both ways)
struct PsiMeta {
    double lambda = 0.0;
    double Lambda = 0.0;
    double p = 2.0;
    double nu = 1.0;
    std::optional<double> c;
    bool lambda_sampled = false;  // lambda/Lambda obtained by sampling instead of analytically
};

/// The function Psi of div(Psi(|grad u|) grad u) = f together with its
/// potential Phi(t) = int_0^t s Psi(s) ds and structural metadata.
///
/// Cheap to copy (shared immutable state). Psi(0) is +inf for singular
/// conductivities such as t^(p-2) with p < 2.
class Conductivity {
public:
    struct Impl;

    double operator()(double t) const;
    double derivative(double t) const;
    /// Phi(t); closed form when available, otherwise adaptive Simpson with a
    /// per-conductivity cache.
    double phi(double t) const;
    bool phi_closed_form() const;

    const PsiMeta& meta() const;
    PsiKind kind() const;
    const std::string& name() const;
    /// Points where Psi' may jump; excluded from sampling-based checks.
    std::span<const double> kinks() const;
    std::uint64_t id() const;
    bool singular_at_zero() const;

    explicit Conductivity(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}

private:
    std::shared_ptr<const Impl> impl_;
};

Conductivity p_power(double p);
Conductivity p_delta(double p, double delta);
/// Psi(t) = (t^2 + 1)^(-1/2).
Conductivity minimal_surface();
Conductivity min_of(const Conductivity& a, const Conductivity& b);
Conductivity max_of(const Conductivity& a, const Conductivity& b);
/// Arbitrary positive Psi; the derivative is a centred difference. `p` is the
/// growth exponent (estimated from the tail when absent).
Conductivity custom(std::string name, std::function<double(double)> psi, std::vector<double> kinks = {},
                    std::optional<double> p = std::nullopt);
/// Monotone cubic (Fritsch-Carlson) interpolation through (t_i, Psi_i),
/// constant beyond the table.
Conductivity tabulated(std::vector<double> t, std::vector<double> psi, std::optional<double> p = std::nullopt);
Conductivity read_tabulated_csv(const std::string& path, std::optional<double> p = std::nullopt);

/// Psi_M(t) = Psi(min(t, M)).
Conductivity truncate_M(const Conductivity& psi, double M);
/// Psi^delta(t) = Psi(sqrt(t^2 + delta)).
Conductivity regularize_delta(const Conductivity& psi, double delta);

/// Phi as a standalone object: eval, derivative t Psi(t).
class PhiPotential {
public:
    explicit PhiPotential(Conductivity psi) : psi_(std::move(psi)) {}
    double operator()(double t) const { return psi_.phi(t); }
    double derivative(double t) const { return t > 0.0 ? t * psi_(t) : 0.0; }
    bool closed_form() const { return psi_.phi_closed_form(); }

private:
    Conductivity psi_;
};

PhiPotential phi_of(const Conductivity& psi);

/// Adaptive Simpson for int_a^b f, absolute tolerance `tol`. Throws
/// NumericalError when the recursion budget is exhausted.
double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol = 1e-12);

/// 200-point logarithmic grid on [1e-4, 1e4] (or the requested range).
std::vector<double> log_grid(double lo = 1e-4, double hi = 1e4, int points = 200);

// ---------------------------------------------------------------------------
// Property checkers. Violations are relative: (lhs - rhs) / max(|lhs|, |rhs|, tiny)
// for an inequality lhs <= rhs, and 0 when it holds.

struct InvariantReport {
    double positivity = 0.0;   // number of grid points with Psi <= 0
    double ellipticity = 0.0;  // max absolute excursion of t Psi'/Psi outside [lambda, Lambda]
    double growth = 0.0;       // max relative violation of the p-growth sandwich on t >= 1
    bool ok(double tol = 1e-8) const { return positivity == 0.0 && ellipticity <= tol && growth <= tol; }
};
InvariantReport check_invariants(const Conductivity& psi, std::span<const double> grid);

struct PsiBasicReport {
    double item_i = 0.0;    // Psi(1) min{t^Lambda,t^lambda} <= Psi(t) <= Psi(1) max{...}
    double item_ii = 0.0;   // Psi(t) <= (t/s)^Lambda Psi(s), t >= s
    double item_iii = 0.0;  // sqrt(t^2+1) Psi(sqrt(t^2+1)) <= 2^(Lambda+1) (t Psi(t) + Psi(1))
    double max_violation() const;
};
PsiBasicReport check_psi_basic(const Conductivity& psi, std::span<const double> grid);

struct PhiMReport {
    double M = 1.0;
    double convexity = 0.0;       // i)   monotone + convex Phi_M, convex phi_M
    double admissible_C = 0.0;    // ii)  fitted C_M with Phi_M <= C_M (t^2 + 1)
    double coercive = 0.0;        // iii) violation of Phi_M >= (t^min(2,p) - 1) / (2 nu)
    double coercive_c = 0.0;      //      fitted c in c (t^min(2,p) - 1) <= Phi_M
    double upper = 0.0;           // iv)  violation of Phi_M <= Phi(1) + nu t^max(2,p)
    double upper_C = 0.0;         //      fitted C in Phi_M <= C (t^p + t^2 + 1)
    double ordering = 0.0;        // v)   phi_m <= phi_M <= Phi_M for 1 <= m <= M
    double super_coercive = 0.0;  // vi)  2^-max(Lambda,0) t^2/4 Psi(min(t,M)) <= Phi_M
    double limit = 0.0;           // vii) phi_M increasing in M, = Phi once M >= t
    bool passed(double tol = 1e-9) const;
};
/// Phi_M(t) = int_0^t s Psi(min(s,M)) ds.
double phi_M(const Conductivity& psi, double M, double t);
/// phi_M(t) = int_0^t min(s,M) Psi(min(s,M)) ds.
double small_phi_M(const Conductivity& psi, double M, double t);
PhiMReport check_phiM_properties(const Conductivity& psi, double M, std::span<const double> grid);

/// (t Psi(t) - s Psi(s))(t - s) - (1+lambda)/4 |t-s|^2 Psi(max(s,t)/2).
double convexity_gap(const Conductivity& psi, double s, double t);
/// Phi(T) - Phi(S) - Phi'(S)(T-S) - (1+lambda)/9 |S-T|^2 inf_[max/3, max] Psi.
double bregman_gap(const Conductivity& psi, double S, double T);
/// <Psi(|v|)v - Psi(|w|)w, v-w> - (1+lambda)/4 |v-w|^2 Psi(max(|v|,|w|)/2).
double monotonicity_gap(const Conductivity& psi, const Eigen::VectorXd& v, const Eigen::VectorXd& w);
/// Phi(|v|) - Phi(|w|) - Psi(|w|)<w, v-w> - (1+lambda)/36 |v-w|^2 inf_[max/3, max] Psi.
double vector_bregman_gap(const Conductivity& psi, const Eigen::VectorXd& v, const Eigen::VectorXd& w);

/// Worst relative value of each gap over random samples (0 when every sample
/// holds). s, t and |v|, |w| are log-uniform in [lo, hi]; v, w live in the plane.
/// Each gap is divided by the sum of the magnitudes of its terms.
struct GapSuiteReport {
    std::size_t samples = 0;
    double convexity = 0.0;
    double bregman = 0.0;
    double monotonicity = 0.0;
    double vector_bregman = 0.0;
    double worst() const;
};
GapSuiteReport gap_suite(const Conductivity& psi, std::size_t samples = 10000, std::uint64_t seed = 0,
                         double lo = 1e-3, double hi = 1e3);

struct PsiMEtaResult {
    VertexFunction values;
    std::vector<Index> substituted;  // vertices where Psi(0) diverged and the regularised value was used
};
/// Pointwise Psi(min(g, M) eta^2). M may be +inf.
PsiMEtaResult psi_M_eta(const Conductivity& psi, double M, const VertexFunction& eta, const VertexFunction& gradmod,
                        double substitute_delta = 1e-12);

}  // namespace quasilin
