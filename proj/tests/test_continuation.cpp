#include "oracles.hpp"

#include "quasilin/continuation.hpp"

#include <doctest.h>

#include <cmath>

using namespace quasilin;

namespace {

DirichletProblem make_problem(const GraphSpace& s, Conductivity psi, VertexFunction f) {
    const Index n = s.vertex_count();
    return DirichletProblem{s, std::move(psi), std::move(f), VertexFunction::Zero(n), std::nullopt, 1.0};
}

DirichletProblem constant_f(const GraphSpace& s, Conductivity psi, double f) {
    return make_problem(s, std::move(psi), VertexFunction::Constant(s.vertex_count(), f));
}

std::vector<double> powers_of_two(int lo, int hi) {
    std::vector<double> out;
    for (int j = lo; j <= hi; ++j) out.push_back(std::ldexp(1.0, j));
    return out;
}

double l2(const GraphSpace& s, const VertexFunction& v) {
    return std::sqrt((s.mass().array() * v.array().square()).sum());
}

}  // namespace

TEST_SUITE("continuation") {

TEST_CASE("M ladder is stationary once the truncation is inactive") {
    const GraphSpace s = make_grid2d(9, 9, 0.125);
    const DirichletProblem pr = constant_f(s, p_power(1.5), 6.0);
    const ContinuationReport r = m_truncation_path(pr, powers_of_two(-4, 5));
    REQUIRE_FALSE(r.aborted);
    CHECK(r.kind == "M");
    CHECK(r.q == 1.5);
    CHECK(r.converged);
    CHECK(r.distances_decreasing);
    const double gmax = r.rungs.back().max_gradient_all;
    bool saw_inactive = false;
    for (std::size_t i = 1; i < r.rungs.size(); ++i) {
        CHECK(r.rungs[i].max_gradient_all >= r.rungs[i].max_gradient);
        if (r.rungs[i - 1].parameter > r.rungs[i - 1].max_gradient_all) {
            saw_inactive = true;
            CHECK(r.rungs[i].distance_prev <= 1e-12);
        }
    }
    CHECK(saw_inactive);
    CHECK(r.rungs.back().parameter > gmax);
    CHECK(r.rungs.back().distance_oracle <= 1e-6 * std::max(1.0, r.solution_scale));
    for (const auto& rung : r.rungs) {
        CHECK(rung.uniform_ratio > 0.0);
        CHECK(rung.flux_l1 > 0.0);
    }
}

TEST_CASE("M ladder for constant conductivity does not move") {
    const GraphSpace s = make_grid2d(9, 9, 0.125);
    const DirichletProblem pr = constant_f(s, p_power(2.0), 1.0);
    const ContinuationReport r = m_truncation_path(pr, powers_of_two(0, 3));
    REQUIRE_FALSE(r.aborted);
    for (std::size_t i = 1; i < r.rungs.size(); ++i) CHECK(r.rungs[i].distance_prev <= 1e-12);
    for (const auto& rung : r.rungs) CHECK(rung.distance_oracle <= 1e-9);
}

TEST_CASE("M ladder distances to the oracle decrease for p = 1.5") {
    const GraphSpace s = make_grid2d(9, 9, 0.125);
    const DirichletProblem pr = constant_f(s, p_power(1.5), 20.0);
    const ContinuationReport r = m_truncation_path(pr, powers_of_two(-4, 6));
    REQUIRE_FALSE(r.aborted);
    CHECK(r.distances_decreasing);
    CHECK(r.rungs.front().distance_oracle > r.rungs.back().distance_oracle);
    const double floor = 1e-10 * std::max(1.0, r.solution_scale);
    for (std::size_t i = 1; i < r.rungs.size(); ++i) {
        const double prev = r.rungs[i - 1].distance_oracle, cur = r.rungs[i].distance_oracle;
        CHECK((cur < prev || (prev <= floor && cur <= floor)));
    }
}

TEST_CASE("M ladder validation") {
    const GraphSpace s = make_grid2d(5, 5, 0.25);
    const DirichletProblem pr = constant_f(s, p_power(1.5), 1.0);
    CHECK_THROWS_AS(m_truncation_path(pr, {}), InvalidArgument);
    CHECK_THROWS_AS(m_truncation_path(pr, {2.0, 1.0}), InvalidArgument);
    CHECK_THROWS_AS(m_truncation_path(pr, {0.0, 1.0}), InvalidArgument);
    CHECK_THROWS_AS(m_truncation_path(constant_f(s, p_power(3.0), 1.0), {1.0, 2.0}), InvalidArgument);
    CHECK_NOTHROW(m_truncation_path(constant_f(s, regularize_delta(p_power(3.0), 0.1), 1.0), {1.0, 2.0}));
}

TEST_CASE("delta ladder for p = 3 approaches the true minimizer") {
    const GraphSpace s = make_grid2d(9, 9, 0.125);
    const DirichletProblem pr = constant_f(s, p_power(3.0), 1.0);
    const std::vector<double> ds{1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6};
    const ContinuationReport r = delta_regularization_path(pr, ds);
    REQUIRE_FALSE(r.aborted);
    REQUIRE(r.oracle);
    CHECK(r.kind == "delta");
    CHECK(r.q == 3.0);
    CHECK(r.distances_decreasing);
    CHECK(r.rungs.back().distance_oracle < 1e-4 * std::max(1.0, r.solution_scale));
    const double e_true = energy(pr, r.oracle->u);
    for (std::size_t i = 0; i < r.rungs.size(); ++i) {
        const ContinuationRung& rung = r.rungs[i];
        CHECK(rung.energy_gap >= -1e-12);
        CHECK(rung.energy_true >= e_true - 1e-12);
        if (i > 0) {
            CHECK(rung.energy_regularized <= r.rungs[i - 1].energy_regularized + 1e-14);
            CHECK(rung.energy_gap <= r.rungs[i - 1].energy_gap + 1e-14);
        }
    }
}

TEST_CASE("delta ladder on a 1D path tends to the affine profile") {
    const Index n = 33;
    const double h = 1.0 / (n - 1);
    const GraphSpace s = make_path(n, h);
    VertexFunction g = VertexFunction::Zero(n);
    g[n - 1] = 1.0;
    DirichletProblem pr{s, p_power(3.0), VertexFunction::Zero(n), g, std::nullopt, 1.0};
    const ContinuationReport r = delta_regularization_path(pr, {1e-2, 1e-4, 1e-6});
    REQUIRE_FALSE(r.aborted);
    VertexFunction affine(n);
    for (Index x = 0; x < n; ++x) affine[x] = x * h;
    CHECK(w1q_norm(s, r.rungs.back().solve.u - affine, 3.0) < 1e-4);
    CHECK(w1q_norm(s, r.oracle->u - affine, 3.0) < 1e-8);
}

TEST_CASE("delta ladder for p = 2 does not depend on delta") {
    const GraphSpace s = make_grid2d(9, 9, 0.125);
    const DirichletProblem pr = constant_f(s, p_power(2.0), 1.0);
    const ContinuationReport r = delta_regularization_path(pr, {1e-1, 1e-3, 1e-6});
    REQUIRE_FALSE(r.aborted);
    for (const auto& rung : r.rungs) CHECK(rung.distance_oracle <= 1e-9);
}

TEST_CASE("delta ladder result is insensitive to the ladder") {
    const GraphSpace s = make_grid2d(9, 9, 0.125);
    const DirichletProblem pr = constant_f(s, p_power(3.0), 1.0);
    ContinuationOptions opt;
    opt.run_oracle = false;
    const ContinuationReport coarse = delta_regularization_path(pr, {1e-2, 1e-6}, opt);
    const ContinuationReport fine = delta_regularization_path(pr, {1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6}, opt);
    REQUIRE_FALSE(coarse.aborted);
    REQUIRE_FALSE(fine.aborted);
    CHECK(coarse.rungs.front().distance_oracle == -1.0);
    CHECK(w1q_norm(s, coarse.rungs.back().solve.u - fine.rungs.back().solve.u, 3.0) <= 1e-8);
}

TEST_CASE("delta ladder validation") {
    const GraphSpace s = make_grid2d(5, 5, 0.25);
    const DirichletProblem pr = constant_f(s, p_power(3.0), 1.0);
    CHECK_THROWS_AS(delta_regularization_path(pr, {}), InvalidArgument);
    CHECK_THROWS_AS(delta_regularization_path(pr, {1e-3, 1e-2}), InvalidArgument);
    CHECK_THROWS_AS(delta_regularization_path(pr, {1e-2, -1e-3}), InvalidArgument);
}

TEST_CASE("clamped data at or above sup f reproduces the solution") {
    const GraphSpace s = make_grid2d(9, 9, 0.125);
    const DirichletProblem pr = constant_f(s, p_power(3.0), 2.0);
    const ContinuationReport r = f_continuity_study(pr, {0.5, 2.0, 5.0});
    REQUIRE_FALSE(r.aborted);
    CHECK(r.kind == "f");
    CHECK(r.q == doctest::Approx(2.0));
    CHECK(r.rungs[0].distance_oracle > 0.0);
    CHECK(r.rungs[1].distance_oracle <= 1e-12);
    CHECK(r.rungs[2].distance_oracle <= 1e-12);
    CHECK(r.converged);
}

TEST_CASE("clamped spike data converges") {
    const GraphSpace s = make_grid2d(9, 9, 0.125);
    VertexFunction f = VertexFunction::Ones(s.vertex_count());
    f[4 * 9 + 4] = 100.0;
    for (double p : {1.5, 3.0}) {
        CAPTURE(p);
        const ContinuationReport r = f_continuity_study(make_problem(s, p_power(p), f), {1.0, 10.0, 100.0});
        REQUIRE_FALSE(r.aborted);
        CHECK(r.distances_decreasing);
        CHECK(r.rungs[0].distance_oracle > r.rungs[1].distance_oracle);
        CHECK(r.rungs[1].distance_oracle > r.rungs[2].distance_oracle);
        CHECK(r.rungs[2].distance_oracle <= 1e-12);
        for (const auto& rung : r.rungs) CHECK(rung.gradient_norm > 0.0);
    }
}

TEST_CASE("clamped data for p = 2 is Lipschitz with the first eigenvalue") {
    const GraphSpace s = make_grid2d(9, 9, 0.125);
    VertexFunction f = VertexFunction::Ones(s.vertex_count());
    f[4 * 9 + 4] = 100.0;
    f[2 * 9 + 6] = -40.0;
    const DirichletProblem pr = make_problem(s, p_power(2.0), f);
    const std::vector<double> ns{1.0, 5.0, 20.0, 60.0};
    const ContinuationReport r = f_continuity_study(pr, ns);
    REQUIRE_FALSE(r.aborted);
    REQUIRE(r.oracle);
    const double lambda1 = oracle::dirichlet_eigenvalues(s)[0];
    const double volume = s.mass().sum();
    for (std::size_t i = 0; i < ns.size(); ++i) {
        VertexFunction df = f.cwiseMax(-ns[i]).cwiseMin(ns[i]) - f;
        for (Index x = 0; x < df.size(); ++x)
            if (s.is_boundary(x)) df[x] = 0.0;
        const VertexFunction w = r.rungs[i].solve.u - r.oracle->u;
        const double data = l2(s, df);
        CHECK(l2(s, w) <= data / lambda1 * (1 + 1e-9));
        CHECK(l2(s, gradient_modulus(s, w)) <= data / std::sqrt(lambda1) * (1 + 1e-9));
        CHECK(r.rungs[i].distance_oracle <= std::sqrt(volume) * data / std::sqrt(lambda1) * (1 + 1e-9));
    }
}

TEST_CASE("clamp ladder validation") {
    const GraphSpace s = make_grid2d(5, 5, 0.25);
    const DirichletProblem pr = constant_f(s, p_power(3.0), 1.0);
    CHECK_THROWS_AS(f_continuity_study(pr, {}), InvalidArgument);
    CHECK_THROWS_AS(f_continuity_study(pr, {2.0, 1.0}), InvalidArgument);
    CHECK_THROWS_AS(f_continuity_study(pr, {0.0}), InvalidArgument);
}

TEST_CASE("solve_full on the linear path") {
    const GraphSpace s = make_grid2d(9, 9, 0.125);
    const DirichletProblem pr = constant_f(s, p_power(2.0), 1.0);
    const FullSolveReport r = solve_full(pr);
    CHECK(r.linear_path);
    CHECK(r.certified);
    CHECK(r.true_residual <= 1e-10);
    CHECK(r.m_ladder.rungs.empty());
    const Eigen::VectorXd ref = oracle::grid_poisson(9, 0.125, pr.f, pr.g);
    CHECK((r.solve.u - ref).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("solve_full certifies and matches direct minimization") {
    const GraphSpace s = make_grid2d(9, 9, 0.125);
    for (double p : {1.5, 3.0}) {
        CAPTURE(p);
        const DirichletProblem pr = constant_f(s, p_power(p), 1.0);
        const FullSolveReport r = solve_full(pr);
        CHECK(r.certified);
        CHECK(r.true_residual <= 1e-8);
        CHECK_FALSE(r.linear_path);
        CHECK_FALSE(r.m_ladder.rungs.empty());
        CHECK_FALSE(r.delta_ladder.rungs.empty());
        DirectOptions d;
        d.record_history = false;
        const SolveReport direct = minimize_direct(pr, d);
        REQUIRE(direct.converged);
        const double scale = std::max(1.0, energy_seminorm(s, direct.u));
        CHECK(energy_seminorm(s, r.solve.u - direct.u) <= 1e-6 * scale);
        CHECK(std::abs(energy(pr, r.solve.u) - energy(pr, direct.u)) <= 1e-10 * std::max(1.0, std::abs(energy(pr, direct.u))));
    }
}

TEST_CASE("solve_full with the delta ladder first") {
    const GraphSpace s = make_grid2d(9, 9, 0.125);
    const DirichletProblem pr = constant_f(s, p_power(3.0), 1.0);
    SolveStrategy st = SolveStrategy::defaults();
    st.experimental_delta_first = true;
    const FullSolveReport a = solve_full(pr, st);
    const FullSolveReport b = solve_full(pr);
    CHECK(a.certified);
    CHECK(energy_seminorm(s, a.solve.u - b.solve.u) <= 1e-8);
}

TEST_CASE("solve_full validation") {
    const GraphSpace s = make_grid2d(5, 5, 0.25);
    const DirichletProblem pr = constant_f(s, p_power(3.0), 1.0);
    SolveStrategy st = SolveStrategy::defaults();
    st.deltas.clear();
    CHECK_THROWS_AS(solve_full(pr, st), InvalidArgument);
    st = SolveStrategy::defaults();
    st.certify_tol = 0.0;
    CHECK_THROWS_AS(solve_full(pr, st), InvalidArgument);
    const SolveStrategy d = SolveStrategy::defaults();
    CHECK(d.Ms.size() == 11);
    CHECK(d.Ms.front() == 1.0);
    CHECK(d.Ms.back() == 1024.0);
    CHECK(d.deltas.size() == 8);
    CHECK(d.deltas.back() == doctest::Approx(1e-8));
}

}
