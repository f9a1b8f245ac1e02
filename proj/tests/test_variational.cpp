#include "oracles.hpp"

#include "quasilin/variational.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace quasilin;

namespace {

DirichletProblem make_problem(GraphSpace s, Conductivity psi, double f, const VertexFunction& g) {
    const Index n = s.vertex_count();
    return DirichletProblem{std::move(s), std::move(psi), VertexFunction::Constant(n, f), g, std::nullopt, 1.0};
}

VertexFunction zeros(const GraphSpace& s) { return VertexFunction::Zero(s.vertex_count()); }

VertexFunction x_coord(const GraphSpace& s) {
    VertexFunction v(s.vertex_count());
    for (Index x = 0; x < v.size(); ++x) v[x] = s.coordinates()[static_cast<std::size_t>(x)][0];
    return v;
}

}  // namespace

TEST_SUITE("variational") {

TEST_CASE("energy") {
    const GraphSpace g5 = make_grid2d(5, 5, 0.25);
    const auto p0 = make_problem(g5, p_power(3), 0.0, zeros(g5));
    CHECK(energy(p0, zeros(g5)) == 0.0);

    GraphSpace p3 = make_path(3, 1.0);
    VertexFunction g(3);
    g << 0, 0, 2;
    const auto lin = make_problem(p3, p_power(2), 0.0, g);
    VertexFunction u(3);
    u << 0, 1, 2;
    // middle vertex 1 * 1/2 plus two half-cells at slope 1: 2 * (1/2) * (1/2)
    CHECK(energy(lin, u) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(energy(lin, u) == doctest::Approx(oracle::energy(p3, [](double t) { return t * t / 2; }, lin.f, u)));

    // shifting f by beta adds beta sum_interior m u
    std::mt19937_64 rng(1);
    const auto base = make_problem(g5, p_power(3), 0.7, zeros(g5));
    const VertexFunction w = oracle::random_interior(g5, rng);
    DirichletProblem shifted = base;
    shifted.f.array() += 2.5;
    double mu = 0.0;
    for (Index x : g5.interior()) mu += g5.mass()[x] * w[x];
    CHECK(energy(shifted, w) - energy(base, w) == doctest::Approx(2.5 * mu).epsilon(1e-12));

    VertexFunction off = w;
    off[0] = 1.0;
    CHECK_THROWS_AS(energy(base, off), InvalidArgument);
    CHECK_NOTHROW(energy(base, off, true));

    for (double p : {1.5, 3.0}) {
        const auto prob = make_problem(g5, p_power(p), 0.4, zeros(g5));
        for (int i = 0; i < 5; ++i) {
            const VertexFunction v = oracle::random_interior(g5, rng);
            CHECK(energy(prob, v) ==
                  doctest::Approx(oracle::energy(g5, [p](double t) { return std::pow(t, p) / p; }, prob.f, v)).epsilon(1e-13));
        }
    }
}

TEST_CASE("energy is convex along segments") {
    const GraphSpace s = make_grid2d(6, 6, 0.2);
    std::mt19937_64 rng(2);
    for (const auto& psi : {p_power(1.5), p_power(3), minimal_surface()}) {
        const auto prob = make_problem(s, psi, 1.0, zeros(s));
        for (int i = 0; i < 10; ++i) {
            const VertexFunction a = oracle::random_interior(s, rng), b = oracle::random_interior(s, rng);
            for (double th : {0.25, 0.5, 0.75})
                CHECK(energy(prob, th * a + (1 - th) * b) <= th * energy(prob, a) + (1 - th) * energy(prob, b) + 1e-12);
        }
    }
}

TEST_CASE("E-L residual") {
    GraphSpace p3 = make_path(3, 1.0);
    VertexFunction g(3), u(3);
    g << 0, 0, 2;
    u << 0, 1, 2;
    const auto lin = make_problem(p3, p_power(2), 0.0, g);
    CHECK(el_residual(lin, u)[1] == doctest::Approx(0.0));

    const GraphSpace s = make_grid2d(5, 5, 0.25);
    std::mt19937_64 rng(3);
    const auto prob = make_problem(s, p_power(3), 0.3, zeros(s));
    const VertexFunction v = oracle::random_interior(s, rng);
    const VertexFunction r = el_residual(prob, v);
    for (Index x = 0; x < s.vertex_count(); ++x)
        if (s.is_boundary(x)) CHECK(r[x] == 0.0);
    for (Index z : s.interior()) {
        VertexFunction a = v, b = v;
        a[z] += 1e-6;
        b[z] -= 1e-6;
        const double dE = (energy(prob, a) - energy(prob, b)) / 2e-6;
        CHECK(r[z] == doctest::Approx(-dE / s.mass()[z]).epsilon(1e-5));
    }
}

TEST_CASE("energy Hessian matches differences of the gradient") {
    const GraphSpace s = make_grid2d(5, 5, 0.25);
    std::mt19937_64 rng(4);
    for (double p : {1.5, 3.0}) {
        const auto prob = make_problem(s, p_power(p), 0.3, zeros(s));
        const VertexFunction v = oracle::random_interior(s, rng);
        const SparseMatrix H = energy_hessian(prob, prob.psi, v, 0.0);
        const auto& in = s.interior();
        for (std::size_t j = 0; j < in.size(); j += 3) {
            VertexFunction a = v, b = v;
            a[in[j]] += 1e-6;
            b[in[j]] -= 1e-6;
            const VertexFunction ra = el_residual(prob, a), rb = el_residual(prob, b);
            for (std::size_t i = 0; i < in.size(); ++i) {
                // dE/du_i = -m_i r_i
                const double fd = -s.mass()[in[i]] * (ra[in[i]] - rb[in[i]]) / 2e-6;
                const double h = H.coeff(static_cast<Index>(i), static_cast<Index>(j));
                CHECK(std::abs(h - fd) <= 1e-5 * (1.0 + std::abs(h)));
            }
        }
    }
}

TEST_CASE("linear Dirichlet solve against the five-point oracle") {
    const Index n = 17;
    const double h = 1.0 / (n - 1);
    const GraphSpace s = make_grid2d(n, n, h);
    VertexFunction f(s.vertex_count()), g(s.vertex_count());
    for (Index x = 0; x < f.size(); ++x) {
        const auto c = s.coordinates()[static_cast<std::size_t>(x)];
        f[x] = std::sin(3 * c[0]) + c[1];
        g[x] = c[0] * c[0] - c[1];
    }
    const VertexFunction ref = oracle::grid_poisson(n, h, f, g);
    const VertexFunction u = linear_dirichlet_solve(s, f, g);
    CHECK((u - ref).norm() <= 1e-11 * ref.norm());
}

TEST_CASE("direct minimization") {
    SUBCASE("p = 2 agrees with the linear oracle") {
        const Index n = 9;
        const GraphSpace s = make_grid2d(n, n, 1.0 / (n - 1));
        auto prob = make_problem(s, p_power(2), 1.0, zeros(s));
        for (Index x = 0; x < s.vertex_count(); ++x) prob.g[x] = 0.3 * s.coordinates()[static_cast<std::size_t>(x)][1];
        const SolveReport r = minimize_direct(prob);
        CHECK(r.converged);
        const VertexFunction ref = oracle::grid_poisson(n, 1.0 / (n - 1), prob.f, prob.g);
        CHECK((r.u - ref).norm() <= 1e-10 * ref.norm());

        // doubling f doubles u - harmonic extension
        DirichletProblem twice = prob;
        twice.f *= 2.0;
        const SolveReport r2 = minimize_direct(twice);
        const VertexFunction harm = linear_dirichlet_solve(s, zeros(s), prob.g);
        CHECK(((r2.u - harm) - 2.0 * (r.u - harm)).norm() <= 1e-9 * (r.u - harm).norm());
    }
    SUBCASE("1D p-harmonic functions are affine") {
        const GraphSpace s = make_path(9, 1.0 / 8);
        VertexFunction g = zeros(s);
        g[8] = 1.0;
        for (double p : {1.5, 3.0}) {
            const auto prob = make_problem(s, p_power(p), 0.0, g);
            const SolveReport r = minimize_direct(prob);
            CHECK(r.converged);
            CHECK((r.u - x_coord(s)).cwiseAbs().maxCoeff() <= 1e-8);
        }
    }
    SUBCASE("minimality, residual and the weak form") {
        const GraphSpace s = make_grid2d(9, 9, 0.125);
        std::mt19937_64 rng(5);
        for (double p : {1.5, 3.0}) {
            auto prob = make_problem(s, p_power(p), 1.0, zeros(s));
            VertexFunction a = VertexFunction::Ones(s.vertex_count());
            for (Index x = 0; x < a.size(); ++x) a[x] = 1.0 + 0.5 * s.coordinates()[static_cast<std::size_t>(x)][0];
            prob.a = a;
            prob.A = 2.0;
            const SolveReport r = minimize_direct(prob);
            REQUIRE(r.converged);
            CHECK(r.residual <= 1e-10);
            CHECK(scaled_residual(prob, el_residual(prob, r.u)) <= 1e-10);
            CHECK(r.energy == doctest::Approx(energy(prob, r.u)));
            for (int i = 0; i < 100; ++i) {
                const VertexFunction c = r.u + oracle::random_interior(s, rng, 0.05);
                CHECK(energy(prob, r.u) <= energy(prob, c));
            }
            // weak form with the averaged edge coefficient
            const VertexFunction gm = gradient_modulus(s, r.u);
            const VertexFunction q = quasilinear_div(s, prob.psi, r.u, &a);
            for (int i = 0; i < 20; ++i) {
                const VertexFunction phi = oracle::random_interior(s, rng);
                double lhs = 0.0, flux = 0.0, src = 0.0, scale = 0.0;
                for (Index x : s.interior()) {
                    lhs += s.mass()[x] * q[x] * phi[x];
                    src += s.mass()[x] * prob.f[x] * phi[x];
                    scale += std::abs(s.mass()[x] * prob.f[x] * phi[x]);
                }
                for (const auto& e : s.edges()) {
                    const double du = r.u[e.b] - r.u[e.a];
                    if (du == 0.0) continue;
                    const double psibar = 0.5 * (a[e.a] * prob.psi(gm[e.a]) + a[e.b] * prob.psi(gm[e.b]));
                    flux += e.conductance * psibar * du * (phi[e.b] - phi[e.a]);
                }
                CHECK(std::abs(lhs + flux) <= 1e-12 * (std::abs(flux) + scale));
                CHECK(std::abs(-flux - src) <= 1e-9 * (scale + 1.0));
            }
            // damped oscillations converge to u from above in energy
            double best = std::numeric_limits<double>::infinity();
            const VertexFunction osc = oracle::random_interior(s, rng);
            for (int k = 1; k <= 8; ++k) best = std::min(best, energy(prob, r.u + osc / (k * k)));
            CHECK(energy(prob, r.u) <= best + 1e-10);
        }
    }
    SUBCASE("iteration cap reports non-convergence") {
        const GraphSpace s = make_grid2d(9, 9, 0.125);
        const auto prob = make_problem(s, p_power(3), 1.0, zeros(s));
        DirectOptions o;
        o.max_iter = 3;
        const SolveReport r = minimize_direct(prob, o);
        CHECK_FALSE(r.converged);
        CHECK(r.u.allFinite());
        CHECK_FALSE(r.message.empty());
    }
}

TEST_CASE("problem validation") {
    const GraphSpace s = make_grid2d(5, 5, 0.25);
    auto prob = make_problem(s, p_power(3), 1.0, zeros(s));
    CHECK_NOTHROW(validate(prob));
    auto bad = prob;
    bad.f[6] = std::nan("");
    CHECK_THROWS_AS(validate(bad), InvalidArgument);
    bad = prob;
    bad.a = VertexFunction::Constant(s.vertex_count(), 3.0);
    bad.A = 2.0;
    CHECK_THROWS_AS(validate(bad), InvalidArgument);
    bad = prob;
    bad.g.resize(3);
    CHECK_THROWS_AS(validate(bad), InvalidArgument);
    const GraphSpace c = make_cycle(6, 1.0);
    CHECK_THROWS_AS(validate(make_problem(c, p_power(2), 1.0, zeros(c))), InvalidArgument);
}

TEST_CASE("Poincare constant") {
    const PoincareEstimate one = poincare_constant(make_path(3, 1.0), 2.0);
    CHECK(one.exact);
    CHECK(one.value == doctest::Approx(0.5).epsilon(1e-14));
    std::vector<double> cs;
    for (Index n : {5, 9, 17}) cs.push_back(poincare_constant(make_grid2d(n, n, 1.0 / (n - 1)), 2.0).value);
    CHECK(*std::max_element(cs.begin(), cs.end()) / *std::min_element(cs.begin(), cs.end()) <= 1.5);
    CHECK(cs.back() == doctest::Approx(1.0 / (2 * oracle::kPi * oracle::kPi)).epsilon(0.02));
    const PoincareEstimate est = poincare_constant(make_grid2d(9, 9, 0.125), 3.0);
    CHECK_FALSE(est.exact);
    CHECK(est.value > 0.0);
    CHECK_THROWS_AS(poincare_constant(make_cycle(5, 1.0), 2.0), InvalidArgument);
}

TEST_CASE("discrete norms") {
    const GraphSpace s = make_path(5, 0.25);
    const VertexFunction one = VertexFunction::Ones(5);
    CHECK(lq_norm(s, one, 2.0) == doctest::Approx(1.0));
    CHECK(energy_seminorm(s, one) == 0.0);
    CHECK(w1q_norm(s, x_coord(s), 3.0) == doctest::Approx(lq_norm(s, x_coord(s), 3.0) + 1.0));
}

}
