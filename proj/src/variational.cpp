#include "quasilin/variational.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <chrono>
#include <cmath>

namespace quasilin {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw InvalidArgument(what);
}

const VertexFunction* coef_ptr(const DirichletProblem& p) { return p.a ? &*p.a : nullptr; }

Eigen::VectorXd gather(const GraphSpace& space, const VertexFunction& u) {
    Eigen::VectorXd x(space.interior_count());
    const auto& in = space.interior();
    for (Index i = 0; i < x.size(); ++i) x[i] = u[in[static_cast<std::size_t>(i)]];
    return x;
}

void scatter(const GraphSpace& space, const Eigen::VectorXd& x, VertexFunction& u) {
    const auto& in = space.interior();
    for (Index i = 0; i < x.size(); ++i) u[in[static_cast<std::size_t>(i)]] = x[i];
}

}  // namespace

void validate(const DirichletProblem& problem) {
    const GraphSpace& s = problem.space;
    const Index n = s.vertex_count();
    require(problem.f.size() == n, "source f has wrong length");
    require(problem.g.size() == n, "boundary data g has wrong length");
    require(problem.f.allFinite(), "source f is not finite");
    require(problem.g.allFinite(), "boundary data g is not finite");
    require(!s.boundary().empty() && s.interior_count() < n, "Dirichlet problem needs a nonempty boundary");
    require(s.interior_count() > 0, "Dirichlet problem needs at least one interior vertex");
    require(problem.A >= 1.0, "coefficient bound A must be >= 1");
    if (problem.a) {
        require(problem.a->size() == n, "coefficient a has wrong length");
        const double lo = 1.0 / problem.A * (1.0 - 1e-12);
        const double hi = problem.A * (1.0 + 1e-12);
        for (Index x = 0; x < n; ++x)
            require((*problem.a)[x] >= lo && (*problem.a)[x] <= hi, "coefficient a leaves [1/A, A]");
    }
}

VertexFunction apply_boundary(const DirichletProblem& problem, VertexFunction u) {
    for (Index x = 0; x < u.size(); ++x)
        if (problem.space.is_boundary(x)) u[x] = problem.g[x];
    return u;
}

DirichletProblem with_psi(const DirichletProblem& problem, Conductivity psi) {
    return DirichletProblem{problem.space, std::move(psi), problem.f, problem.g, problem.a, problem.A};
}

DirichletProblem with_f(const DirichletProblem& problem, VertexFunction f) {
    return DirichletProblem{problem.space, problem.psi, std::move(f), problem.g, problem.a, problem.A};
}

double energy_with(const DirichletProblem& problem, const Conductivity& psi, const VertexFunction& u) {
    const GraphSpace& s = problem.space;
    const VertexFunction g = gradient_modulus(s, u);
    double total = 0.0;
    for (Index x = 0; x < s.vertex_count(); ++x) {
        const double ax = problem.a ? (*problem.a)[x] : 1.0;
        total += s.mass()[x] * ax * psi.phi(g[x]);
        if (!s.is_boundary(x)) total += s.mass()[x] * problem.f[x] * u[x];
    }
    return total;
}

double energy(const DirichletProblem& problem, const VertexFunction& u, bool waive_boundary_check) {
    require(u.size() == problem.space.vertex_count(), "u has wrong length");
    if (!waive_boundary_check) {
        for (Index x = 0; x < u.size(); ++x) {
            if (!problem.space.is_boundary(x)) continue;
            if (std::abs(u[x] - problem.g[x]) > 1e-12 * std::max(1.0, std::abs(problem.g[x])))
                throw InvalidArgument("energy: u does not match the boundary data at vertex " + std::to_string(x));
        }
    }
    return energy_with(problem, problem.psi, u);
}

VertexFunction el_residual_with(const DirichletProblem& problem, const Conductivity& psi, const VertexFunction& u) {
    VertexFunction r = quasilinear_div(problem.space, psi, u, coef_ptr(problem)) - problem.f;
    for (Index x = 0; x < r.size(); ++x)
        if (problem.space.is_boundary(x)) r[x] = 0.0;
    return r;
}

VertexFunction el_residual(const DirichletProblem& problem, const VertexFunction& u) {
    return el_residual_with(problem, problem.psi, u);
}

double interior_l2(const GraphSpace& space, const VertexFunction& v) {
    double acc = 0.0;
    for (Index x : space.interior()) acc += space.mass()[x] * v[x] * v[x];
    return std::sqrt(acc);
}

double scaled_residual(const DirichletProblem& problem, const VertexFunction& r) {
    return interior_l2(problem.space, r) / (interior_l2(problem.space, problem.f) + 1.0);
}

SparseMatrix assemble_hessian(const GraphSpace& space, const VertexFunction& u, const VertexFunction& c1,
                              const VertexFunction& c2) {
    // E = sum_x m_x Phi_x(g_x) with m_x g_x^2 = u^T S_x u / 2, S_x the star Laplacian at x, so
    //   H = sum_x [ c1_x S_x + c2_x (S_x u)(S_x u)^T ].
    std::vector<Eigen::Triplet<double>> trips;
    std::vector<std::pair<Index, double>> su;  // (interior slot, (S_x u) entry)
    for (Index x = 0; x < space.vertex_count(); ++x) {
        const Index sx = space.interior_slot(x);
        double su_x = 0.0;
        su.clear();
        for (const auto& inc : space.neighbors(x)) {
            const Index sy = space.interior_slot(inc.vertex);
            const double w = inc.conductance;
            const double d = u[x] - u[inc.vertex];
            su_x += w * d;
            if (sy >= 0) su.push_back({sy, -w * d});
            if (sx >= 0) trips.emplace_back(sx, sx, c1[x] * w);
            if (sy >= 0) trips.emplace_back(sy, sy, c1[x] * w);
            if (sx >= 0 && sy >= 0) {
                trips.emplace_back(sx, sy, -c1[x] * w);
                trips.emplace_back(sy, sx, -c1[x] * w);
            }
        }
        if (sx >= 0) su.push_back({sx, su_x});
        if (c2[x] == 0.0) continue;
        for (const auto& [i, vi] : su)
            for (const auto& [j, vj] : su) trips.emplace_back(i, j, c2[x] * vi * vj);
    }
    SparseMatrix H(space.interior_count(), space.interior_count());
    H.setFromTriplets(trips.begin(), trips.end());
    return H;
}

SparseMatrix energy_hessian(const DirichletProblem& problem, const Conductivity& psi, const VertexFunction& u,
                            double floor_delta) {
    // c1 = a Psi(g)/2, c2 = a Psi'(g)/(4 m g), both taken at the floored modulus sqrt(g^2 + floor)
    const GraphSpace& s = problem.space;
    const VertexFunction g = gradient_modulus(s, u);
    VertexFunction c1(s.vertex_count()), c2(s.vertex_count());
    for (Index x = 0; x < s.vertex_count(); ++x) {
        const double ax = problem.a ? (*problem.a)[x] : 1.0;
        const double r = std::sqrt(g[x] * g[x] + floor_delta);
        c1[x] = 0.5 * ax * psi(r);
        c2[x] = r > 0.0 ? ax * psi.derivative(r) / (4.0 * s.mass()[x] * r) : 0.0;
    }
    return assemble_hessian(s, u, c1, c2);
}

SparseMatrix stiffness_matrix(const GraphSpace& space, const VertexFunction* a) {
    std::vector<Eigen::Triplet<double>> trips;
    for (const auto& e : space.edges()) {
        const double c = a ? 0.5 * ((*a)[e.a] + (*a)[e.b]) : 1.0;
        const double w = e.conductance * c;
        const Index ia = space.interior_slot(e.a);
        const Index ib = space.interior_slot(e.b);
        if (ia >= 0) trips.emplace_back(ia, ia, w);
        if (ib >= 0) trips.emplace_back(ib, ib, w);
        if (ia >= 0 && ib >= 0) {
            trips.emplace_back(ia, ib, -w);
            trips.emplace_back(ib, ia, -w);
        }
    }
    SparseMatrix K(space.interior_count(), space.interior_count());
    K.setFromTriplets(trips.begin(), trips.end());
    return K;
}

VertexFunction linear_dirichlet_solve(const GraphSpace& space, const VertexFunction& f, const VertexFunction& g,
                                      const VertexFunction* a) {
    // interior rows: sum_y w c (u_y - u_z) = m_z f_z  <=>  K u_I = -m f + (boundary coupling) g
    const SparseMatrix K = stiffness_matrix(space, a);
    Eigen::VectorXd rhs(space.interior_count());
    for (Index z : space.interior()) {
        const Index i = space.interior_slot(z);
        double b = -space.mass()[z] * f[z];
        for (const auto& inc : space.neighbors(z)) {
            if (!space.is_boundary(inc.vertex)) continue;
            const double c = a ? 0.5 * ((*a)[z] + (*a)[inc.vertex]) : 1.0;
            b += inc.conductance * c * g[inc.vertex];
        }
        rhs[i] = b;
    }
    Eigen::SimplicialLDLT<SparseMatrix> solver(K);
    if (solver.info() != Eigen::Success) throw NumericalError("linear Dirichlet solve: factorization failed");
    VertexFunction u = g;
    scatter(space, solver.solve(rhs), u);
    return u;
}

SolveReport minimize_direct(const DirichletProblem& problem, const DirectOptions& options) {
    validate(problem);
    const auto t0 = std::chrono::steady_clock::now();
    const GraphSpace& s = problem.space;
    const Eigen::VectorXd mass = gather(s, s.mass());

    Eigen::SimplicialLDLT<SparseMatrix> precond(stiffness_matrix(s, coef_ptr(problem)));
    if (precond.info() != Eigen::Success) throw NumericalError("minimize_direct: preconditioner factorization failed");

    VertexFunction u = apply_boundary(problem, options.initial ? *options.initial : problem.g);
    require(u.size() == s.vertex_count(), "initial guess has wrong length");

    SolveReport rep;
    rep.method = "fista";
    rep.psi_name = problem.psi.name();

    auto residual_of = [&](const VertexFunction& v) { return el_residual(problem, v); };
    Eigen::VectorXd x = gather(s, u);
    VertexFunction work = u;
    VertexFunction r_x = residual_of(u);
    double best_res = scaled_residual(problem, r_x);
    VertexFunction best = u;
    double L = 1.0;
    double t = 1.0;
    Eigen::VectorXd y = x;

    auto state = [&](const Eigen::VectorXd& v) {
        scatter(s, v, work);
        return work;
    };

    for (int it = 0; it <= options.max_iter; ++it) {
        const VertexFunction uy = state(y);
        const VertexFunction ry = residual_of(uy);
        const double res_y = scaled_residual(problem, ry);
        if (options.record_history) {
            rep.residual_history.push_back(res_y);
            rep.energy_history.push_back(energy_with(problem, problem.psi, uy));
        }
        if (res_y < best_res) {
            best_res = res_y;
            best = uy;
        }
        rep.iterations = it;
        if (res_y <= options.tol) {
            best = uy;
            best_res = res_y;
            rep.converged = true;
            break;
        }
        if (it == options.max_iter) break;

        // descent direction in the stiffness metric: K d = m r
        const Eigen::VectorXd mr = mass.cwiseProduct(gather(s, ry));
        const Eigen::VectorXd d = precond.solve(mr);
        const double dKd = d.dot(mr);
        const double ey = energy_with(problem, problem.psi, uy);
        L = std::max(L * 0.8, 1e-12);
        Eigen::VectorXd x_new;
        for (int bt = 0;; ++bt) {
            x_new = y + d / L;
            const VertexFunction un = state(x_new);
            const Eigen::VectorXd rn = gather(s, residual_of(un));
            // secant curvature along the step, measured with residuals (immune to energy round-off)
            const double curv = -(mass.cwiseProduct(rn - gather(s, ry))).dot(d / L);
            const double en = energy_with(problem, problem.psi, un);
            const double model = ey - dKd / L + 0.5 * dKd / L;
            const bool secant_ok = curv <= L * dKd / (L * L) * (1.0 + 1e-12);
            const bool energy_ok = en <= model + 1e-13 * (std::abs(ey) + 1.0);
            if ((secant_ok && energy_ok) || bt >= 60) break;
            L *= 2.0;
        }
        // gradient restart: drop momentum when it points uphill
        const Eigen::VectorXd step = x_new - x;
        if (-(mass.cwiseProduct(gather(s, ry))).dot(step) > 0.0) t = 1.0;
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        y = x_new + ((t - 1.0) / t_next) * (x_new - x);
        x = x_new;
        t = t_next;
    }

    rep.u = best;
    rep.residual = best_res;
    rep.energy = energy_with(problem, problem.psi, best);
    if (!rep.converged)
        rep.message = "max_iter reached; best scaled residual " + std::to_string(best_res);
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

PoincareEstimate poincare_constant(const GraphSpace& space, double p) {
    require(space.interior_count() < space.vertex_count(), "Poincare constant needs a nonempty boundary");
    require(p > 1.0, "Poincare exponent must be > 1");
    const Index n = space.interior_count();
    const Eigen::VectorXd mass = gather(space, space.mass());
    const Eigen::VectorXd inv_sqrt = mass.cwiseSqrt().cwiseInverse();
    Eigen::MatrixXd A = Eigen::MatrixXd(stiffness_matrix(space));
    A = inv_sqrt.asDiagonal() * A * inv_sqrt.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
    if (es.info() != Eigen::Success) throw NumericalError("Poincare constant: eigen-solver failed");
    if (p == 2.0) return {1.0 / es.eigenvalues()[0], true};

    PoincareEstimate out;
    const Index family = std::min<Index>(n, 5);
    VertexFunction u = VertexFunction::Zero(space.vertex_count());
    for (Index k = 0; k < family; ++k) {
        const Eigen::VectorXd phi = inv_sqrt.cwiseProduct(es.eigenvectors().col(k));
        for (double expo : {0.5, 1.0, 1.5, 2.0}) {
            Eigen::VectorXd v = phi.unaryExpr([expo](double z) { return std::copysign(std::pow(std::abs(z), expo), z); });
            scatter(space, v, u);
            const double num = std::pow(lq_norm(space, u, p), p);
            const VertexFunction g = gradient_modulus(space, u);
            const double den = std::pow(lq_norm(space, g, p), p);
            if (den > 0.0) out.value = std::max(out.value, num / den);
        }
    }
    return out;
}

double lq_norm(const GraphSpace& space, const VertexFunction& v, double q) {
    double acc = 0.0;
    for (Index x = 0; x < v.size(); ++x) acc += space.mass()[x] * std::pow(std::abs(v[x]), q);
    return std::pow(acc, 1.0 / q);
}

double w1q_norm(const GraphSpace& space, const VertexFunction& v, double q) {
    return lq_norm(space, v, q) + lq_norm(space, gradient_modulus(space, v), q);
}

double energy_seminorm(const GraphSpace& space, const VertexFunction& v) {
    double acc = 0.0;
    for (const auto& e : space.edges()) {
        const double d = v[e.b] - v[e.a];
        acc += e.conductance * d * d;
    }
    return std::sqrt(acc);
}

}  // namespace quasilin
