#include "quasilin/galerkin.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace quasilin {

namespace {

constexpr Index kDenseLimit = 6000;

void require(bool ok, const std::string& what) {
    if (!ok) throw InvalidArgument(what);
}

Eigen::VectorXd interior_mass(const GraphSpace& space) {
    Eigen::VectorXd m(space.interior_count());
    for (Index i = 0; i < m.size(); ++i) m[i] = space.mass()[space.interior()[static_cast<std::size_t>(i)]];
    return m;
}

Eigen::VectorXd gather(const GraphSpace& space, const VertexFunction& u) {
    Eigen::VectorXd x(space.interior_count());
    for (Index i = 0; i < x.size(); ++i) x[i] = u[space.interior()[static_cast<std::size_t>(i)]];
    return x;
}

void scatter_add(const GraphSpace& space, const Eigen::VectorXd& x, VertexFunction& u) {
    for (Index i = 0; i < x.size(); ++i) u[space.interior()[static_cast<std::size_t>(i)]] += x[i];
}

// Rows of the basis on interior vertices.
Eigen::MatrixXd interior_rows(const GraphSpace& space, const EigenBasis& basis) {
    Eigen::MatrixXd B(space.interior_count(), basis.size());
    for (Index i = 0; i < B.rows(); ++i) B.row(i) = basis.vectors.row(space.interior()[static_cast<std::size_t>(i)]);
    return B;
}

void fix_sign(Eigen::Ref<Eigen::VectorXd> v) {
    const double cutoff = 1e-10 * v.cwiseAbs().maxCoeff();
    for (Index i = 0; i < v.size(); ++i) {
        if (std::abs(v[i]) > cutoff) {
            if (v[i] < 0.0) v = -v;
            return;
        }
    }
}

// Canonical orthonormal basis of span(Q): project unit vectors in vertex order.
Eigen::MatrixXd canonical_cluster(const Eigen::MatrixXd& Q) {
    const Index dim = Q.cols();
    Eigen::MatrixXd out(Q.rows(), dim);
    Index found = 0;
    for (Index j = 0; j < Q.rows() && found < dim; ++j) {
        Eigen::VectorXd cand = Q * Q.row(j).transpose();
        for (int pass = 0; pass < 2; ++pass)
            for (Index c = 0; c < found; ++c) cand -= out.col(c).dot(cand) * out.col(c);
        const double nrm = cand.norm();
        if (nrm > 1e-6) out.col(found++) = cand / nrm;
    }
    if (found < dim) return Q;  // cannot happen for an orthonormal Q; keep the solver's basis
    return out;
}

// Psi_{M,eta} at vertex x together with its potential and derivative.
struct VertexModel {
    const DirichletProblem& problem;
    double M;
    const VertexFunction* eta;
    double psi_zero;  // Psi at a zero argument (regularised when Psi(0) diverges)
    mutable int substitutions = 0;

    VertexModel(const DirichletProblem& p, double M_, const VertexFunction* eta_)
        : problem(p), M(M_), eta(eta_) {
        psi_zero = p.psi(0.0);
        if (!std::isfinite(psi_zero)) psi_zero = p.psi(1e-6);
    }

    double a(Index x) const { return problem.a ? (*problem.a)[x] : 1.0; }
    double e2(Index x) const { return eta ? (*eta)[x] * (*eta)[x] : 1.0; }

    double psi(Index x, double t) const {
        const double arg = std::min(t, M) * e2(x);
        if (arg > 0.0) return a(x) * problem.psi(arg);
        if (t > 0.0) ++substitutions;
        return a(x) * psi_zero;
    }
    double dpsi(Index x, double t) const {
        const double s = e2(x);
        if (t >= M || s == 0.0) return 0.0;
        return a(x) * s * problem.psi.derivative(t * s);
    }
    double phi(Index x, double t) const {
        const double s = e2(x);
        if (s == 0.0) return a(x) * 0.5 * psi_zero * t * t;
        if (s == 1.0) return a(x) * phi_M(problem.psi, M, t);
        return a(x) * phi_M(problem.psi, M * s, t * s) / (s * s);
    }
};

VertexFunction model_residual(const VertexModel& mod, const VertexFunction& u) {
    const GraphSpace& s = mod.problem.space;
    const VertexFunction g = gradient_modulus(s, u);
    VertexFunction coef(s.vertex_count());
    for (Index x = 0; x < coef.size(); ++x) coef[x] = g[x] > 0.0 ? mod.psi(x, g[x]) : 0.0;
    VertexFunction r = weighted_div(s, coef, u) - mod.problem.f;
    for (Index x = 0; x < r.size(); ++x)
        if (s.is_boundary(x)) r[x] = 0.0;
    return r;
}

double model_energy(const VertexModel& mod, const VertexFunction& u) {
    const GraphSpace& s = mod.problem.space;
    const VertexFunction g = gradient_modulus(s, u);
    double total = 0.0;
    for (Index x = 0; x < s.vertex_count(); ++x) {
        total += s.mass()[x] * mod.phi(x, g[x]);
        if (!s.is_boundary(x)) total += s.mass()[x] * mod.problem.f[x] * u[x];
    }
    return total;
}

SparseMatrix model_hessian(const VertexModel& mod, const VertexFunction& u, double floor) {
    const GraphSpace& s = mod.problem.space;
    const VertexFunction g = gradient_modulus(s, u);
    VertexFunction c1(s.vertex_count()), c2(s.vertex_count());
    for (Index x = 0; x < s.vertex_count(); ++x) {
        const double r = std::sqrt(g[x] * g[x] + floor);
        c1[x] = 0.5 * mod.psi(x, r);
        c2[x] = r > 0.0 ? mod.dpsi(x, r) / (4.0 * s.mass()[x] * r) : 0.0;
    }
    return assemble_hessian(s, u, c1, c2);
}

// Newton system on coefficients (B = identity on the nodal path).
struct Reduced {
    const GraphSpace& space;
    const Eigen::MatrixXd* B;  // nullptr: nodal coordinates
    Eigen::VectorXd mass;

    Eigen::VectorXd neg_gradient(const VertexFunction& r) const {
        const Eigen::VectorXd mr = mass.cwiseProduct(gather(space, r));
        return B ? Eigen::VectorXd(B->transpose() * mr) : mr;
    }
    // ||P_k r||_{L2(m)}
    double projected_norm(const VertexFunction& r) const {
        if (B) return neg_gradient(r).norm();
        return std::sqrt(gather(space, r).cwiseAbs2().dot(mass));
    }
    VertexFunction assemble(const VertexFunction& base, const Eigen::VectorXd& c) const {
        VertexFunction u = base;
        scatter_add(space, B ? Eigen::VectorXd(*B * c) : c, u);
        return u;
    }
    Eigen::VectorXd newton_direction(const SparseMatrix& H, const Eigen::VectorXd& rhs) const {
        if (B) {
            const Eigen::MatrixXd HB = H * (*B);
            Eigen::MatrixXd Hc = B->transpose() * HB;
            Hc = 0.5 * (Hc + Hc.transpose()).eval();
            Eigen::LDLT<Eigen::MatrixXd> ldlt(Hc);
            double shift = 0.0;
            while (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.vectorD().minCoeff() <= 0.0) {
                shift = shift == 0.0 ? 1e-12 * std::max(1.0, Hc.diagonal().cwiseAbs().maxCoeff()) : 10.0 * shift;
                ldlt.compute(Hc + shift * Eigen::MatrixXd::Identity(Hc.rows(), Hc.cols()));
                if (shift > 1e12) throw NumericalError("reduced Hessian could not be regularised");
            }
            return ldlt.solve(rhs);
        }
        Eigen::SimplicialLDLT<SparseMatrix> ldlt(H);
        double shift = 0.0;
        while (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= 0.0) {
            double diag = 1.0;
            for (Index i = 0; i < H.rows(); ++i) diag = std::max(diag, std::abs(H.coeff(i, i)));
            shift = shift == 0.0 ? 1e-12 * diag : 10.0 * shift;
            SparseMatrix I(H.rows(), H.cols());
            I.setIdentity();
            ldlt.compute(H + shift * I);
            if (shift > 1e12 * diag) throw NumericalError("Hessian could not be regularised");
        }
        return ldlt.solve(rhs);
    }
};

GalerkinSolution newton(const DirichletProblem& problem, const Eigen::MatrixXd* B, const VertexFunction& lift,
                        const GalerkinOptions& opt) {
    validate(problem);
    require(opt.M > 0.0, "truncation level M must be > 0");
    if (opt.eta) {
        require(opt.eta->size() == problem.space.vertex_count(), "eta has wrong length");
        require((opt.eta->array() >= 0.0).all() && (opt.eta->array() <= 1.0).all(), "eta must lie in [0, 1]");
    }
    require(problem.psi.meta().lambda > -1.0, "conductivity with t Psi(t) not strictly increasing is rejected");
    const GraphSpace& s = problem.space;
    const VertexModel mod(problem, opt.M, opt.eta ? &*opt.eta : nullptr);
    const Reduced red{s, B, interior_mass(s)};
    const double scale = interior_l2(s, problem.f) + 1.0;

    VertexFunction start = opt.initial ? apply_boundary(problem, *opt.initial)
                                       : linear_dirichlet_solve(s, problem.f, problem.g, problem.a ? &*problem.a : nullptr);
    Eigen::VectorXd c;
    if (B) {
        c = B->transpose() * red.mass.cwiseProduct(gather(s, start - lift));
    } else {
        c = gather(s, start - lift);
    }

    GalerkinSolution sol;
    sol.lift = lift;
    VertexFunction u = red.assemble(lift, c);
    VertexFunction r = model_residual(mod, u);
    double E = model_energy(mod, u);
    for (int it = 0;; ++it) {
        const double res = red.projected_norm(r) / scale;
        sol.residual_history.push_back(res);
        sol.iterations = it;
        if (res <= opt.tol) {
            sol.converged = true;
            break;
        }
        if (it >= opt.max_iter) {
            sol.message = "Newton iteration limit reached";
            break;
        }
        const VertexFunction g = gradient_modulus(s, u);
        const double gscale = std::max(1.0, g.maxCoeff());
        const SparseMatrix H = model_hessian(mod, u, opt.newton_floor * gscale * gscale);
        const Eigen::VectorXd rhs = red.neg_gradient(r);  // -dE/dc
        Eigen::VectorXd dir = red.newton_direction(H, rhs);
        double slope = -rhs.dot(dir);
        if (!(slope < 0.0)) {
            dir = rhs;
            slope = -rhs.dot(rhs);
            ++sol.gradient_fallbacks;
        }
        const double slack = 1e-13 * (std::abs(E) + 1.0);
        bool accepted = false;
        for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
            double alpha = 1.0;
            while (alpha > 1e-12) {
                const Eigen::VectorXd c_new = c + alpha * dir;
                const VertexFunction u_new = red.assemble(lift, c_new);
                const double E_new = model_energy(mod, u_new);
                if (E_new <= E + 1e-4 * alpha * slope + slack) {
                    const Eigen::VectorXd c_old = c;
                    c = c_new;
                    u = u_new;
                    E = E_new;
                    accepted = true;
                    // Armijo takes the first admissible step; with Psi singular at 0 the Newton
                    // model is poor far from the solution, so keep halving or doubling while the
                    // energy still drops
                    auto improve = [&](double a) {
                        const Eigen::VectorXd c_try = c_old + a * dir;
                        const VertexFunction u_try = red.assemble(lift, c_try);
                        const double E_try = model_energy(mod, u_try);
                        if (!(E_try < E - slack)) return false;
                        c = c_try;
                        u = u_try;
                        E = E_try;
                        return true;
                    };
                    bool shrunk = false;
                    for (double a = 0.5 * alpha; a > 1e-12 && improve(a); a *= 0.5) shrunk = true;
                    if (!shrunk && alpha == 1.0)
                        for (double a = 2.0; a <= 64.0 && improve(a); a *= 2.0) {
                        }
                    break;
                }
                alpha *= 0.5;
            }
            if (!accepted && attempt == 0) {
                // line search failed along Newton: fall back to the (scaled) gradient direction
                dir = rhs / std::max(1.0, rhs.norm());
                slope = -rhs.dot(dir);
                ++sol.gradient_fallbacks;
            }
        }
        if (!accepted) {
            sol.message = "line search failed";
            break;
        }
        r = model_residual(mod, u);
    }
    sol.coefficients = B ? c : Eigen::VectorXd();
    sol.u = u;
    sol.projected_residual = sol.residual_history.back();
    sol.energy = E;
    if (mod.substitutions > 0)
        sol.message += (sol.message.empty() ? "" : "; ") + std::to_string(mod.substitutions) +
                       " evaluations used the regularised Psi(0)";
    return sol;
}

}  // namespace

EigenBasis dirichlet_eigenbasis(const GraphSpace& space, Index k) {
    const Index n = space.interior_count();
    require(k >= 1 && k <= n, "eigenbasis size k=" + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
    require(n <= kDenseLimit, "interior dimension " + std::to_string(n) + " exceeds the dense eigen-solver limit");
    const Eigen::VectorXd inv_sqrt = interior_mass(space).cwiseSqrt().cwiseInverse();
    Eigen::MatrixXd A = Eigen::MatrixXd(stiffness_matrix(space));
    A = inv_sqrt.asDiagonal() * A * inv_sqrt.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
    if (es.info() != Eigen::Success) throw NumericalError("Dirichlet eigenproblem: solver breakdown");

    const Eigen::VectorXd& lam = es.eigenvalues();
    Eigen::MatrixXd Q = es.eigenvectors();
    const double cluster_tol = 1e-9 * std::max(1.0, lam.cwiseAbs().maxCoeff());
    for (Index i = 0; i < n;) {
        Index j = i + 1;
        while (j < n && lam[j] - lam[j - 1] <= cluster_tol) ++j;
        if (j - i > 1) Q.middleCols(i, j - i) = canonical_cluster(Q.middleCols(i, j - i));
        i = j;
    }

    EigenBasis basis;
    basis.eigenvalues = lam.head(k);
    basis.vectors = Eigen::MatrixXd::Zero(space.vertex_count(), k);
    basis.space_hash = space.content_hash();
    for (Index c = 0; c < k; ++c) {
        Eigen::VectorXd phi = inv_sqrt.cwiseProduct(Q.col(c));
        fix_sign(phi);
        for (Index i = 0; i < n; ++i) basis.vectors(space.interior()[static_cast<std::size_t>(i)], c) = phi[i];
    }
    return basis;
}

void write_basis_csv(std::ostream& out, const EigenBasis& basis) {
    char buf[64];
    out << "# eigenbasis space_hash=" << std::hex << basis.space_hash << std::dec << " k=" << basis.size()
        << " vertices=" << basis.vectors.rows() << '\n';
    out << "row";
    for (Index c = 0; c < basis.size(); ++c) out << ",phi_" << (c + 1);
    out << "\neigenvalue";
    for (Index c = 0; c < basis.size(); ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", basis.eigenvalues[c]);
        out << ',' << buf;
    }
    out << '\n';
    for (Index v = 0; v < basis.vectors.rows(); ++v) {
        out << v;
        for (Index c = 0; c < basis.size(); ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", basis.vectors(v, c));
            out << ',' << buf;
        }
        out << '\n';
    }
}

namespace {

EigenBasis parse_basis_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("# eigenbasis", 0) != 0) throw InvalidArgument("basis file: missing header");
    EigenBasis basis;
    Index k = -1, n = -1;
    {
        std::istringstream ss(line.substr(12));
        std::string tok;
        while (ss >> tok) {
            auto eq = tok.find('=');
            if (eq == std::string::npos) continue;
            const std::string key = tok.substr(0, eq);
            const std::string val = tok.substr(eq + 1);
            if (key == "space_hash") basis.space_hash = std::stoull(val, nullptr, 16);
            if (key == "k") k = std::stol(val);
            if (key == "vertices") n = std::stol(val);
        }
    }
    if (k < 1 || n < 1) throw InvalidArgument("basis file: bad header");
    basis.eigenvalues.resize(k);
    basis.vectors.resize(n, k);
    auto parse_row = [&](const std::string& text, std::string& label, Eigen::Ref<Eigen::VectorXd> dst) {
        std::istringstream ss(text);
        std::getline(ss, label, ',');
        std::string cell;
        for (Index c = 0; c < k; ++c) {
            if (!std::getline(ss, cell, ',')) throw InvalidArgument("basis file: short row");
            dst[c] = std::stod(cell);
        }
    };
    std::getline(in, line);  // column header
    std::string label;
    if (!std::getline(in, line)) throw InvalidArgument("basis file: missing eigenvalue row");
    parse_row(line, label, basis.eigenvalues);
    Eigen::VectorXd row(k);
    for (Index v = 0; v < n; ++v) {
        if (!std::getline(in, line)) throw InvalidArgument("basis file: missing vertex rows");
        parse_row(line, label, row);
        basis.vectors.row(v) = row.transpose();
    }
    return basis;
}

}  // namespace

EigenBasis read_basis_csv(std::istream& in) {
    try {
        return parse_basis_csv(in);
    } catch (const std::logic_error&) {
        // stoull / stod on a malformed cell
        throw InvalidArgument("basis file: malformed number");
    }
}

EigenBasis cached_eigenbasis(const GraphSpace& space, Index k, const std::string& dir) {
    char name[96];
    std::snprintf(name, sizeof name, "basis_%016llx_%ld.csv", static_cast<unsigned long long>(space.content_hash()),
                  static_cast<long>(k));
    const std::filesystem::path path = std::filesystem::path(dir) / name;
    if (std::filesystem::exists(path)) {
        std::ifstream in(path);
        try {
            EigenBasis b = read_basis_csv(in);
            if (b.space_hash == space.content_hash() && b.size() == k && b.vectors.rows() == space.vertex_count())
                return b;
        } catch (const Error&) {
            // stale or foreign file: recompute below
        }
    }
    EigenBasis b = dirichlet_eigenbasis(space, k);
    std::filesystem::create_directories(dir);
    std::ofstream out(path);
    write_basis_csv(out, b);
    return b;
}

Eigen::VectorXd project(const GraphSpace& space, const EigenBasis& basis, const VertexFunction& v) {
    return basis.vectors.transpose() * space.mass().cwiseProduct(v);
}

VertexFunction harmonic_lift(const DirichletProblem& problem) {
    return linear_dirichlet_solve(problem.space, VertexFunction::Zero(problem.space.vertex_count()), problem.g);
}

GalerkinSolution solve_reduced(const DirichletProblem& problem, const EigenBasis& basis, const GalerkinOptions& options) {
    const GraphSpace& s = problem.space;
    require(basis.vectors.rows() == s.vertex_count(), "basis does not belong to this space");
    require(basis.space_hash == 0 || basis.space_hash == s.content_hash(), "basis was built for a different space");
    const VertexFunction lift = harmonic_lift(problem);
    if (options.nodal_when_full && basis.size() == s.interior_count()) {
        GalerkinSolution sol = newton(problem, nullptr, lift, options);
        sol.coefficients = project(s, basis, sol.u - lift);
        return sol;
    }
    const Eigen::MatrixXd B = interior_rows(s, basis);
    return newton(problem, &B, lift, options);
}

GalerkinSolution solve_full_dimension(const DirichletProblem& problem, const GalerkinOptions& options) {
    return newton(problem, nullptr, harmonic_lift(problem), options);
}

GalerkinStudy galerkin_convergence_study(const DirichletProblem& problem, const EigenBasis& basis,
                                         const std::vector<Index>& ks, double M) {
    for (std::size_t i = 1; i < ks.size(); ++i) require(ks[i] > ks[i - 1], "ks must be increasing");
    const GraphSpace& s = problem.space;
    GalerkinOptions opt;
    opt.M = M;
    GalerkinStudy study;
    const GalerkinSolution ref = solve_full_dimension(problem, opt);
    if (!ref.converged) throw NumericalError("Galerkin study: reference solve did not converge (" + ref.message + ")");
    study.reference = ref.u;
    const double data = w1q_norm(s, problem.g, 2.0) + interior_l2(s, problem.f);
    for (Index k : ks) {
        require(k >= 1 && k <= basis.size(), "study k exceeds basis size");
        EigenBasis sub;
        sub.eigenvalues = basis.eigenvalues.head(k);
        sub.vectors = basis.vectors.leftCols(k);
        sub.space_hash = basis.space_hash;
        const GalerkinSolution sol = solve_reduced(problem, sub, opt);
        if (!sol.converged) throw NumericalError("Galerkin study: solve at k=" + std::to_string(k) + " failed");
        GalerkinStudyRow row;
        row.k = k;
        const VertexFunction diff = sol.u - ref.u;
        row.l2_error = lq_norm(s, diff, 2.0);
        row.energy_error = energy_seminorm(s, diff);
        row.w12_norm = w1q_norm(s, sol.u, 2.0);
        row.fitted_C = data > 0.0 ? row.w12_norm / data : 0.0;
        row.energy = sol.energy;
        row.projected_residual = sol.projected_residual;
        row.iterations = sol.iterations;
        study.max_fitted_C = std::max(study.max_fitted_C, row.fitted_C);
        study.rows.push_back(row);
    }
    return study;
}

}  // namespace quasilin
