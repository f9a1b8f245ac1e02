#include "quasilin/verify.hpp"

#include "quasilin/galerkin.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <random>

namespace quasilin {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw InvalidArgument(what);
}

// h = Psi(|grad u|) |grad u| with the zero-product convention.
VertexFunction flux_modulus(const DirichletProblem& problem, const VertexFunction& g) {
    VertexFunction h(g.size());
    for (Index x = 0; x < g.size(); ++x) h[x] = g[x] > 0.0 ? problem.psi(g[x]) * g[x] : 0.0;
    return h;
}

void require_inside(const GraphSpace& space, const Ball& b, const std::string& what) {
    for (Index x : b.members)
        if (space.is_boundary(x)) throw InvalidArgument(what + ": ball of radius " + std::to_string(b.radius) +
                                                        " reaches the Dirichlet set");
}

double ratio_of(EstimateReport& rep) {
    rep.defined = rep.rhs > 0.0;
    rep.ratio = rep.defined ? rep.lhs / rep.rhs : 0.0;
    if (!rep.defined) rep.note = "rhs vanishes: ratio undefined";
    return rep.ratio;
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

void normalize_sup(VertexFunction& u) {
    const double s = u.cwiseAbs().maxCoeff();
    if (s > 0.0) u /= s;
}

struct Gamma2Terms {
    VertexFunction gamma;
    VertexFunction lap;
    VertexFunction half_lap_gamma;
    VertexFunction gamma_lap;
};

Gamma2Terms gamma2_terms(const GraphSpace& space, const VertexFunction& u) {
    Gamma2Terms t;
    t.gamma = carre_du_champ(space, u, u);
    t.lap = laplacian(space, u);
    t.half_lap_gamma = 0.5 * laplacian(space, t.gamma);
    t.gamma_lap = carre_du_champ(space, u, t.lap);
    return t;
}

}  // namespace

VertexFunction boundary_distance(const GraphSpace& space) {
    const Index n = space.vertex_count();
    VertexFunction dist = VertexFunction::Constant(n, std::numeric_limits<double>::infinity());
    using Item = std::pair<double, Index>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
    for (Index x = 0; x < n; ++x) {
        if (space.is_boundary(x)) {
            dist[x] = 0.0;
            queue.push({0.0, x});
        }
    }
    while (!queue.empty()) {
        const auto [d, x] = queue.top();
        queue.pop();
        if (d > dist[x]) continue;
        for (const auto& inc : space.neighbors(x)) {
            const double nd = d + inc.length;
            if (nd < dist[inc.vertex]) {
                dist[inc.vertex] = nd;
                queue.push({nd, inc.vertex});
            }
        }
    }
    return dist;
}

EstimateReport laplacian_l2_ratio(const DirichletProblem& problem, const VertexFunction& u,
                                  const std::vector<Index>& window) {
    const GraphSpace& s = problem.space;
    require(!window.empty(), "laplacian_l2_ratio: empty window");
    require(u.size() == s.vertex_count(), "laplacian_l2_ratio: u has wrong length");
    const VertexFunction dist = boundary_distance(s);
    EstimateReport rep;
    rep.estimate = "laplacian_l2";
    rep.h = s.min_edge_length();
    rep.p = problem.psi.meta().p;
    rep.window_size = window.size();
    rep.window_margin = std::numeric_limits<double>::infinity();
    for (Index x : window) {
        require(x >= 0 && x < s.vertex_count(), "laplacian_l2_ratio: window vertex out of range");
        rep.window_margin = std::min(rep.window_margin, dist[x]);
    }
    if (rep.window_margin < 2.0 * rep.h * (1.0 - 1e-12))
        throw InvalidArgument("laplacian_l2_ratio: window is closer than two edge lengths to the boundary");

    const VertexFunction lap = laplacian(s, u);
    for (Index x : window) rep.lhs += s.mass()[x] * lap[x] * lap[x];
    const VertexFunction G = harmonic_lift(problem);
    const VertexFunction gG = gradient_modulus(s, G);
    for (Index x = 0; x < s.vertex_count(); ++x) {
        const double f = s.is_boundary(x) ? 0.0 : problem.f[x];
        rep.rhs += s.mass()[x] * (f * f + G[x] * G[x] + gG[x] * gG[x]);
    }
    ratio_of(rep);
    return rep;
}

EstimateReport second_order_ball_ratio(const DirichletProblem& problem, const VertexFunction& u, Index center,
                                       double R) {
    const GraphSpace& s = problem.space;
    require(R > 0.0 && R <= 1.0, "second_order_ball_ratio: need 0 < R <= 1");
    const Ball big = ball(s, center, R);
    require_inside(s, big, "second_order_ball_ratio");
    const Ball quarter = ball(s, center, R / 4.0);
    require(!quarter.members.empty(), "second_order_ball_ratio: empty quarter ball");

    const VertexFunction h = flux_modulus(problem, gradient_modulus(s, u));
    const VertexFunction gh = gradient_modulus(s, h);
    EstimateReport rep;
    rep.estimate = "second_order_ball";
    rep.h = s.min_edge_length();
    rep.R = R;
    rep.p = problem.psi.meta().p;
    rep.center = center;
    rep.window_size = quarter.members.size();
    rep.window_margin = boundary_distance(s)[center] - R;
    rep.lhs = ball_average(s, quarter.members, gh.cwiseAbs2());
    VertexFunction f2 = problem.f.cwiseAbs2();
    const double havg = ball_average(s, big.members, h);
    rep.rhs = ball_average(s, big.members, f2) + havg * havg;
    ratio_of(rep);
    return rep;
}

EstimateReport gradient_linf_ratio(const DirichletProblem& problem, const VertexFunction& u, Index center, double R,
                                   double q_exponent, double C0) {
    const GraphSpace& s = problem.space;
    const double p = problem.psi.meta().p;
    require(p > 1.0, "gradient_linf_ratio: needs p > 1");
    require(R > 0.0, "gradient_linf_ratio: R must be positive");
    const Ball big = ball(s, center, R);
    require_inside(s, big, "gradient_linf_ratio");
    const Ball quarter = ball(s, center, R / 4.0);

    EstimateReport rep;
    rep.estimate = "gradient_linf";
    rep.h = s.min_edge_length();
    rep.R = R;
    rep.p = p;
    rep.center = center;
    rep.window_size = quarter.members.size();
    rep.window_margin = boundary_distance(s)[center] - R;

    double N = s.dimension() > 0 ? s.dimension() : 2.0;
    if (s.curvature() && std::isfinite(s.curvature()->N)) N = s.curvature()->N;
    VertexFunction fq(s.vertex_count());
    for (Index x = 0; x < fq.size(); ++x) fq[x] = std::pow(std::abs(problem.f[x]), q_exponent);
    const double moment = ball_average(s, big.members, fq);
    if (!(q_exponent > std::max(N, 2.0))) {
        rep.applicable = false;
        rep.note = "q must exceed max(N, 2)";
    } else if (moment > C0) {
        rep.applicable = false;
        rep.note = "f moment " + std::to_string(moment) + " exceeds C0";
    }

    const VertexFunction g = gradient_modulus(s, u);
    for (Index x : quarter.members) rep.lhs = std::max(rep.lhs, g[x]);
    rep.rhs = std::pow(1.0 + ball_average(s, big.members, flux_modulus(problem, g)), 1.0 / (p - 1.0));
    ratio_of(rep);
    return rep;
}

EstimateReport cheng_yau_ratio(const GraphSpace& space, double p, const VertexFunction& u, Index center, double R,
                               double residual_tol) {
    require(space.curvature().has_value(), "cheng_yau_ratio: curvature metadata (K, N) must be declared");
    require(R > 0.0, "cheng_yau_ratio: R must be positive");
    require(u.size() == space.vertex_count(), "cheng_yau_ratio: u has wrong length");
    const Ball big = ball(space, center, R);
    const Ball half = ball(space, center, R / 2.0);

    std::vector<char> in_big(static_cast<std::size_t>(space.vertex_count()), 0);
    for (Index x : big.members) in_big[static_cast<std::size_t>(x)] = 1;
    for (Index x : big.members) {
        if (!(u[x] > 0.0)) throw InvalidArgument("cheng_yau_ratio: u must be positive on B_R");
    }
    // interior of B_R: non-Dirichlet members with every neighbour in B_R
    // residual relative to the size of the flux terms, so that u -> beta u does not change the test
    const Conductivity psi = p_power(p);
    const VertexFunction r = quasilinear_div(space, psi, u);
    const VertexFunction g = gradient_modulus(space, u);
    double res = 0.0, scale = 0.0;
    for (Index x : big.members) {
        if (space.is_boundary(x)) continue;
        bool inner = true;
        double flux = 0.0;
        for (const auto& inc : space.neighbors(x)) {
            inner = inner && in_big[static_cast<std::size_t>(inc.vertex)];
            const double cx = g[x] > 0.0 ? psi(g[x]) : 0.0, cy = g[inc.vertex] > 0.0 ? psi(g[inc.vertex]) : 0.0;
            flux += inc.conductance * 0.5 * (cx + cy) * std::abs(u[inc.vertex] - u[x]);
        }
        if (!inner) continue;
        res += space.mass()[x] * r[x] * r[x];
        flux /= space.mass()[x];
        scale += space.mass()[x] * flux * flux;
    }
    res = scale > 0.0 ? std::sqrt(res / scale) : std::sqrt(res);
    if (res > residual_tol)
        throw InvalidArgument("cheng_yau_ratio: u is not p-harmonic on B_R (residual " + std::to_string(res) + ")");

    // |grad log u| on B_{R/2}; neighbours of B_{R/2} must be positive too
    VertexFunction logu = VertexFunction::Zero(space.vertex_count());
    for (Index x : half.members) {
        for (const auto& inc : space.neighbors(x)) {
            if (!(u[inc.vertex] > 0.0)) throw InvalidArgument("cheng_yau_ratio: u must be positive next to B_{R/2}");
            logu[inc.vertex] = std::log(u[inc.vertex]);
        }
        logu[x] = std::log(u[x]);
    }
    const VertexFunction glog = gradient_modulus(space, logu);
    EstimateReport rep;
    rep.estimate = "cheng_yau";
    rep.h = space.min_edge_length();
    rep.R = R;
    rep.p = p;
    rep.center = center;
    rep.window_size = half.members.size();
    for (Index x : half.members) rep.lhs = std::max(rep.lhs, glog[x]);
    const double Kminus = std::max(0.0, -space.curvature()->K);
    rep.rhs = (1.0 + R * std::sqrt(Kminus)) / R;
    ratio_of(rep);
    return rep;
}

VertexFunction gamma2_pointwise(const GraphSpace& space, const VertexFunction& u) {
    const Gamma2Terms t = gamma2_terms(space, u);
    return t.half_lap_gamma - t.gamma_lap;
}

std::vector<VertexFunction> cd_battery(const GraphSpace& space, std::uint64_t seed, std::size_t random_count) {
    const Index n = space.vertex_count();
    std::vector<VertexFunction> out;
    const auto& coords = space.coordinates();
    const bool have_coords = static_cast<Index>(coords.size()) == n;
    if (have_coords) {
        const int dim = space.dimension() >= 2 ? 2 : 1;
        for (int a = 0; a <= 3; ++a) {
            for (int b = 0; b + a <= 3; ++b) {
                if (a + b == 0 || (dim == 1 && b > 0)) continue;
                VertexFunction v(n);
                for (Index x = 0; x < n; ++x)
                    v[x] = std::pow(coords[static_cast<std::size_t>(x)][0], a) *
                           std::pow(coords[static_cast<std::size_t>(x)][1], b);
                normalize_sup(v);
                out.push_back(v);
            }
        }
    }
    if (space.interior_count() >= 1 && space.interior_count() <= 1200) {
        const EigenBasis basis = dirichlet_eigenbasis(space, std::min<Index>(6, space.interior_count()));
        for (Index c = 0; c < basis.size(); ++c) {
            VertexFunction v = basis.vectors.col(c);
            normalize_sup(v);
            out.push_back(v);
        }
    }
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < random_count; ++i) {
        VertexFunction v(n);
        switch (i % 3) {
            case 0:  // independent values
                for (Index x = 0; x < n; ++x) v[x] = 2.0 * uniform01(rng) - 1.0;
                break;
            case 1: {  // a few random plane waves (independent values without coordinates)
                if (have_coords) {
                    v.setZero();
                    for (int k = 0; k < 3; ++k) {
                        const double kx = 12.0 * uniform01(rng) - 6.0, ky = 12.0 * uniform01(rng) - 6.0;
                        const double ph = 6.283185307179586 * uniform01(rng), amp = uniform01(rng);
                        for (Index x = 0; x < n; ++x)
                            v[x] += amp * std::cos(kx * coords[static_cast<std::size_t>(x)][0] +
                                                   ky * coords[static_cast<std::size_t>(x)][1] + ph);
                    }
                } else {
                    for (Index x = 0; x < n; ++x) v[x] = uniform01(rng);
                }
                break;
            }
            default: {  // sparse spikes
                v.setZero();
                for (int k = 0; k < 3; ++k) {
                    const auto x = static_cast<Index>(uniform01(rng) * static_cast<double>(n)) % n;
                    v[x] += 2.0 * uniform01(rng) - 1.0;
                }
                break;
            }
        }
        normalize_sup(v);
        out.push_back(v);
    }
    return out;
}

CdCertificate cd_certify(const GraphSpace& space, double K_candidate, std::uint64_t seed, std::size_t random_count) {
    CdCertificate cert;
    cert.K = K_candidate;
    cert.space_hash = space.content_hash();
    cert.seed = seed;
    const double N = space.curvature() ? space.curvature()->N : std::numeric_limits<double>::infinity();
    const std::vector<VertexFunction> battery = cd_battery(space, seed, random_count);
    cert.functions_tested = battery.size();
    cert.worst_margin = std::numeric_limits<double>::infinity();
    cert.worst_relative = std::numeric_limits<double>::infinity();
    cert.certified = true;
    for (std::size_t i = 0; i < battery.size(); ++i) {
        const Gamma2Terms t = gamma2_terms(space, battery[i]);
        double worst = std::numeric_limits<double>::infinity();
        double scale = 0.0;
        for (Index x = 0; x < space.vertex_count(); ++x) {
            if (space.is_boundary(x)) continue;
            double v = t.half_lap_gamma[x] - t.gamma_lap[x] - K_candidate * t.gamma[x];
            if (std::isfinite(N)) v -= t.lap[x] * t.lap[x] / N;
            worst = std::min(worst, v);
            scale = std::max(scale, std::abs(t.half_lap_gamma[x]) + std::abs(t.gamma_lap[x]) +
                                        std::abs(K_candidate) * t.gamma[x]);
        }
        if (!std::isfinite(worst)) continue;
        const double rel = scale > 0.0 ? worst / scale : 0.0;
        if (worst < cert.worst_margin) {
            cert.worst_margin = worst;
            cert.worst_function = i;
        }
        cert.worst_relative = std::min(cert.worst_relative, rel);
        if (worst < -1e-10 * std::max(scale, 1e-300)) cert.certified = false;
    }
    if (!std::isfinite(cert.worst_margin)) {
        cert.worst_margin = 0.0;
        cert.worst_relative = 0.0;
    }
    return cert;
}

BochnerReport bochner_check(const GraphSpace& space, const std::vector<VertexFunction>& us,
                            const std::vector<VertexFunction>& phis, const CdCertificate& certificate) {
    require(space.curvature().has_value(), "bochner_check: curvature metadata must be declared");
    require(certificate.certified && certificate.space_hash == space.content_hash(),
            "bochner_check: curvature is not certified for this space");
    require(space.curvature()->K <= certificate.K, "bochner_check: declared K exceeds the certified K");
    const double K = space.curvature()->K;
    const double N = space.curvature()->N;
    BochnerReport rep;
    rep.min_value = std::numeric_limits<double>::infinity();
    rep.min_scaled = std::numeric_limits<double>::infinity();
    rep.passed = true;
    for (const auto& u : us) {
        const Gamma2Terms t = gamma2_terms(space, u);
        for (const auto& phi : phis) {
            const double v = gamma2_form(space, u, phi);
            const VertexFunction lap_phi = laplacian(space, phi);
            double scale = 0.0;
            for (Index x = 0; x < space.vertex_count(); ++x)
                scale += space.mass()[x] * (0.5 * std::abs(lap_phi[x]) * t.gamma[x] +
                                            phi[x] * (std::abs(t.gamma_lap[x]) + std::abs(K) * t.gamma[x] + t.lap[x] * t.lap[x] / N));
            ++rep.pairs;
            rep.min_value = std::min(rep.min_value, v);
            rep.min_scaled = std::min(rep.min_scaled, scale > 0.0 ? v / scale : 0.0);
            if (v < -1e-10 * scale) rep.passed = false;
        }
    }
    if (rep.pairs == 0) {
        rep.min_value = 0.0;
        rep.min_scaled = 0.0;
    }
    return rep;
}

RefinementTable refinement_study(std::vector<EstimateReport> rows, double factor) {
    require(rows.size() >= 3, "refinement_study needs at least 3 levels");
    require(factor >= 1.0, "refinement factor must be >= 1");
    RefinementTable t;
    t.factor = factor;
    bool any = false;
    for (const auto& r : rows) {
        if (!r.defined || r.ratio <= 0.0) continue;
        if (!any) {
            t.min_ratio = t.max_ratio = r.ratio;
            any = true;
        }
        t.min_ratio = std::min(t.min_ratio, r.ratio);
        t.max_ratio = std::max(t.max_ratio, r.ratio);
    }
    if (!any) {
        t.verdict = "excluded";
    } else {
        t.spread = t.max_ratio / t.min_ratio;
        t.verdict = t.spread <= factor ? "bounded" : "unbounded";
        const EstimateReport& a = rows[rows.size() - 2];
        const EstimateReport& b = rows.back();
        if (b.ratio > 0.0) t.finest_change = std::abs(b.ratio - a.ratio) / b.ratio;
    }
    for (auto& r : rows) r.verdict = (!r.defined || r.ratio <= 0.0) ? "excluded" : t.verdict;
    t.rows = std::move(rows);
    return t;
}

VertexFunction radial_p_harmonic(const GraphSpace& space, double p) {
    require(p > 1.0, "radial p-harmonic needs p > 1");
    const auto& coords = space.coordinates();
    require(static_cast<Index>(coords.size()) == space.vertex_count(), "radial p-harmonic needs vertex coordinates");
    VertexFunction u(space.vertex_count());
    const double beta = (p - 2.0) / (p - 1.0);
    for (Index x = 0; x < u.size(); ++x) {
        const double r = std::hypot(coords[static_cast<std::size_t>(x)][0], coords[static_cast<std::size_t>(x)][1]);
        require(r > 0.0, "radial p-harmonic is singular at the origin");
        u[x] = p == 2.0 ? std::log(r) : std::pow(r, beta);
    }
    return u;
}

}  // namespace quasilin
