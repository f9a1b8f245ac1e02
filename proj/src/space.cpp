#include "quasilin/space.hpp"

#include "quasilin/conductivity.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <queue>
#include <sstream>
#include <tuple>

namespace quasilin {

namespace {

std::size_t sz(Index i) { return static_cast<std::size_t>(i); }

void require(bool ok, const std::string& what) {
    if (!ok) throw InvalidArgument(what);
}

}  // namespace

GraphSpace::GraphSpace(VertexFunction mass, std::vector<Edge> edges, std::vector<bool> boundary)
    : mass_(std::move(mass)), edges_(std::move(edges)), boundary_(std::move(boundary)) {
    const Index n = mass_.size();
    require(n > 0, "graph needs at least one vertex");
    require(static_cast<Index>(boundary_.size()) == n, "boundary marking length differs from vertex count");
    for (Index x = 0; x < n; ++x) {
        require(std::isfinite(mass_[x]) && mass_[x] > 0.0, "vertex mass must be positive and finite");
    }

    std::vector<std::vector<Incidence>> lists(sz(n));
    for (std::size_t e = 0; e < edges_.size(); ++e) {
        const Edge& ed = edges_[e];
        require(ed.a >= 0 && ed.a < n && ed.b >= 0 && ed.b < n, "edge endpoint out of range");
        require(ed.a != ed.b, "self loops are not allowed");
        require(std::isfinite(ed.conductance) && ed.conductance > 0.0, "edge conductance must be positive");
        require(std::isfinite(ed.length) && ed.length > 0.0, "edge length must be positive");
        lists[sz(ed.a)].push_back({ed.b, static_cast<Index>(e), ed.conductance, ed.length});
        lists[sz(ed.b)].push_back({ed.a, static_cast<Index>(e), ed.conductance, ed.length});
    }
    offsets_.assign(sz(n) + 1, 0);
    for (Index x = 0; x < n; ++x) {
        auto& l = lists[sz(x)];
        std::sort(l.begin(), l.end(), [](const Incidence& p, const Incidence& q) { return p.vertex < q.vertex; });
        for (std::size_t k = 1; k < l.size(); ++k) {
            require(l[k].vertex != l[k - 1].vertex, "duplicate edge");
        }
        offsets_[sz(x) + 1] = offsets_[sz(x)] + static_cast<Index>(l.size());
        adjacency_.insert(adjacency_.end(), l.begin(), l.end());
    }

    // connectivity
    std::vector<char> seen(sz(n), 0);
    std::vector<Index> stack{0};
    seen[0] = 1;
    Index reached = 1;
    while (!stack.empty()) {
        const Index x = stack.back();
        stack.pop_back();
        for (const auto& inc : neighbors(x)) {
            if (!seen[sz(inc.vertex)]) {
                seen[sz(inc.vertex)] = 1;
                ++reached;
                stack.push_back(inc.vertex);
            }
        }
    }
    require(reached == n, "graph is not connected");

    slot_.assign(sz(n), -1);
    for (Index x = 0; x < n; ++x) {
        if (!boundary_[sz(x)]) {
            slot_[sz(x)] = static_cast<Index>(interior_.size());
            interior_.push_back(x);
        }
    }
}

std::span<const Incidence> GraphSpace::neighbors(Index x) const {
    const auto begin = offsets_[sz(x)];
    const auto end = offsets_[sz(x) + 1];
    return {adjacency_.data() + begin, static_cast<std::size_t>(end - begin)};
}

void GraphSpace::set_coordinates(std::vector<std::array<double, 2>> coords) {
    require(coords.empty() || static_cast<Index>(coords.size()) == vertex_count(),
            "coordinate count differs from vertex count");
    coords_ = std::move(coords);
}

double GraphSpace::min_edge_length() const {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& e : edges_) best = std::min(best, e.length);
    return best;
}

std::uint64_t GraphSpace::content_hash() const {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const void* data, std::size_t bytes) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < bytes; ++i) {
            h ^= p[i];
            h *= 1099511628211ull;
        }
    };
    const Index n = vertex_count();
    mix(&n, sizeof n);
    for (Index x = 0; x < n; ++x) {
        const double m = mass_[x];
        const char b = boundary_[sz(x)] ? 1 : 0;
        mix(&m, sizeof m);
        mix(&b, 1);
    }
    for (const auto& e : edges_) {
        mix(&e.a, sizeof e.a);
        mix(&e.b, sizeof e.b);
        mix(&e.conductance, sizeof e.conductance);
        mix(&e.length, sizeof e.length);
    }
    return h;
}

// ---------------------------------------------------------------------------
// Builders

GraphSpace make_weighted_interval(Index n, double h, const std::function<double(double)>& potential,
                                  CellPolicy policy) {
    require(n >= 2, "interval needs at least two vertices");
    require(std::isfinite(h) && h > 0.0, "spacing h must be positive");
    VertexFunction mass(n);
    std::vector<Edge> edges;
    std::vector<bool> boundary(sz(n), false);
    std::vector<std::array<double, 2>> coords(sz(n));
    auto weight = [&](double x) { return potential ? std::exp(-potential(x)) : 1.0; };
    for (Index i = 0; i < n; ++i) {
        const double x = static_cast<double>(i) * h;
        const bool end = (i == 0 || i == n - 1);
        const double cell = (policy == CellPolicy::trapezoid && end) ? 0.5 * h : h;
        mass[i] = cell * weight(x);
        boundary[sz(i)] = end;
        coords[sz(i)] = {x, 0.0};
        if (i + 1 < n) edges.push_back({i, i + 1, weight(x + 0.5 * h) / h, h});
    }
    GraphSpace space(std::move(mass), std::move(edges), std::move(boundary));
    space.set_coordinates(std::move(coords));
    space.set_dimension(1);
    return space;
}

GraphSpace make_path(Index n, double h, CellPolicy policy) {
    return make_weighted_interval(n, h, {}, policy);
}

GraphSpace make_cycle(Index n, double h) {
    require(n >= 3, "cycle needs at least three vertices");
    require(std::isfinite(h) && h > 0.0, "spacing h must be positive");
    VertexFunction mass = VertexFunction::Constant(n, h);
    std::vector<Edge> edges;
    std::vector<std::array<double, 2>> coords(sz(n));
    const double pi = std::acos(-1.0);
    const double radius = static_cast<double>(n) * h / (2.0 * pi);
    for (Index i = 0; i < n; ++i) {
        const Index j = (i + 1) % n;
        edges.push_back({std::min(i, j), std::max(i, j), 1.0 / h, h});
        const double angle = 2.0 * pi * static_cast<double>(i) / static_cast<double>(n);
        coords[sz(i)] = {radius * std::cos(angle), radius * std::sin(angle)};
    }
    GraphSpace space(std::move(mass), std::move(edges), std::vector<bool>(sz(n), false));
    space.set_coordinates(std::move(coords));
    space.set_dimension(1);
    return space;
}

GraphSpace make_grid2d(Index nx, Index ny, double h, CellPolicy policy) {
    require(nx >= 2 && ny >= 2, "grid2d needs at least 2 points per direction");
    require(std::isfinite(h) && h > 0.0, "spacing h must be positive");
    const Index n = nx * ny;
    auto id = [nx](Index i, Index j) { return j * nx + i; };
    const bool trap = policy == CellPolicy::trapezoid;
    VertexFunction mass(n);
    std::vector<bool> boundary(sz(n), false);
    std::vector<std::array<double, 2>> coords(sz(n));
    std::vector<Edge> edges;
    for (Index j = 0; j < ny; ++j) {
        for (Index i = 0; i < nx; ++i) {
            const bool xb = (i == 0 || i == nx - 1);
            const bool yb = (j == 0 || j == ny - 1);
            double cell = h * h;
            if (trap && xb) cell *= 0.5;
            if (trap && yb) cell *= 0.5;
            mass[id(i, j)] = cell;
            boundary[sz(id(i, j))] = xb || yb;
            coords[sz(id(i, j))] = {static_cast<double>(i) * h, static_cast<double>(j) * h};
            // w = h^(dim-2) = 1; halved along boundary lines
            if (i + 1 < nx) edges.push_back({id(i, j), id(i + 1, j), (trap && yb) ? 0.5 : 1.0, h});
            if (j + 1 < ny) edges.push_back({id(i, j), id(i, j + 1), (trap && xb) ? 0.5 : 1.0, h});
        }
    }
    GraphSpace space(std::move(mass), std::move(edges), std::move(boundary));
    space.set_coordinates(std::move(coords));
    space.set_dimension(2);
    return space;
}

GraphSpace make_annulus2d(double r_in, double r_out, double h) {
    require(std::isfinite(h) && h > 0.0, "spacing h must be positive");
    require(r_in >= 0.0 && r_out > r_in, "annulus needs 0 <= r_in < r_out");
    const auto K = static_cast<Index>(std::floor(r_out / h + 1e-9));
    const Index side = 2 * K + 1;
    const double slack = 1e-12 * r_out;
    auto inside = [&](Index i, Index j) {
        if (i < -K || i > K || j < -K || j > K) return false;
        const double r = std::hypot(static_cast<double>(i) * h, static_cast<double>(j) * h);
        return r >= r_in - slack && r <= r_out + slack;
    };
    std::vector<Index> label(sz(side * side), -1);
    auto key = [&](Index i, Index j) { return sz((j + K) * side + (i + K)); };
    std::vector<std::array<Index, 2>> points;
    for (Index j = -K; j <= K; ++j) {
        for (Index i = -K; i <= K; ++i) {
            if (inside(i, j)) {
                label[key(i, j)] = static_cast<Index>(points.size());
                points.push_back({i, j});
            }
        }
    }
    const std::array<std::array<Index, 2>, 4> steps{{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};
    const Index n = static_cast<Index>(points.size());
    std::vector<char> full(sz(n), 1);
    for (Index v = 0; v < n; ++v) {
        for (const auto& s : steps) {
            if (!inside(points[sz(v)][0] + s[0], points[sz(v)][1] + s[1])) full[sz(v)] = 0;
        }
    }
    std::vector<bool> boundary(sz(n), false);
    for (Index v = 0; v < n; ++v) {
        bool deep = full[sz(v)] != 0;
        for (const auto& s : steps) {
            if (!deep) break;
            const Index w = label[key(points[sz(v)][0] + s[0], points[sz(v)][1] + s[1])];
            deep = full[sz(w)] != 0;
        }
        boundary[sz(v)] = !deep;
    }
    std::vector<Edge> edges;
    std::vector<std::array<double, 2>> coords(sz(n));
    for (Index v = 0; v < n; ++v) {
        const auto [i, j] = points[sz(v)];
        coords[sz(v)] = {static_cast<double>(i) * h, static_cast<double>(j) * h};
        if (inside(i + 1, j)) edges.push_back({v, label[key(i + 1, j)], 1.0, h});
        if (inside(i, j + 1)) edges.push_back({v, label[key(i, j + 1)], 1.0, h});
    }
    require(std::count(boundary.begin(), boundary.end(), false) > 0, "annulus too thin for spacing h");
    GraphSpace space(VertexFunction::Constant(n, h * h), std::move(edges), std::move(boundary));
    space.set_coordinates(std::move(coords));
    space.set_dimension(2);
    return space;
}

GraphSpace build_space(const DomainSpec& spec) {
    if (spec.kind == "path") return make_path(spec.n, spec.h, spec.policy);
    if (spec.kind == "cycle") return make_cycle(spec.n, spec.h);
    if (spec.kind == "grid2d") return make_grid2d(spec.nx, spec.ny, spec.h, spec.policy);
    if (spec.kind == "annulus2d") return make_annulus2d(spec.r_in, spec.r_out, spec.h);
    if (spec.kind == "weighted_interval") {
        require(static_cast<bool>(spec.potential), "weighted_interval needs a potential");
        return make_weighted_interval(spec.n, spec.h, spec.potential, spec.policy);
    }
    throw InvalidArgument("unknown domain kind '" + spec.kind + "'");
}

// ---------------------------------------------------------------------------
// Graph file format
//
//   vertices N
//   v <id> <mass> <boundary 0|1> [x y]
//   e <id1> <id2> <conductance> <length>
//   curvature <K> <N|inf>
//
// '#' starts a comment.

GraphSpace read_graph(std::istream& in) {
    std::string line;
    Index n = -1;
    VertexFunction mass;
    std::vector<bool> boundary;
    std::vector<char> defined;
    std::vector<std::array<double, 2>> coords;
    bool have_coords = false;
    std::vector<Edge> edges;
    std::optional<CurvatureMeta> curvature;
    int lineno = 0;
    auto fail = [&lineno](const std::string& what) {
        throw InvalidArgument("graph file line " + std::to_string(lineno) + ": " + what);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag)) continue;
        if (tag == "vertices") {
            if (n >= 0) fail("duplicate 'vertices' header");
            if (!(ls >> n) || n <= 0) fail("expected positive vertex count");
            mass = VertexFunction::Zero(n);
            boundary.assign(sz(n), false);
            defined.assign(sz(n), 0);
            coords.assign(sz(n), {0.0, 0.0});
        } else if (tag == "v") {
            if (n < 0) fail("'v' line before 'vertices' header");
            Index id;
            double m;
            int b;
            if (!(ls >> id >> m >> b)) fail("expected: v <id> <mass> <boundary>");
            if (id < 0 || id >= n) fail("vertex id out of range");
            if (b != 0 && b != 1) fail("boundary flag must be 0 or 1");
            if (defined[sz(id)]) fail("vertex defined twice");
            defined[sz(id)] = 1;
            mass[id] = m;
            boundary[sz(id)] = b == 1;
            double x, y;
            if (ls >> x >> y) {
                coords[sz(id)] = {x, y};
                have_coords = true;
            }
        } else if (tag == "e") {
            Edge e;
            if (!(ls >> e.a >> e.b >> e.conductance >> e.length)) {
                fail("expected: e <id1> <id2> <conductance> <length>");
            }
            if (e.a > e.b) std::swap(e.a, e.b);
            edges.push_back(e);
        } else if (tag == "curvature") {
            CurvatureMeta meta;
            std::string N;
            if (!(ls >> meta.K >> N)) fail("expected: curvature <K> <N>");
            meta.N = (N == "inf") ? std::numeric_limits<double>::infinity() : std::stod(N);
            curvature = meta;
        } else {
            fail("unknown record '" + tag + "'");
        }
    }
    if (n < 0) throw InvalidArgument("graph file has no 'vertices' header");
    for (Index x = 0; x < n; ++x) {
        if (!defined[sz(x)]) throw InvalidArgument("vertex " + std::to_string(x) + " never defined");
    }
    GraphSpace space(std::move(mass), std::move(edges), std::move(boundary));
    if (have_coords) space.set_coordinates(std::move(coords));
    if (curvature) space.set_curvature(*curvature);
    return space;
}

GraphSpace read_graph_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open graph file '" + path + "'");
    return read_graph(in);
}

void write_graph(std::ostream& out, const GraphSpace& space) {
    const auto old_precision = out.precision(17);
    out << "# quasilin graph\n";
    out << "vertices " << space.vertex_count() << '\n';
    const bool coords = !space.coordinates().empty();
    for (Index x = 0; x < space.vertex_count(); ++x) {
        out << "v " << x << ' ' << space.mass()[x] << ' ' << (space.is_boundary(x) ? 1 : 0);
        if (coords) out << ' ' << space.coordinates()[sz(x)][0] << ' ' << space.coordinates()[sz(x)][1];
        out << '\n';
    }
    for (const auto& e : space.edges()) {
        out << "e " << e.a << ' ' << e.b << ' ' << e.conductance << ' ' << e.length << '\n';
    }
    if (const auto& c = space.curvature()) {
        out << "curvature " << c->K << ' ';
        if (std::isinf(c->N)) out << "inf"; else out << c->N;
        out << '\n';
    }
    out.precision(old_precision);
}

// ---------------------------------------------------------------------------
// Calculus

VertexFunction gradient_modulus(const GraphSpace& space, const VertexFunction& u) {
    const Index n = space.vertex_count();
    VertexFunction g(n);
    for (Index x = 0; x < n; ++x) {
        double acc = 0.0;
        for (const auto& inc : space.neighbors(x)) {
            const double d = u[inc.vertex] - u[x];
            acc += inc.conductance * d * d;
        }
        g[x] = std::sqrt(acc / (2.0 * space.mass()[x]));
    }
    return g;
}

EdgeField gradient(const GraphSpace& space, const VertexFunction& u) {
    EdgeField F{Eigen::VectorXd(space.edge_count())};
    for (Index e = 0; e < space.edge_count(); ++e) {
        const auto& ed = space.edges()[sz(e)];
        F.values[e] = u[ed.b] - u[ed.a];
    }
    return F;
}

VertexFunction divergence(const GraphSpace& space, const EdgeField& F) {
    const Index n = space.vertex_count();
    VertexFunction out(n);
    for (Index x = 0; x < n; ++x) {
        double acc = 0.0;
        for (const auto& inc : space.neighbors(x)) acc += inc.conductance * F.at(space, inc.edge, x);
        out[x] = acc / space.mass()[x];
    }
    return out;
}

VertexFunction laplacian(const GraphSpace& space, const VertexFunction& u) {
    const Index n = space.vertex_count();
    VertexFunction out(n);
    for (Index x = 0; x < n; ++x) {
        double acc = 0.0;
        for (const auto& inc : space.neighbors(x)) acc += inc.conductance * (u[inc.vertex] - u[x]);
        out[x] = acc / space.mass()[x];
    }
    return out;
}

VertexFunction weighted_div(const GraphSpace& space, const VertexFunction& coef, const VertexFunction& u) {
    const Index n = space.vertex_count();
    VertexFunction out(n);
    for (Index x = 0; x < n; ++x) {
        double acc = 0.0;
        for (const auto& inc : space.neighbors(x)) {
            const double d = u[inc.vertex] - u[x];
            if (d != 0.0) acc += inc.conductance * 0.5 * (coef[x] + coef[inc.vertex]) * d;
        }
        out[x] = acc / space.mass()[x];
    }
    return out;
}

VertexFunction quasilinear_div(const GraphSpace& space, const Conductivity& psi, const VertexFunction& u,
                               const VertexFunction* a) {
    const Index n = space.vertex_count();
    require(u.size() == n, "vertex function has wrong length");
    require(u.allFinite(), "vertex function contains NaN or inf");
    if (a) {
        require(a->size() == n, "coefficient a has wrong length");
        require((a->array() > 0.0).all(), "coefficient a must be strictly positive");
    }
    const VertexFunction g = gradient_modulus(space, u);
    VertexFunction coef(n);
    for (Index x = 0; x < n; ++x) {
        // psi_x only ever multiplies slopes of edges at x, all of which vanish when g_x = 0
        coef[x] = g[x] > 0.0 ? psi(g[x]) : 0.0;
        if (a) coef[x] *= (*a)[x];
    }
    return weighted_div(space, coef, u);
}

VertexFunction carre_du_champ(const GraphSpace& space, const VertexFunction& u, const VertexFunction& v) {
    const Index n = space.vertex_count();
    VertexFunction out(n);
    for (Index x = 0; x < n; ++x) {
        double acc = 0.0;
        for (const auto& inc : space.neighbors(x)) {
            acc += inc.conductance * (u[inc.vertex] - u[x]) * (v[inc.vertex] - v[x]);
        }
        out[x] = acc / (2.0 * space.mass()[x]);
    }
    return out;
}

double gamma2_form(const GraphSpace& space, const VertexFunction& u, const VertexFunction& phi) {
    const auto& meta = space.curvature();
    if (!meta) throw InvalidArgument("gamma2_form needs declared curvature metadata (K, N)");
    const Index n = space.vertex_count();
    require(u.size() == n && phi.size() == n, "vertex function has wrong length");
    for (Index x = 0; x < n; ++x) {
        require(phi[x] >= 0.0, "test function phi must be nonnegative");
        require(!space.is_boundary(x) || phi[x] == 0.0, "test function phi must vanish on the boundary");
    }
    const VertexFunction lap_u = laplacian(space, u);
    const VertexFunction lap_phi = laplacian(space, phi);
    const VertexFunction gam = carre_du_champ(space, u, u);
    const VertexFunction gam_lap = carre_du_champ(space, u, lap_u);
    const bool finite_N = std::isfinite(meta->N);
    double lhs = 0.0;
    double rhs = 0.0;
    for (Index x = 0; x < n; ++x) {
        const double m = space.mass()[x];
        lhs += 0.5 * m * lap_phi[x] * gam[x];
        double pointwise = gam_lap[x] + meta->K * gam[x];
        if (finite_N) pointwise += lap_u[x] * lap_u[x] / meta->N;
        rhs += m * phi[x] * pointwise;
    }
    return lhs - rhs;
}

Ball ball(const GraphSpace& space, Index center, double radius) {
    require(center >= 0 && center < space.vertex_count(), "unknown vertex id " + std::to_string(center));
    require(radius > 0.0, "ball radius must be positive");
    const Index n = space.vertex_count();
    Ball out;
    out.center = center;
    out.radius = radius;
    out.distance = VertexFunction::Constant(n, std::numeric_limits<double>::infinity());
    using Item = std::pair<double, Index>;  // (distance, id): ties broken by vertex id
    std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
    out.distance[center] = 0.0;
    queue.push({0.0, center});
    std::vector<char> done(sz(n), 0);
    while (!queue.empty()) {
        const auto [d, x] = queue.top();
        queue.pop();
        if (done[sz(x)]) continue;
        done[sz(x)] = 1;
        for (const auto& inc : space.neighbors(x)) {
            const double nd = d + inc.length;
            if (nd < out.distance[inc.vertex]) {
                out.distance[inc.vertex] = nd;
                queue.push({nd, inc.vertex});
            }
        }
    }
    // relative slack absorbs rounding in sums of equal edge lengths
    const double cutoff = radius * (1.0 + 1e-12);
    for (Index x = 0; x < n; ++x) {
        if (out.distance[x] <= cutoff) out.members.push_back(x);
    }
    return out;
}

double ball_average(const GraphSpace& space, std::span<const Index> members, const VertexFunction& v) {
    require(!members.empty(), "average over an empty vertex set");
    // deviations from a reference value, so the average of a constant is exact
    const double ref = v[members.front()];
    double mass = 0.0;
    double acc = 0.0;
    for (Index x : members) {
        mass += space.mass()[x];
        acc += space.mass()[x] * (v[x] - ref);
    }
    return ref + acc / mass;
}

}  // namespace quasilin
