#pragma once

#include "quasilin/types.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace quasilin {

class Conductivity;

struct Edge {
    Index a = 0;
    Index b = 0;
    double conductance = 1.0;  // w_ab
    double length = 1.0;       // l_ab
};

/// Declared lower Ricci bound K and upper dimension N (N may be +inf).
struct CurvatureMeta {
    double K = 0.0;
    double N = std::numeric_limits<double>::infinity();
};

/// One entry of a vertex's adjacency list.
struct Incidence {
    Index vertex;
    Index edge;
    double conductance;
    double length;
};

/// Weighted graph with vertex measure and Dirichlet marking: the discrete
/// metric-measure space every other module works on.
///
/// Immutable after construction. Adjacency lists are sorted by neighbour id,
/// which fixes the summation order of every reduction.
class GraphSpace {
public:
    GraphSpace(VertexFunction mass, std::vector<Edge> edges, std::vector<bool> boundary);

    Index vertex_count() const { return mass_.size(); }
    Index edge_count() const { return static_cast<Index>(edges_.size()); }

    const VertexFunction& mass() const { return mass_; }
    const std::vector<Edge>& edges() const { return edges_; }
    std::span<const Incidence> neighbors(Index x) const;

    bool is_boundary(Index x) const { return boundary_[static_cast<std::size_t>(x)]; }
    const std::vector<bool>& boundary() const { return boundary_; }
    /// Interior (non-Dirichlet) vertices in increasing id order.
    const std::vector<Index>& interior() const { return interior_; }
    /// Position of a vertex in interior(), or -1 for boundary vertices.
    Index interior_slot(Index x) const { return slot_[static_cast<std::size_t>(x)]; }
    Index interior_count() const { return static_cast<Index>(interior_.size()); }

    const std::optional<CurvatureMeta>& curvature() const { return curvature_; }
    void set_curvature(CurvatureMeta meta) { curvature_ = meta; }

    /// Builder coordinates (empty when the space was read from a file without them).
    const std::vector<std::array<double, 2>>& coordinates() const { return coords_; }
    void set_coordinates(std::vector<std::array<double, 2>> coords);
    int dimension() const { return dim_; }
    void set_dimension(int dim) { dim_ = dim; }

    double min_edge_length() const;
    /// Stable FNV-1a hash of the full description, used to key basis caches.
    std::uint64_t content_hash() const;

private:
    VertexFunction mass_;
    std::vector<Edge> edges_;
    std::vector<bool> boundary_;
    std::vector<Index> offsets_;
    std::vector<Incidence> adjacency_;
    std::vector<Index> interior_;
    std::vector<Index> slot_;
    std::optional<CurvatureMeta> curvature_;
    std::vector<std::array<double, 2>> coords_;
    int dim_ = 0;
};

/// Antisymmetric field on oriented edges. `values[e]` is F along edges()[e]
/// oriented a -> b; the reverse orientation reads the negated value.
struct EdgeField {
    Eigen::VectorXd values;

    double at(const GraphSpace& space, Index e, Index from) const {
        return space.edges()[static_cast<std::size_t>(e)].a == from ? values[e] : -values[e];
    }
};

struct Ball {
    Index center = 0;
    double radius = 0.0;
    std::vector<Index> members;  // sorted by vertex id
    VertexFunction distance;     // shortest-path distance from center (inf if unreachable)
};

// ---------------------------------------------------------------------------
// Builders

/// How boundary cells of lattice-like builders are weighted.
///   trapezoid: half/quarter cell masses at boundary vertices and half
///              conductance on edges running along the boundary, so the
///              gradient modulus of every affine function is exact at every
///              vertex.
///   full:      every vertex carries h^dim, every edge h^(dim-2).
enum class CellPolicy { trapezoid, full };

GraphSpace make_path(Index n, double h, CellPolicy policy = CellPolicy::trapezoid);
GraphSpace make_cycle(Index n, double h);
GraphSpace make_grid2d(Index nx, Index ny, double h, CellPolicy policy = CellPolicy::trapezoid);
/// Lattice points of {r_in <= |x| <= r_out}; the Dirichlet set is a two-layer
/// collar so that interior residuals only see complete stencils.
GraphSpace make_annulus2d(double r_in, double r_out, double h);
/// Path on [0, (n-1)h] with measure and conductance multiplied by exp(-V) at
/// cell centres / edge midpoints.
GraphSpace make_weighted_interval(Index n, double h, const std::function<double(double)>& potential,
                                  CellPolicy policy = CellPolicy::trapezoid);

struct DomainSpec {
    std::string kind;  // path | cycle | grid2d | annulus2d | weighted_interval
    Index n = 0;
    Index nx = 0;
    Index ny = 0;
    double h = 0.0;
    double r_in = 0.0;
    double r_out = 0.0;
    std::function<double(double)> potential;  // weighted_interval only
    CellPolicy policy = CellPolicy::trapezoid;
};

GraphSpace build_space(const DomainSpec& spec);

// ---------------------------------------------------------------------------
// Graph file format

GraphSpace read_graph(std::istream& in);
GraphSpace read_graph_file(const std::string& path);
void write_graph(std::ostream& out, const GraphSpace& space);

// ---------------------------------------------------------------------------
// First-order calculus

/// |grad u|(x) = sqrt( 1/(2 m_x) sum_y w_xy (u_y - u_x)^2 ).
VertexFunction gradient_modulus(const GraphSpace& space, const VertexFunction& u);
/// Edge differences u_b - u_a.
EdgeField gradient(const GraphSpace& space, const VertexFunction& u);
/// div F(x) = 1/m_x sum_y w_xy F_xy.
VertexFunction divergence(const GraphSpace& space, const EdgeField& F);
/// Delta u(x) = 1/m_x sum_y w_xy (u_y - u_x).
VertexFunction laplacian(const GraphSpace& space, const VertexFunction& u);

/// x -> 1/m_x sum_y w_xy * (a_x psi_x + a_y psi_y)/2 * (u_y - u_x), with
/// psi_x = Psi(|grad u|(x)). Edges with zero slope contribute exactly zero,
/// so a divergent Psi(0) never meets a finite factor.
VertexFunction quasilinear_div(const GraphSpace& space, const Conductivity& psi, const VertexFunction& u,
                               const VertexFunction* a = nullptr);

/// x -> 1/m_x sum_y w_xy (c_x + c_y)/2 (u_y - u_x) for a per-vertex coefficient c;
/// zero-slope edges are skipped so an infinite c_x never meets a zero slope.
VertexFunction weighted_div(const GraphSpace& space, const VertexFunction& coef, const VertexFunction& u);

/// Carré du champ Gamma(u, v)(x) = 1/(2 m_x) sum_y w_xy (u_y-u_x)(v_y-v_x).
VertexFunction carre_du_champ(const GraphSpace& space, const VertexFunction& u, const VertexFunction& v);

/// lhs - rhs of the discrete weak Bochner inequality with the declared (K, N):
///   1/2 sum m Delta(phi) Gamma(u) - sum m phi ((Delta u)^2/N + Gamma(u, Delta u) + K Gamma(u)).
/// N = inf drops the dimensional term. Throws if the space has no curvature metadata.
double gamma2_form(const GraphSpace& space, const VertexFunction& u, const VertexFunction& phi);

/// Closed metric ball {y : d(x, y) <= R}, d the shortest-path metric.
Ball ball(const GraphSpace& space, Index center, double radius);

/// m-weighted average of v over the given vertices.
double ball_average(const GraphSpace& space, std::span<const Index> members, const VertexFunction& v);

}  // namespace quasilin
