#include "quasilin/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace quasilin {

using nlohmann::json;

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

json number_json(double v) {
    if (std::isfinite(v)) return v;
    return format_double(v);
}

namespace {

json numbers(const std::vector<double>& xs) {
    json arr = json::array();
    for (double x : xs) arr.push_back(number_json(x));
    return arr;
}

}  // namespace

json to_json(const SolveReport& r) {
    return json{{"method", r.method},
                {"psi", r.psi_name},
                {"converged", r.converged},
                {"iterations", r.iterations},
                {"residual", number_json(r.residual)},
                {"energy", number_json(r.energy)},
                {"message", r.message},
                {"residual_history", numbers(r.residual_history)},
                {"energy_history", numbers(r.energy_history)}};
}

json to_json(const ContinuationReport& r) {
    json rungs = json::array();
    for (const auto& g : r.rungs) {
        json s = to_json(g.solve);
        s.erase("residual_history");
        s.erase("energy_history");
        rungs.push_back(json{{"parameter", number_json(g.parameter)},
                             {"solve", s},
                             {"distance_prev", number_json(g.distance_prev)},
                             {"distance_oracle", number_json(g.distance_oracle)},
                             {"max_gradient", number_json(g.max_gradient)},
                             {"max_gradient_all", number_json(g.max_gradient_all)},
                             {"flux_l1", number_json(g.flux_l1)},
                             {"uniform_ratio", number_json(g.uniform_ratio)},
                             {"energy_regularized", number_json(g.energy_regularized)},
                             {"energy_true", number_json(g.energy_true)},
                             {"energy_gap", number_json(g.energy_gap)},
                             {"gradient_norm", number_json(g.gradient_norm)}});
    }
    json j{{"kind", r.kind},
           {"q", number_json(r.q)},
           {"rungs", rungs},
           {"solution_scale", number_json(r.solution_scale)},
           {"converged", r.converged},
           {"distances_decreasing", r.distances_decreasing},
           {"aborted", r.aborted},
           {"message", r.message}};
    if (r.oracle) {
        json o = to_json(*r.oracle);
        o.erase("residual_history");
        o.erase("energy_history");
        j["oracle"] = o;
    }
    return j;
}

json to_json(const FullSolveReport& r) {
    return json{{"solve", to_json(r.solve)},
                {"m_ladder", to_json(r.m_ladder)},
                {"delta_ladder", to_json(r.delta_ladder)},
                {"true_residual", number_json(r.true_residual)},
                {"certified", r.certified},
                {"linear_path", r.linear_path},
                {"message", r.message}};
}

json to_json(const EstimateReport& r) {
    return json{{"estimate", r.estimate},
                {"h", number_json(r.h)},
                {"R", number_json(r.R)},
                {"p", number_json(r.p)},
                {"lhs", number_json(r.lhs)},
                {"rhs", number_json(r.rhs)},
                {"ratio", number_json(r.ratio)},
                {"defined", r.defined},
                {"applicable", r.applicable},
                {"center", r.center},
                {"window_size", r.window_size},
                {"window_margin", number_json(r.window_margin)},
                {"verdict", r.verdict},
                {"note", r.note}};
}

json to_json(const RefinementTable& t) {
    json rows = json::array();
    for (const auto& r : t.rows) rows.push_back(to_json(r));
    return json{{"rows", rows},
                {"min_ratio", number_json(t.min_ratio)},
                {"max_ratio", number_json(t.max_ratio)},
                {"spread", number_json(t.spread)},
                {"finest_change", number_json(t.finest_change)},
                {"factor", number_json(t.factor)},
                {"verdict", t.verdict}};
}

json to_json(const CdCertificate& c) {
    char hash[24];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(c.space_hash));
    return json{{"K", number_json(c.K)},
                {"certified", c.certified},
                {"worst_margin", number_json(c.worst_margin)},
                {"worst_relative", number_json(c.worst_relative)},
                {"worst_function", c.worst_function},
                {"functions_tested", c.functions_tested},
                {"space_hash", hash},
                {"seed", c.seed}};
}

json to_json(const BochnerReport& b) {
    return json{{"min_value", number_json(b.min_value)},
                {"min_scaled", number_json(b.min_scaled)},
                {"pairs", b.pairs},
                {"passed", b.passed}};
}

json to_json(const InvariantReport& r) {
    return json{{"positivity", number_json(r.positivity)},
                {"ellipticity", number_json(r.ellipticity)},
                {"growth", number_json(r.growth)},
                {"ok", r.ok()}};
}

json to_json(const PsiBasicReport& r) {
    return json{{"item_i", number_json(r.item_i)},
                {"item_ii", number_json(r.item_ii)},
                {"item_iii", number_json(r.item_iii)},
                {"max_violation", number_json(r.max_violation())}};
}

json to_json(const PhiMReport& r) {
    return json{{"M", number_json(r.M)},
                {"convexity", number_json(r.convexity)},
                {"admissible_C", number_json(r.admissible_C)},
                {"coercive", number_json(r.coercive)},
                {"coercive_c", number_json(r.coercive_c)},
                {"upper", number_json(r.upper)},
                {"upper_C", number_json(r.upper_C)},
                {"ordering", number_json(r.ordering)},
                {"super_coercive", number_json(r.super_coercive)},
                {"limit", number_json(r.limit)},
                {"passed", r.passed()}};
}

json to_json(const PsiMeta& m) {
    json j{{"lambda", number_json(m.lambda)},
           {"Lambda", number_json(m.Lambda)},
           {"p", number_json(m.p)},
           {"nu", number_json(m.nu)},
           {"lambda_sampled", m.lambda_sampled}};
    j["c"] = m.c ? number_json(*m.c) : json(nullptr);
    return j;
}

void write_vertex_csv(std::ostream& out, const GraphSpace& space,
                      const std::vector<std::pair<std::string, VertexFunction>>& columns) {
    const bool xy = static_cast<Index>(space.coordinates().size()) == space.vertex_count();
    out << "vertex,x,y,boundary";
    for (const auto& c : columns) out << ',' << c.first;
    out << '\n';
    for (Index v = 0; v < space.vertex_count(); ++v) {
        out << v << ',' << (xy ? format_double(space.coordinates()[static_cast<std::size_t>(v)][0]) : "")
            << ',' << (xy ? format_double(space.coordinates()[static_cast<std::size_t>(v)][1]) : "") << ','
            << (space.is_boundary(v) ? 1 : 0);
        for (const auto& c : columns) out << ',' << format_double(c.second[v]);
        out << '\n';
    }
}

void write_estimate_csv(std::ostream& out, const std::vector<EstimateReport>& rows) {
    out << "estimate,h,R,p,lhs,rhs,ratio,verdict\n";
    for (const auto& r : rows) {
        out << r.estimate << ',' << format_double(r.h) << ',' << format_double(r.R) << ',' << format_double(r.p) << ','
            << format_double(r.lhs) << ',' << format_double(r.rhs) << ',' << format_double(r.ratio) << ','
            << r.verdict << '\n';
    }
}

void write_rungs_csv(std::ostream& out, const ContinuationReport& r) {
    out << "rung,parameter,iterations,converged,residual,distance_prev,distance_oracle,max_gradient,max_gradient_all,flux_l1,"
           "uniform_ratio,energy_regularized,energy_true,energy_gap,gradient_norm\n";
    for (std::size_t i = 0; i < r.rungs.size(); ++i) {
        const auto& g = r.rungs[i];
        out << i << ',' << format_double(g.parameter) << ',' << g.solve.iterations << ','
            << (g.solve.converged ? 1 : 0) << ',' << format_double(g.solve.residual) << ','
            << format_double(g.distance_prev) << ',' << format_double(g.distance_oracle) << ','
            << format_double(g.max_gradient) << ',' << format_double(g.max_gradient_all) << ','
            << format_double(g.flux_l1) << ','
            << format_double(g.uniform_ratio) << ',' << format_double(g.energy_regularized) << ','
            << format_double(g.energy_true) << ',' << format_double(g.energy_gap) << ','
            << format_double(g.gradient_norm) << '\n';
    }
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    out << text;
    if (!out) throw Error("write failed for '" + path + "'");
}

void write_json_file(const std::string& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

}  // namespace quasilin
