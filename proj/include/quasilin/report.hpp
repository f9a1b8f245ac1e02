#pragma once

#include "quasilin/continuation.hpp"
#include "quasilin/verify.hpp"

#include <json.hpp>

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace quasilin {

/// %.17g; non-finite values print as inf, -inf, nan.
std::string format_double(double v);
/// Finite doubles as numbers, non-finite ones as strings.
nlohmann::json number_json(double v);

// Wall-clock time is deliberately absent from every serializer.
nlohmann::json to_json(const SolveReport& r);
nlohmann::json to_json(const ContinuationReport& r);
nlohmann::json to_json(const FullSolveReport& r);
nlohmann::json to_json(const EstimateReport& r);
nlohmann::json to_json(const RefinementTable& t);
nlohmann::json to_json(const CdCertificate& c);
nlohmann::json to_json(const BochnerReport& b);
nlohmann::json to_json(const InvariantReport& r);
nlohmann::json to_json(const PsiBasicReport& r);
nlohmann::json to_json(const PhiMReport& r);
nlohmann::json to_json(const PsiMeta& m);

/// vertex,x,y,boundary,<name>... with one row per vertex.
void write_vertex_csv(std::ostream& out, const GraphSpace& space,
                      const std::vector<std::pair<std::string, VertexFunction>>& columns);
/// estimate,h,R,p,lhs,rhs,ratio,verdict
void write_estimate_csv(std::ostream& out, const std::vector<EstimateReport>& rows);
/// One row per rung.
void write_rungs_csv(std::ostream& out, const ContinuationReport& r);

void write_text_file(const std::string& path, const std::string& text);
/// Pretty JSON with a trailing newline.
void write_json_file(const std::string& path, const nlohmann::json& j);

}  // namespace quasilin
