#pragma once

#include "quasilin/continuation.hpp"
#include "quasilin/verify.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace quasilin {

/// Parse failure with a 1-based line number (0 when not tied to a line).
class ConfigError : public InvalidArgument {
public:
    ConfigError(const std::string& what, int line = 0);
    int line() const { return line_; }

private:
    int line_;
};

/// Parses the experiment config format into a JSON object:
///
///   # comment
///   key = "string" | 1.5 | true | [1, 2] | { kind = "p_power", p = 3 }
///   [table]
///   [table.sub]
///
/// Keys are bare words (letters, digits, '_' and '-'); duplicate keys are errors.
nlohmann::json parse_config(const std::string& text);
nlohmann::json parse_config_file(const std::string& path);

Conductivity make_conductivity(const nlohmann::json& spec, const std::string& base_dir = ".");

/// Field specs: constant{value} | bump{center, width, height} | affine{slope, offset}
/// | spike{vertex | at, height, base} | radial{p} | csv{path}.
VertexFunction make_field(const nlohmann::json& spec, const GraphSpace& space, const std::string& base_dir = ".");

GraphSpace make_space(const nlohmann::json& spec, const std::string& base_dir = ".");

struct ExperimentConfig {
    nlohmann::json raw;
    std::string base_dir = ".";
    std::uint64_t seed = 0;

    DirichletProblem problem() const;
    GraphSpace space() const;
    Conductivity psi() const;

    std::string method() const;  // galerkin | direct | full
    double tol() const;
    int max_iter() const;
    SolveStrategy strategy() const;

    const nlohmann::json& section(const std::string& name) const;  // empty object when absent
};

/// Reads, parses and validates the sections every command needs.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig config_from_text(const std::string& text, const std::string& base_dir = ".");

}  // namespace quasilin
