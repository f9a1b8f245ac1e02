#pragma once

#include "quasilin/config.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace quasilin::cli {

struct RunContext {
    ExperimentConfig config;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
};

// Exit codes: 0 success, 1 error (thrown), 2 certification or verification failure.
int cmd_solve(const RunContext& ctx);
int cmd_eigen(const RunContext& ctx, std::optional<Index> k_override);
/// `eigen --space SPEC --k K`: SPEC is a graph file or kind:args (path:9, grid2d:17:17).
int cmd_eigen_space(const std::string& space_spec, Index k, const std::string& out);
int cmd_continuation(const RunContext& ctx);
int cmd_verify(const RunContext& ctx);
int cmd_check_psi(const RunContext& ctx);

}  // namespace quasilin::cli
