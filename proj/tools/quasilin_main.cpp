#include "commands.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>

#include <iostream>

int main(int argc, char** argv) {
    using namespace quasilin;
    CLI::App app{"Quasilinear elliptic solver on weighted graphs"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed;
    int threads = 1;
    auto common = [&](CLI::App* sub, bool config_required) {
        auto* opt = sub->add_option("--config", config_path, "experiment config file");
        if (config_required) opt->required();
        sub->add_option("--out", out_dir, "output directory")->capture_default_str();
        sub->add_option("--seed", seed, "seed for randomized batteries (default: config seed, else 0)");
        sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    };

    auto* solve = app.add_subcommand("solve", "solve the Dirichlet problem");
    common(solve, true);
    auto* eigen = app.add_subcommand("eigen", "Dirichlet eigenbasis");
    common(eigen, false);
    std::string space_spec;
    std::optional<Index> k;
    eigen->add_option("--space", space_spec, "graph file or shorthand (path:9, grid2d:17:17)");
    eigen->add_option("--k", k, "number of eigenpairs");
    auto* cont = app.add_subcommand("continuation", "M / delta / f ladders or the full pipeline");
    common(cont, true);
    auto* verify = app.add_subcommand("verify", "regularity estimates and curvature checks");
    common(verify, true);
    auto* check = app.add_subcommand("check-psi", "conductivity hypotheses and inequality suites");
    common(check, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        Eigen::setNbThreads(threads);
        if (eigen->parsed() && !space_spec.empty()) {
            if (!k) throw InvalidArgument("eigen --space needs --k");
            return cli::cmd_eigen_space(space_spec, *k, out_dir);
        }
        if (config_path.empty()) throw InvalidArgument("--config is required");
        cli::RunContext ctx{load_config(config_path), out_dir, 0};
        ctx.seed = seed ? *seed : ctx.config.seed;
        ctx.config.seed = ctx.seed;
        if (solve->parsed()) return cli::cmd_solve(ctx);
        if (eigen->parsed()) return cli::cmd_eigen(ctx, k);
        if (cont->parsed()) return cli::cmd_continuation(ctx);
        if (verify->parsed()) return cli::cmd_verify(ctx);
        if (check->parsed()) return cli::cmd_check_psi(ctx);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
