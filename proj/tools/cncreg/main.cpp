#include <cstdio>
#include <exception>
#include <functional>
#include <string>

#include <CLI11.hpp>

#include "cncreg/errors.hpp"
#include "context.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    bool force = false;
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* sub, CommonArgs& args) {
    sub->add_option("--config", args.config_path, "run configuration file")
        ->required();
    sub->add_flag("--force", args.force, "overwrite existing artifacts");
    sub->add_option("--seed", args.seed, "override the configured global seed");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"convex-nonconvex regularization experiments"};
    app.require_subcommand(1);

    CommonArgs args;
    using Runner = std::function<int(const cncreg::cli::Context&)>;
    Runner runner;

    const std::pair<const char*, std::pair<const char*, Runner>> cmds[] = {
        {"phantom",
         {"generate train/test phantom splits", cncreg::cli::cmd_phantom}},
        {"simulate",
         {"simulate measurements and analytic reconstructions",
          cncreg::cli::cmd_simulate}},
        {"train", {"train the learned regularizer", cncreg::cli::cmd_train}},
        {"reconstruct",
         {"reconstruct the test split with one method",
          cncreg::cli::cmd_reconstruct}},
        {"theory-check",
         {"run the theoretical invariant suite", cncreg::cli::cmd_theory_check}},
        {"evaluate",
         {"merge reconstruction reports into a summary table",
          cncreg::cli::cmd_evaluate}},
    };
    for (const auto& [name, entry] : cmds) {
        CLI::App* sub = app.add_subcommand(name, entry.first);
        add_common(sub, args);
        sub->callback([&runner, run = entry.second]() { runner = run; });
    }

    CLI11_PARSE(app, argc, argv);

    try {
        const cncreg::cli::Context ctx =
            cncreg::cli::make_context(args.config_path, args.seed, args.force);
        return runner(ctx);
    } catch (const cncreg::IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const cncreg::ValueError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
