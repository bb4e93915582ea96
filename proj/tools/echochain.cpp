#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include <echochain/cli.hpp>

int main(int argc, char** argv) {
    using namespace echochain;
    CLI::App app{"echochain: resonant mode-chain simulations and diagnostics"};
    app.require_subcommand(1);

    std::string config;
    RunOptions ro;
    std::string out = "out";
    struct Entry {
        const char* name;
        const char* help;
        Command cmd;
    };
    const Entry commands[] = {
        {"wave", "shear-wave ODE, decay bound and inviscid exponent fit", Command::wave},
        {"simulate", "integrate the truncated mode chain", Command::simulate},
        {"echo-report", "chain run with per-interval echo and bootstrap records", Command::echo_report},
        {"sweep", "inflation over an eta sweep with the cube-root regression", Command::sweep},
        {"blowup", "inflation profile and Sobolev norm series", Command::blowup},
        {"check-coeffs", "coupling-coefficient integral tables", Command::check_coeffs},
    };
    Command chosen = Command::simulate;
    for (const auto& [name, help, cmd] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config, "TOML configuration file")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out, "output directory");
        sub->add_option("--jobs", ro.jobs, "worker threads for independent runs")->check(CLI::PositiveNumber);
        sub->add_option("--seed", ro.seed, "recorded in metadata; dynamics are deterministic");
        sub->callback([&chosen, cmd = cmd] { chosen = cmd; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    ro.out = out;

    try {
        const RunConfig rc = load_config(config, chosen);
        if (rc.params.theorem_range_exceeded)
            std::fprintf(stderr, "warning: c = %g exceeds 0.001, outside the range the estimates cover\n", rc.params.c);
        const CommandResult res = run_command(rc, ro);
        for (const auto& f : res.files) std::printf("wrote %s\n", f.string().c_str());
        if (!res.checks_passed) {
            std::fprintf(stderr, "check failed: see %s\n", res.files.back().string().c_str());
            return 4;
        }
        return 0;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "numerical failure: %s (estimate %g)\n", e.what(), e.estimate());
        return 3;
    } catch (const CheckFailure& e) {
        std::fprintf(stderr, "check failed: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
}
