#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <utility>

#include "fwi/commands.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Acoustic full-waveform inversion toolkit: forward modeling, inversion, migration and misfit studies"};
    app.require_subcommand(1);

    std::string config_path, output_dir;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    bool quiet = false;
    app.add_option("--config", config_path, "experiment file")->required()->check(CLI::ExistingFile);
    app.add_option("--output-dir", output_dir, "overrides [output] dir");
    app.add_option("--seed", seed, "overrides [run] seed");
    app.add_option("--threads", threads, "overrides [run] threads")->check(CLI::NonNegativeNumber);
    app.add_flag("-q,--quiet", quiet, "no progress lines");
    const std::pair<const char*, const char*> commands[] = {
        {"forward", "model shot gathers"},
        {"invert", "L-BFGS inversion with the configured misfit"},
        {"rtm", "reverse time migration image"},
        {"lsrtm", "least-squares migration of Born data"},
        {"ma-solve", "Monge-Ampere transport between two densities"},
        {"sensitivity", "misfit against time shift of a double-Ricker trace"},
        {"noise", "W2 and L2 distance against noise piece count"},
        {"tomo", "turning-ray traveltimes and Herglotz inversion"},
    };
    for (const auto& [name, help] : commands) app.add_subcommand(name, help);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    std::exception_ptr error;
    try {
        auto cfg = fwi::cfg::Config::load(config_path);
        if (seed) cfg.set("run", "seed", std::to_string(*seed));
        if (threads) cfg.set("run", "threads", std::to_string(*threads));
        const auto ctx = fwi::cli::make_context(cfg, output_dir, quiet ? nullptr : &std::cout);
        fwi::cli::run(app.get_subcommands().front()->get_name(), cfg, ctx);
    } catch (const std::exception& e) {
        std::cerr << "fwi: " << e.what() << '\n';
        error = std::current_exception();
    }
    return fwi::cli::exit_code(error);
}
