#include "selfprop/io.hpp"
#include "selfprop/pipeline.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

using namespace selfprop;

int main(int argc, char** argv)
{
    CLI::App app{"Drag minimization for a self-propelled rigid body in a viscous exterior flow"};
    app.require_subcommand(1, 1);

    std::string config_path, output_dir;
    int threads = -1;
    bool print_config = false;
    app.add_option("-c,--config", config_path, "Key/value run configuration")->check(CLI::ExistingFile);
    app.add_option("-o,--output-dir", output_dir, "Output directory (overrides config and SELFPROP_OUTPUT_DIR)");
    app.add_option("-j,--threads", threads, "Worker threads for independent solves")->check(CLI::NonNegativeNumber);
    app.add_flag("--print-config", print_config, "Print the effective configuration first");

    const std::vector<std::pair<std::string, std::string>> help{
        {"mesh", "Build (or load) the exterior mesh"},
        {"basis", "Propulsion basis and corrector matrix"},
        {"state", "Self-propelled steady state for the configured control"},
        {"linearize", "Linearized state with a finite-difference check"},
        {"adjoint", "Adjoint state, drag gradient and central-difference check"},
        {"optimize", "Projected-gradient drag minimization over the control ball"},
        {"oracle", "Whole-space spectral oracle sweeps"},
        {"verify", "Invariant suite on the configured fixture"}};
    for (const auto& [name, desc] : help)
        app.add_subcommand(name, desc)->fallthrough();

    CLI11_PARSE(app, argc, argv);
    const std::string cmd = app.get_subcommands().front()->get_name();

    RunConfig cfg;
    try {
        cfg = config_path.empty() ? parse_config("", std::filesystem::current_path().string()) : load_config(config_path);
        apply_env_overrides(cfg);
    } catch (const Error& e) {
        std::cerr << "error[" << error_code_name(e.code()) << "]: " << e.what() << "\n";
        return e.exit_status();
    }
    if (!output_dir.empty())
        cfg.output_dir = output_dir;
    if (threads >= 0)
        cfg.threads = threads;
    if (print_config)
        std::cout << echo_config(cfg);
    return run_command(cmd, cfg, std::cout);
}
