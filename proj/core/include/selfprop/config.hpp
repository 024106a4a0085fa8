#pragma once

#include "selfprop/trace.hpp"
#include "selfprop/types.hpp"

#include <string>
#include <vector>

namespace selfprop {

// Key/value run configuration. Text format: one `key = value` per line,
// `#` starts a comment, vectors are whitespace separated.
struct RunConfig {
    std::string body = "sphere.body";   // resolved against the config directory
    int gamma_tag = 1;
    TraceKind kind = TraceKind::tangential;
    RigidMotion motion{Vec3(0.05, 0, 0), Vec3::Zero()};
    double kappa = 0.1;
    double motion_bound = 0.05;
    double R_inf = 8.0;
    double h = 0.35;
    double min_dihedral = 3.0;
    double omega_threshold = 1e-8;

    double state_tol = 1e-9;
    int max_iter = 50;
    double solver_rtol = 1e-10;
    int direct_limit = 60000;

    double control_amplitude = 0.0;   // v_* for `state`: amplitude of the built-in field
    std::vector<double> fd_steps{1e-2, 1e-3, 1e-4};
    int fd_directions = 3;

    double opt_tol = 1e-5;
    int max_outer = 60;
    double armijo = 1e-4;
    double shrink = 0.5;
    int max_backtracks = 30;
    int random_probes = 8;
    int opt_memory = 8;
    unsigned seed = 1;

    int oracle_grid = 64;
    double oracle_box = 8.0;

    bool deterministic = true;
    std::string output_dir = "out";
    int threads = 0;

    std::string source;   // config path, empty for defaults
};

// Known keys, in echo order.
const std::vector<std::string>& config_keys();

// Parses config text; errors name the line and column (parse) or the field
// (validation). base_dir resolves relative paths.
RunConfig parse_config(const std::string& text, const std::string& base_dir = ".", const std::string& source = "");
RunConfig load_config(const std::string& path);
// SELFPROP_OUTPUT_DIR and SELFPROP_THREADS.
void apply_env_overrides(RunConfig& c);
void validate_config(const RunConfig& c);
std::string echo_config(const RunConfig& c);

// Nearest known key within edit distance 2, empty when none.
std::string suggest_key(const std::string& key);

} // namespace selfprop
