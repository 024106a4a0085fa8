#include "selfprop/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace selfprop {

namespace fs = std::filesystem;

const std::vector<std::string>& config_keys()
{
    static const std::vector<std::string> keys{
        "body", "gamma_tag", "kind", "xi", "omega", "kappa", "motion_bound", "R_inf", "h", "min_dihedral",
        "omega_threshold", "state_tol", "max_iter", "solver_rtol", "direct_limit", "control_amplitude", "fd_steps",
        "fd_directions", "opt_tol", "max_outer", "armijo", "shrink", "max_backtracks", "random_probes", "opt_memory", "seed",
        "oracle_grid", "oracle_box", "deterministic", "output_dir", "threads"};
    return keys;
}

namespace {

int edit_distance(const std::string& a, const std::string& b)
{
    std::vector<int> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j)
        prev[j] = static_cast<int>(j);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = static_cast<int>(i);
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

struct Field {
    std::string key, value;
    int line = 0, col = 0;   // column of the value
};

[[noreturn]] void parse_error(const std::string& src, int line, int col, const std::string& msg)
{
    std::ostringstream os;
    os << (src.empty() ? "config" : src) << ":" << line << ":" << col << ": " << msg;
    throw Error(ErrorCode::config, os.str());
}

[[noreturn]] void field_error(const std::string& key, const std::string& msg)
{
    throw Error(ErrorCode::config, "invalid value for '" + key + "': " + msg);
}

std::vector<double> numbers(const Field& f, const std::string& src)
{
    std::istringstream is(f.value);
    std::vector<double> out;
    std::string tok;
    while (is >> tok) {
        char* end = nullptr;
        double v = std::strtod(tok.c_str(), &end);
        if (end == tok.c_str() || *end != '\0') {
            auto pos = f.value.find(tok);
            parse_error(src, f.line, f.col + static_cast<int>(pos), "'" + f.key + "' expects numbers, got '" + tok + "'");
        }
        out.push_back(v);
    }
    return out;
}

double number(const Field& f, const std::string& src)
{
    auto v = numbers(f, src);
    if (v.size() != 1)
        parse_error(src, f.line, f.col, "'" + f.key + "' expects one number");
    return v[0];
}

int integer(const Field& f, const std::string& src)
{
    double v = number(f, src);
    if (v != static_cast<double>(static_cast<long long>(v)))
        parse_error(src, f.line, f.col, "'" + f.key + "' expects an integer");
    return static_cast<int>(v);
}

Vec3 vec3(const Field& f, const std::string& src)
{
    auto v = numbers(f, src);
    if (v.size() != 3)
        parse_error(src, f.line, f.col, "'" + f.key + "' expects three numbers");
    return Vec3(v[0], v[1], v[2]);
}

bool boolean(const Field& f, const std::string& src)
{
    if (f.value == "true" || f.value == "1" || f.value == "yes")
        return true;
    if (f.value == "false" || f.value == "0" || f.value == "no")
        return false;
    parse_error(src, f.line, f.col, "'" + f.key + "' expects true or false");
}

std::string trim(const std::string& s, std::size_t& lead)
{
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) {
        lead = s.size();
        return "";
    }
    std::size_t b = s.find_last_not_of(" \t\r");
    lead = a;
    return s.substr(a, b - a + 1);
}

} // namespace

std::string suggest_key(const std::string& key)
{
    std::string best;
    int bd = 3;
    for (const auto& k : config_keys()) {
        int d = edit_distance(key, k);
        if (d < bd) {
            bd = d;
            best = k;
        }
    }
    return best;
}

RunConfig parse_config(const std::string& text, const std::string& base_dir, const std::string& src)
{
    RunConfig c;
    c.source = src;
    std::istringstream is(text);
    std::string raw;
    int ln = 0;
    std::vector<std::string> seen;
    while (std::getline(is, raw)) {
        ++ln;
        std::string line = raw.substr(0, raw.find('#'));
        std::size_t lead;
        std::string t = trim(line, lead);
        if (t.empty())
            continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            parse_error(src, ln, static_cast<int>(lead) + 1, "expected 'key = value'");
        std::size_t klead, vlead;
        std::string key = trim(line.substr(0, eq), klead);
        std::string value = trim(line.substr(eq + 1), vlead);
        if (key.empty())
            parse_error(src, ln, static_cast<int>(lead) + 1, "missing key before '='");
        for (char ch : key)
            if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_'))
                parse_error(src, ln, static_cast<int>(klead) + 1, "invalid key '" + key + "'");
        Field f{key, value, ln, static_cast<int>(eq + 1 + vlead) + 1};
        if (value.empty())
            parse_error(src, ln, f.col, "missing value for '" + key + "'");
        const auto& keys = config_keys();
        if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
            std::string hint = suggest_key(key);
            parse_error(src, ln, static_cast<int>(klead) + 1,
                        "unknown key '" + key + "'" + (hint.empty() ? "" : "; did you mean '" + hint + "'?"));
        }
        if (std::find(seen.begin(), seen.end(), key) != seen.end())
            parse_error(src, ln, static_cast<int>(klead) + 1, "duplicate key '" + key + "'");
        seen.push_back(key);

        if (key == "body")
            c.body = value;
        else if (key == "gamma_tag")
            c.gamma_tag = integer(f, src);
        else if (key == "kind") {
            if (value != "tangential" && value != "localized")
                parse_error(src, ln, f.col, "'kind' must be tangential or localized");
            c.kind = parse_kind(value);
        } else if (key == "xi")
            c.motion.xi = vec3(f, src);
        else if (key == "omega")
            c.motion.omega = vec3(f, src);
        else if (key == "kappa")
            c.kappa = number(f, src);
        else if (key == "motion_bound")
            c.motion_bound = number(f, src);
        else if (key == "R_inf")
            c.R_inf = number(f, src);
        else if (key == "h")
            c.h = number(f, src);
        else if (key == "min_dihedral")
            c.min_dihedral = number(f, src);
        else if (key == "omega_threshold")
            c.omega_threshold = number(f, src);
        else if (key == "state_tol")
            c.state_tol = number(f, src);
        else if (key == "max_iter")
            c.max_iter = integer(f, src);
        else if (key == "solver_rtol")
            c.solver_rtol = number(f, src);
        else if (key == "direct_limit")
            c.direct_limit = integer(f, src);
        else if (key == "control_amplitude")
            c.control_amplitude = number(f, src);
        else if (key == "fd_steps")
            c.fd_steps = numbers(f, src);
        else if (key == "fd_directions")
            c.fd_directions = integer(f, src);
        else if (key == "opt_tol")
            c.opt_tol = number(f, src);
        else if (key == "max_outer")
            c.max_outer = integer(f, src);
        else if (key == "armijo")
            c.armijo = number(f, src);
        else if (key == "shrink")
            c.shrink = number(f, src);
        else if (key == "max_backtracks")
            c.max_backtracks = integer(f, src);
        else if (key == "random_probes")
            c.random_probes = integer(f, src);
        else if (key == "opt_memory")
            c.opt_memory = integer(f, src);
        else if (key == "seed")
            c.seed = static_cast<unsigned>(integer(f, src));
        else if (key == "oracle_grid")
            c.oracle_grid = integer(f, src);
        else if (key == "oracle_box")
            c.oracle_box = number(f, src);
        else if (key == "deterministic")
            c.deterministic = boolean(f, src);
        else if (key == "output_dir")
            c.output_dir = value;
        else if (key == "threads")
            c.threads = integer(f, src);
    }
    fs::path bp(c.body);
    if (bp.is_relative())
        c.body = (fs::path(base_dir) / bp).lexically_normal().string();
    fs::path op(c.output_dir);
    if (op.is_relative())
        c.output_dir = (fs::path(base_dir) / op).lexically_normal().string();
    validate_config(c);
    return c;
}

RunConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorCode::io, "cannot read config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    fs::path dir = fs::path(path).parent_path();
    return parse_config(ss.str(), dir.empty() ? "." : dir.string(), path);
}

void apply_env_overrides(RunConfig& c)
{
    if (const char* d = std::getenv("SELFPROP_OUTPUT_DIR"); d && *d)
        c.output_dir = d;
    if (const char* t = std::getenv("SELFPROP_THREADS"); t && *t) {
        char* end = nullptr;
        long v = std::strtol(t, &end, 10);
        if (*end != '\0' || v < 0)
            field_error("SELFPROP_THREADS", "expects a non-negative integer");
        c.threads = static_cast<int>(v);
    }
}

void validate_config(const RunConfig& c)
{
    auto positive = [](const char* k, double v) {
        if (!(v > 0))
            field_error(k, "must be positive");
    };
    if (!fs::exists(c.body))
        field_error("body", "file not found: " + c.body);
    positive("kappa", c.kappa);
    positive("motion_bound", c.motion_bound);
    positive("R_inf", c.R_inf);
    positive("h", c.h);
    positive("min_dihedral", c.min_dihedral);
    positive("omega_threshold", c.omega_threshold);
    positive("state_tol", c.state_tol);
    positive("solver_rtol", c.solver_rtol);
    positive("opt_tol", c.opt_tol);
    positive("armijo", c.armijo);
    positive("oracle_box", c.oracle_box);
    if (c.max_iter < 1)
        field_error("max_iter", "must be at least 1");
    if (c.max_outer < 0)
        field_error("max_outer", "must be non-negative");
    if (!(c.shrink > 0 && c.shrink < 1))
        field_error("shrink", "must lie in (0, 1)");
    if (c.max_backtracks < 1)
        field_error("max_backtracks", "must be at least 1");
    if (c.random_probes < 0)
        field_error("random_probes", "must be non-negative");
    if (c.opt_memory < 0)
        field_error("opt_memory", "must be non-negative");
    if (c.direct_limit < 0)
        field_error("direct_limit", "must be non-negative");
    if (c.fd_steps.empty())
        field_error("fd_steps", "needs at least one step");
    for (double s : c.fd_steps)
        positive("fd_steps", s);
    if (c.fd_directions < 1)
        field_error("fd_directions", "must be at least 1");
    if (c.oracle_grid < 8 || (c.oracle_grid & (c.oracle_grid - 1)) != 0)
        field_error("oracle_grid", "must be a power of two >= 8");
    if (c.threads < 0)
        field_error("threads", "must be non-negative");
    if (c.control_amplitude < 0)
        field_error("control_amplitude", "must be non-negative");
}

std::string echo_config(const RunConfig& c)
{
    std::ostringstream os;
    os << std::setprecision(17);
    os << "body = " << c.body << "\n"
       << "gamma_tag = " << c.gamma_tag << "\n"
       << "kind = " << kind_name(c.kind) << "\n"
       << "xi = " << c.motion.xi[0] << " " << c.motion.xi[1] << " " << c.motion.xi[2] << "\n"
       << "omega = " << c.motion.omega[0] << " " << c.motion.omega[1] << " " << c.motion.omega[2] << "\n"
       << "kappa = " << c.kappa << "\n"
       << "motion_bound = " << c.motion_bound << "\n"
       << "R_inf = " << c.R_inf << "\n"
       << "h = " << c.h << "\n"
       << "min_dihedral = " << c.min_dihedral << "\n"
       << "omega_threshold = " << c.omega_threshold << "\n"
       << "state_tol = " << c.state_tol << "\n"
       << "max_iter = " << c.max_iter << "\n"
       << "solver_rtol = " << c.solver_rtol << "\n"
       << "direct_limit = " << c.direct_limit << "\n"
       << "control_amplitude = " << c.control_amplitude << "\n"
       << "fd_steps =";
    for (double s : c.fd_steps)
        os << " " << s;
    os << "\n"
       << "fd_directions = " << c.fd_directions << "\n"
       << "opt_tol = " << c.opt_tol << "\n"
       << "max_outer = " << c.max_outer << "\n"
       << "armijo = " << c.armijo << "\n"
       << "shrink = " << c.shrink << "\n"
       << "max_backtracks = " << c.max_backtracks << "\n"
       << "random_probes = " << c.random_probes << "\n"
       << "opt_memory = " << c.opt_memory << "\n"
       << "seed = " << c.seed << "\n"
       << "oracle_grid = " << c.oracle_grid << "\n"
       << "oracle_box = " << c.oracle_box << "\n"
       << "deterministic = " << (c.deterministic ? "true" : "false") << "\n"
       << "output_dir = " << c.output_dir << "\n"
       << "threads = " << c.threads << "\n";
    return os.str();
}

} // namespace selfprop
