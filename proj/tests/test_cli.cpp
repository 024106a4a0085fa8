#include "selfprop/config.hpp"
#include "selfprop/io.hpp"
#include "selfprop/pipeline.hpp"

#include "fixtures.hpp"

#include <doctest.h>

#include <filesystem>
#include <sstream>

using namespace selfprop;
namespace fs = std::filesystem;

namespace {

const std::string kData = SELFPROP_DATA_DIR;

std::string error_of(const std::function<void()>& f)
{
    try {
        f();
    } catch (const Error& e) {
        return e.what();
    }
    return "";
}

fs::path scratch(const std::string& name)
{
    fs::path p = fs::temp_directory_path() / ("selfprop_test_" + name);
    fs::remove_all(p);
    return p;
}

} // namespace

TEST_CASE("config: defaults, echo and env overrides")
{
    RunConfig c = parse_config("body = sphere.body\n", kData);
    CHECK(c.kappa == 0.1);
    CHECK(c.kind == TraceKind::tangential);
    CHECK(fs::path(c.body) == fs::path(kData) / "sphere.body");
    std::string echo = echo_config(c);
    CHECK(echo.find("kappa = 0.1") != std::string::npos);
    CHECK(echo.find("opt_memory = 8") != std::string::npos);
    // echo reparses to the same configuration
    RunConfig r = parse_config(echo, "/");
    CHECK(echo_config(r) == echo);

    RunConfig f = load_config(kData + "/sphere.cfg");
    CHECK(f.motion.xi == Vec3(0.05, 0, 0));
    CHECK(f.R_inf == 8.0);
    setenv("SELFPROP_OUTPUT_DIR", "/tmp/selfprop_env_out", 1);
    setenv("SELFPROP_THREADS", "2", 1);
    apply_env_overrides(f);
    CHECK(f.output_dir == "/tmp/selfprop_env_out");
    CHECK(f.threads == 2);
    setenv("SELFPROP_THREADS", "two", 1);
    CHECK_THROWS_AS(apply_env_overrides(f), Error);
    unsetenv("SELFPROP_OUTPUT_DIR");
    unsetenv("SELFPROP_THREADS");
}

TEST_CASE("config: strict parsing and validation errors")
{
    std::string e = error_of([] { parse_config("body = sphere.body\nkappa = -1\n", kData, "k.cfg"); });
    CHECK(e.find("'kappa'") != std::string::npos);
    CHECK(e.find("positive") != std::string::npos);

    e = error_of([] { parse_config("body = sphere.body\nkapa = 1\n", kData, "k.cfg"); });
    CHECK(e.find("k.cfg:2:1") != std::string::npos);
    CHECK(e.find("did you mean 'kappa'?") != std::string::npos);

    e = error_of([] { parse_config("body = sphere.body\n  kappa 1\n", kData, "k.cfg"); });
    CHECK(e.find("k.cfg:2:3") != std::string::npos);

    e = error_of([] { parse_config("body = sphere.body\nxi = 1 x 0\n", kData, "k.cfg"); });
    CHECK(e.find("k.cfg:2:") != std::string::npos);
    CHECK(e.find("expects numbers") != std::string::npos);

    e = error_of([] { parse_config("body = sphere.body\nkappa = 1\nkappa = 2\n", kData); });
    CHECK(e.find("duplicate") != std::string::npos);
    e = error_of([] { parse_config("body = missing.body\n", kData); });
    CHECK(e.find("'body'") != std::string::npos);
    e = error_of([] { parse_config("body = sphere.body\nkind = normal\n", kData); });
    CHECK(e.find("tangential or localized") != std::string::npos);
    CHECK(suggest_key("zzzzzz").empty());
}

TEST_CASE("io: atomic writes, hashes, csv and trace files")
{
    fs::path d = scratch("io");
    const std::string p = (d / "a" / "b.txt").string();
    atomic_write(p, "one\n");
    atomic_write(p, "two\n");
    CHECK(read_file(p) == "two\n");
    int n = 0;
    for (const auto& e : fs::directory_iterator(d / "a")) {
        (void)e;
        ++n;
    }
    CHECK(n == 1);
    CHECK(file_hash(p) == content_hash("two\n"));
    CHECK(content_hash("a") != content_hash("b"));
    CHECK(fmt_double(0.1) == "0.10000000000000001");

    CsvTable t({"x", "y"});
    t.add_numbers({1.0, 0.5});
    t.add({"a", "b"});
    CHECK(t.str() == "x,y\n1,0.5\na,b\n");
    CHECK(t.rows() == 2);

    auto sp = fixtures::sphere_space(4.0, 0.5);
    Vec v = fixtures::random_vec(sp->bnd.dofs(), 9);
    TraceField tf{project_kind(sp->bnd, TraceKind::tangential, v), TraceKind::tangential};
    TraceField back = parse_trace(sp->bnd, trace_text(sp->bnd, tf));
    CHECK(back.kind == tf.kind);
    CHECK(back.values == tf.values);
    CHECK_THROWS_AS(parse_trace(sp->bnd, "selfprop-trace 1\nlocalized\n3\n"), Error);
    CHECK(vtk_surface(sp->bnd, {{"v", tf.values}}).rfind("# vtk DataFile", 0) == 0);
    fs::remove_all(d);
}

TEST_CASE("commands: verify is deterministic, caches rebuild identically, errors map to exit codes")
{
    RunConfig c = load_config(kData + "/quick.cfg");
    std::ostringstream log;
    fs::path a = scratch("verify_a"), b = scratch("verify_b");
    c.output_dir = a.string();
    CHECK(run_command("verify", c, log) == 0);
    c.output_dir = b.string();
    CHECK(run_command("verify", c, log) == 0);
    const std::string va = read_file((a / "verify" / "verify.csv").string());
    CHECK(va == read_file((b / "verify" / "verify.csv").string()));
    CHECK(va.find(",0\n") == std::string::npos);

    // cache safety
    std::vector<fs::path> caches;
    for (const auto& e : fs::directory_iterator(a / "cache"))
        caches.push_back(e.path());
    CHECK(caches.size() == 2);
    for (const fs::path& f : caches) {
        const std::string h = file_hash(f.string());
        fs::remove(f);
        c.output_dir = a.string();
        CHECK(run_command("basis", c, log) == 0);
        CHECK(file_hash(f.string()) == h);
    }
    CHECK(fs::exists(a / "basis" / "A.csv"));

    // oversized control: non-contraction exit code with diagnostics on disk
    RunConfig big = c;
    big.control_amplitude = 200.0;
    CHECK(run_command("state", big, log) == static_cast<int>(ErrorCode::convergence));
    CHECK(fs::exists(a / "state" / "failure.txt"));

    CHECK(run_command("nonsense", c, log) == static_cast<int>(ErrorCode::config));
    RunConfig bad = c;
    bad.kappa = -1;
    CHECK(run_command("mesh", bad, log) == static_cast<int>(ErrorCode::config));
    CHECK(log.str().find("error[config]") != std::string::npos);
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("commands: state, linearize and adjoint artifacts")
{
    RunConfig c = load_config(kData + "/quick.cfg");
    fs::path d = scratch("artifacts");
    c.output_dir = d.string();
    std::ostringstream log;
    CHECK(run_command("mesh", c, log) == 0);
    CHECK(run_command("state", c, log) == 0);
    CHECK(run_command("linearize", c, log) == 0);
    CHECK(run_command("adjoint", c, log) == 0);
    for (const char* f : {"mesh/mesh.json", "state/state.json", "state/history.csv", "state/velocity.vtk",
                          "linearize/fd.csv", "adjoint/fd.csv", "adjoint/gradient.trace"})
        CHECK_MESSAGE(fs::exists(d / f), f);
    const std::string fd = read_file((d / "linearize" / "fd.csv").string());
    CHECK(fd.rfind("direction,step,error,reference\n", 0) == 0);
    fs::remove_all(d);
}
