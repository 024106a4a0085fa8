#include "selfprop/pipeline.hpp"

#include "selfprop/io.hpp"
#include "selfprop/oracle.hpp"
#include "selfprop/parallel.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <ostream>
#include <random>

namespace selfprop {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

template <class Save>
void save_cached(const std::string& path, Save save)
{
    fs::create_directories(fs::path(path).parent_path());
    const std::string tmp = path + ".tmp";
    save(tmp);
    fs::rename(tmp, path);
}

std::string jdump(const json& j) { return j.dump(2) + "\n"; }

json residual_json(const ResidualReport& r)
{
    return {{"momentum", r.momentum},         {"force_balance", r.force_balance},
            {"torque_balance", r.torque_balance}, {"net_force", r.net_force},
            {"net_torque", r.net_torque},     {"flux", r.flux},
            {"scale", r.scale}};
}

double max_ratio(const std::vector<double>& r)
{
    double m = 0;
    for (double x : r)
        m = std::max(m, x);
    return m;
}

StateOptions fd_options(const StateOptions& o)
{
    StateOptions t = o;
    t.tol = std::min(o.tol, 1e-12);
    t.max_iter = std::max(o.max_iter, 80);
    return t;
}

} // namespace

Workspace::Workspace(RunConfig cfg, std::ostream& log) : cfg_(std::move(cfg)), log_(log)
{
    if (cfg_.threads > 0)
        set_thread_count(cfg_.threads);
}

const BodyGeometry& Workspace::body()
{
    if (!body_) {
        body_ = std::make_unique<BodyGeometry>(load_body(cfg_.body, cfg_.gamma_tag));
        body_hash_ = file_hash(cfg_.body);
    }
    return *body_;
}

std::string Workspace::mesh_key()
{
    body();
    return content_hash("mesh1|" + body_hash_ + "|" + std::to_string(cfg_.gamma_tag) + "|" + fmt_double(cfg_.R_inf) +
                        "|" + fmt_double(cfg_.h) + "|" + fmt_double(cfg_.min_dihedral));
}

std::string Workspace::basis_key()
{
    const auto& m = cfg_.motion;
    std::string s = "basis1|" + mesh_key() + "|" + kind_name(cfg_.kind);
    for (int i = 0; i < 3; ++i)
        s += "|" + fmt_double(m.xi[i]) + "|" + fmt_double(m.omega[i]);
    s += "|" + std::to_string(cfg_.direct_limit) + "|" + fmt_double(cfg_.solver_rtol);
    return content_hash(s);
}

std::string Workspace::cache_path(const std::string& name) const
{
    return (fs::path(cfg_.output_dir) / "cache" / name).string();
}

std::string Workspace::out_path(const std::string& name) const { return (fs::path(cfg_.output_dir) / name).string(); }

std::shared_ptr<const MixedSpace> Workspace::space()
{
    if (space_)
        return space_;
    const std::string path = cache_path("mesh-" + mesh_key() + ".bin");
    ExteriorMesh mesh;
    if (fs::exists(path)) {
        mesh = load_mesh(path);
        log_ << "mesh: cached " << path << "\n";
    } else {
        MeshOptions mo;
        mo.min_dihedral_deg = cfg_.min_dihedral;
        mesh = build_mesh(body(), cfg_.R_inf, cfg_.h, mo);
        save_cached(path, [&](const std::string& p) { save_mesh(p, mesh); });
        log_ << "mesh: built " << path << "\n";
    }
    space_ = make_space(std::move(mesh));
    return space_;
}

std::shared_ptr<const OseenOperator> Workspace::op()
{
    if (!op_) {
        SolverOptions so;
        so.direct_limit = cfg_.direct_limit;
        so.rel_tol = cfg_.solver_rtol;
        op_ = std::make_shared<const OseenOperator>(assemble_oseen(space(), cfg_.motion, so));
    }
    return op_;
}

std::shared_ptr<const PropulsionBasis> Workspace::basis()
{
    if (basis_)
        return basis_;
    const std::string path = cache_path("basis-" + basis_key() + ".bin");
    if (fs::exists(path)) {
        basis_ = std::make_shared<const PropulsionBasis>(load_basis(path, op()));
        log_ << "basis: cached " << path << "\n";
    } else {
        auto b = std::make_shared<const PropulsionBasis>(build_basis(op(), cfg_.kind));
        save_cached(path, [&](const std::string& p) { save_basis(p, *b); });
        basis_ = b;
        log_ << "basis: built " << path << "\n";
    }
    return basis_;
}

const TraceNorm& Workspace::norm()
{
    if (!norm_)
        norm_ = std::make_unique<TraceNorm>(space()->bnd);
    return *norm_;
}

const AdmissibleSpace& Workspace::admissible()
{
    if (!adm_)
        adm_ = std::make_unique<AdmissibleSpace>(space()->bnd, norm(), cfg_.kind);
    return *adm_;
}

StateOptions Workspace::state_options() const
{
    StateOptions o;
    o.tol = cfg_.state_tol;
    o.max_iter = cfg_.max_iter;
    return o;
}

OptimizerOptions Workspace::optimizer_options() const
{
    OptimizerOptions o;
    o.kappa = cfg_.kappa;
    o.tol = cfg_.opt_tol;
    o.max_outer = cfg_.max_outer;
    o.max_backtracks = cfg_.max_backtracks;
    o.armijo = cfg_.armijo;
    o.shrink = cfg_.shrink;
    o.random_probes = cfg_.random_probes;
    o.memory = cfg_.opt_memory;
    o.seed = cfg_.seed;
    o.state = state_options();
    return o;
}

TraceField Workspace::control()
{
    const MixedSpace& s = *space();
    Vec v = s.interpolate_trace([](const Vec3& x) { return Vec3(-x[1] + 0.3 * x[0] * x[2], x[0], 0.5 * x[0] * x[1]); });
    return {cfg_.control_amplitude * project_kind(s.bnd, cfg_.kind, v), cfg_.kind};
}

TraceField Workspace::direction(int i)
{
    const MixedSpace& s = *space();
    std::mt19937 rng(cfg_.seed * 1000u + static_cast<unsigned>(i));
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    double c[9];
    for (double& x : c)
        x = d(rng);
    Vec v = s.interpolate_trace([&](const Vec3& x) {
        return Vec3(c[0] + c[1] * x[1] + c[2] * x[2] * x[0], c[3] + c[4] * x[2] + c[5] * x[0] * x[1],
                    c[6] + c[7] * x[0] + c[8] * x[1] * x[2]);
    });
    return {0.05 * project_kind(s.bnd, cfg_.kind, v), cfg_.kind};
}

FdCheck linearization_fd(Workspace& w, const FlowState& st)
{
    const MixedSpace& s = *w.space();
    const StateOptions o = fd_options(w.state_options());
    const Linearization L = linearize(st);
    const WeightFn wf(w.config().motion, w.config().omega_threshold);
    FdCheck fd;
    for (int i = 0; i < w.config().fd_directions; ++i) {
        const TraceField d = w.direction(i);
        const LinearizedState z = solve_linearized(L, d, o);
        const double ref = state_metric(s, wf, z.z, z.c);
        std::vector<double> lx, ly;
        for (double h : w.config().fd_steps) {
            const FlowState sh = solve_state(st.basis, {st.v_star.values + h * d.values, d.kind}, o, &st);
            const double e = state_metric(s, wf, Vec((sh.v - st.v) / h - z.z), Vec6((sh.gamma - st.gamma) / h - z.c));
            fd.direction.push_back(i);
            fd.step.push_back(h);
            fd.error.push_back(e);
            fd.reference.push_back(ref);
            lx.push_back(std::log(h));
            ly.push_back(std::log(std::max(e, 1e-300)));
        }
        // least-squares slope
        const double n = static_cast<double>(lx.size());
        double mx = 0, my = 0;
        for (std::size_t k = 0; k < lx.size(); ++k) {
            mx += lx[k] / n;
            my += ly[k] / n;
        }
        double sxy = 0, sxx = 0;
        for (std::size_t k = 0; k < lx.size(); ++k) {
            sxy += (lx[k] - mx) * (ly[k] - my);
            sxx += (lx[k] - mx) * (lx[k] - mx);
        }
        fd.slope.push_back(sxx > 0 ? sxy / sxx : 0.0);
    }
    return fd;
}

GradientCheck gradient_fd(Workspace& w, const FlowState& st, const AdjointState& a, double h)
{
    const StateOptions o = fd_options(w.state_options());
    GradientCheck g;
    for (int i = 0; i < w.config().fd_directions; ++i) {
        const TraceField d = w.direction(i);
        const double Jp = solve_state(st.basis, {st.v_star.values + h * d.values, d.kind}, o, &st).J;
        const double Jm = solve_state(st.basis, {st.v_star.values - h * d.values, d.kind}, o, &st).J;
        const double c = (Jp - Jm) / (2 * h);
        const double adj = 2.0 * a.functional.dot(d.values);
        g.central.push_back(c);
        g.adjoint.push_back(adj);
        g.rel_error.push_back(std::abs(c - adj) / std::max(std::abs(adj), 1e-300));
    }
    return g;
}

std::vector<VerifyCheck> verify_checks(Workspace& w)
{
    std::vector<VerifyCheck> out;
    auto below = [&](const std::string& n, double v, double lim) { out.push_back({n, v, lim, v <= lim}); };
    auto above = [&](const std::string& n, double v, double lim) { out.push_back({n, v, lim, v >= lim}); };

    const MixedSpace& s = *w.space();
    above("mesh_min_dihedral", s.mesh->min_dihedral, w.config().min_dihedral);

    // surrogate norm: ball projection and Riesz identity
    const TraceNorm& tn = w.norm();
    const TraceField d0 = w.direction(0);
    const Vec big = d0.values * (2.0 * w.config().kappa / tn.norm(d0.values));
    below("project_ball_norm", std::abs(tn.norm(project_ball(tn, big, w.config().kappa)) - w.config().kappa) /
                                   w.config().kappa, 1e-12);
    const Vec ell = s.bnd.mass_apply(w.direction(1).values);
    const Vec g = w.admissible().riesz(ell);
    below("riesz_identity", std::abs(tn.inner(g, g) - ell.dot(g)) / std::abs(ell.dot(g)), 1e-10);

    const PropulsionBasis& b = *w.basis();
    double rec = 0;
    for (int k = 0; k < 6; ++k) {
        const Vec T = traction_functional(*b.op, b.lifts[k], Vec());
        rec = std::max(rec, (balance_lhs(b, T, s.trace(b.lifts[k].u)) + b.A.col(k)).norm() / b.A.norm());
    }
    below("basis_reciprocity", rec, 1e-8);

    const TraceField c = w.control();
    const FlowState st = solve_state(w.basis(), c, w.state_options(), nullptr, tn.norm(c.values));
    below("state_contraction_ratio", max_ratio(st.ratios), 1.0 - 1e-12);
    below("state_force_balance", st.residuals.force_balance, 1e-7);
    below("state_torque_balance", st.residuals.torque_balance, 1e-7);
    below("energy_identity", std::abs(st.J - boundary_work(st)) / std::abs(st.J), 0.02);

    const FdCheck fd = linearization_fd(w, st);
    double smin = 1e300, smax = -1e300;
    for (double sl : fd.slope) {
        smin = std::min(smin, sl);
        smax = std::max(smax, sl);
    }
    above("linearization_fd_slope_min", smin, 0.8);
    below("linearization_fd_slope_max", smax, 1.2);

    const Linearization L = linearize(st);
    const AdjointState a = solve_adjoint(L, fd_options(w.state_options()));
    below("adjoint_closure", closure_integrals(L, a).norm() / std::max(a.functional.norm(), 1e-300), 1e-9);
    const GradientCheck gc = gradient_fd(w, st, a);
    double ge = 0;
    for (double e : gc.rel_error)
        ge = std::max(ge, e);
    below("adjoint_gradient_fd", ge, 1e-3);

    const SpectralChecks sc = spectral_checks(SpectralGrid(w.config().oracle_box, 32));
    below("oseen_fourier_residual", sc.oseen_residual, 1e-10);
    below("rot_oseen_fourier_residual", sc.rot_residual, 1e-6);
    below("axisymmetric_closed_form", sc.closed_form_error, 1e-8);
    return out;
}

const std::vector<std::string>& command_names()
{
    static const std::vector<std::string> c{"mesh", "basis", "state", "linearize", "adjoint", "optimize", "oracle", "verify"};
    return c;
}

namespace {

int cmd_mesh(Workspace& w, std::ostream& out)
{
    const MixedSpace& s = *w.space();
    const ExteriorMesh& m = *s.mesh;
    json j{{"mesh_key", w.mesh_key()},    {"R_inf", m.R_inf},           {"h", m.h},
           {"layers", m.layers},          {"vertices", m.n_vertices()}, {"tets", m.tets.size()},
           {"p2_nodes", m.n_nodes},       {"body_nodes", s.bnd.size()}, {"velocity_dofs", s.n_u},
           {"pressure_dofs", s.n_p},      {"min_dihedral", m.min_dihedral}, {"volume", m.volume},
           {"body_area", s.bnd.area}};
    atomic_write(w.out_path("mesh/mesh.json"), jdump(j));
    atomic_write(w.out_path("mesh/surface.vtk"), vtk_surface(s.bnd, {}));
    out << "mesh: " << m.tets.size() << " tets, " << s.n_u << " velocity dofs, min dihedral "
        << m.min_dihedral << " deg\n";
    return 0;
}

int cmd_basis(Workspace& w, std::ostream& out)
{
    const PropulsionBasis& b = *w.basis();
    CsvTable A({"row", "c0", "c1", "c2", "c3", "c4", "c5"});
    for (int i = 0; i < 6; ++i)
        A.add_numbers({double(i), b.A(i, 0), b.A(i, 1), b.A(i, 2), b.A(i, 3), b.A(i, 4), b.A(i, 5)});
    atomic_write(w.out_path("basis/A.csv"), A.str());
    json j{{"basis_key", w.basis_key()}, {"kind", kind_name(b.kind)}, {"cond", b.cond}};
    atomic_write(w.out_path("basis/basis.json"), jdump(j));
    std::vector<std::pair<std::string, Vec>> f;
    for (int k = 0; k < 6; ++k)
        f.emplace_back("B" + std::to_string(k), b.fields[k]);
    atomic_write(w.out_path("basis/fields.vtk"), vtk_surface(w.space()->bnd, f));
    out << "basis: kind " << kind_name(b.kind) << ", cond(A) " << b.cond << "\n";
    return 0;
}

FlowState checked_state(Workspace& w, const std::string& dir)
{
    const TraceField c = w.control();
    try {
        return solve_state(w.basis(), c, w.state_options(), nullptr, w.norm().norm(c.values));
    } catch (const Error& e) {
        if (e.code() == ErrorCode::convergence)
            atomic_write(w.out_path(dir + "/failure.txt"), std::string(e.what()) + "\n");
        throw;
    }
}

void write_state(Workspace& w, const FlowState& st, const std::string& dir)
{
    CsvTable h({"iteration", "increment", "ratio"});
    for (std::size_t i = 0; i < st.increments.size(); ++i)
        h.add_numbers({double(i + 1), st.increments[i], i ? st.ratios[i - 1] : 0.0});
    atomic_write(w.out_path(dir + "/history.csv"), h.str());
    const double W = boundary_work(st);
    json j{{"J", st.J},
           {"boundary_work", W},
           {"energy_gap", std::abs(st.J - W) / std::max(std::abs(st.J), 1e-300)},
           {"iterations", st.iterations},
           {"alpha", {st.gamma[0], st.gamma[1], st.gamma[2]}},
           {"beta", {st.gamma[3], st.gamma[4], st.gamma[5]}},
           {"residuals", residual_json(st.residuals)}};
    atomic_write(w.out_path(dir + "/state.json"), jdump(j));
    const MixedSpace& s = *w.space();
    atomic_write(w.out_path(dir + "/velocity.vtk"), vtk_volume(s, st.v, st.p));
    atomic_write(w.out_path(dir + "/surface.vtk"),
                 vtk_surface(s.bnd, {{"v_star", st.v_star.values}, {"v_star_C", st.v_star_C.values}}));
}

int cmd_state(Workspace& w, std::ostream& out)
{
    const FlowState st = checked_state(w, "state");
    write_state(w, st, "state");
    out << "state: " << st.iterations << " iterations, J " << fmt_double(st.J) << ", force residual "
        << st.residuals.force_balance << ", torque residual " << st.residuals.torque_balance << "\n";
    return 0;
}

int cmd_linearize(Workspace& w, std::ostream& out)
{
    const FlowState st = checked_state(w, "linearize");
    const FdCheck fd = linearization_fd(w, st);
    CsvTable t({"direction", "step", "error", "reference"});
    for (std::size_t i = 0; i < fd.step.size(); ++i)
        t.add_numbers({double(fd.direction[i]), fd.step[i], fd.error[i], fd.reference[i]});
    atomic_write(w.out_path("linearize/fd.csv"), t.str());
    atomic_write(w.out_path("linearize/slopes.json"), jdump(json{{"slopes", fd.slope}}));
    out << "linearize: slopes";
    for (double s : fd.slope)
        out << " " << s;
    out << "\n";
    return 0;
}

int cmd_adjoint(Workspace& w, std::ostream& out)
{
    const FlowState st = checked_state(w, "adjoint");
    const Linearization L = linearize(st);
    const AdjointState a = solve_adjoint(L, fd_options(w.state_options()));
    const TraceField G = gradient(a, w.admissible());
    atomic_write(w.out_path("adjoint/gradient.trace"), trace_text(w.space()->bnd, G));
    const GradientCheck gc = gradient_fd(w, st, a);
    CsvTable t({"direction", "central", "adjoint", "rel_error"});
    for (std::size_t i = 0; i < gc.central.size(); ++i)
        t.add_numbers({double(i), gc.central[i], gc.adjoint[i], gc.rel_error[i]});
    atomic_write(w.out_path("adjoint/fd.csv"), t.str());
    const double fs = std::max(a.functional.norm(), 1e-300);
    json j{{"iterations", a.iterations},
           {"closure", closure_integrals(L, a).norm() / fs},
           {"multiplier_pairing", multiplier_pairing(L, a).norm() / fs},
           {"ell", {a.ell[0], a.ell[1], a.ell[2]}},
           {"k", {a.k[0], a.k[1], a.k[2]}}};
    atomic_write(w.out_path("adjoint/adjoint.json"), jdump(j));
    atomic_write(w.out_path("adjoint/gradient.vtk"), vtk_surface(w.space()->bnd, {{"G", G.values}}));
    double worst = 0;
    for (double e : gc.rel_error)
        worst = std::max(worst, e);
    out << "adjoint: " << a.iterations << " iterations, gradient check max rel error " << worst << "\n";
    return 0;
}

int cmd_optimize(Workspace& w, std::ostream& out)
{
    const MixedSpace& s = *w.space();
    const std::string dir = "optimize";
    const OptimizationRun run = optimize(w.basis(), w.norm(), w.admissible(), w.optimizer_options(), Vec(),
                                         [&](int it, const OptimizationRun& r) {
                                             char name[64];
                                             std::snprintf(name, sizeof name, "%s/iterate-%03d.trace", dir.c_str(), it);
                                             atomic_write(w.out_path(name),
                                                          trace_text(s.bnd, {r.iterates.back(), w.config().kind}));
                                             out << "optimize: it " << it << " J " << fmt_double(r.J.back())
                                                 << " stationarity " << r.stationarity.back() << "\n";
                                         });
    CsvTable h({"iteration", "J", "stationarity", "norm", "step", "backtracks"});
    for (std::size_t i = 0; i < run.J.size(); ++i)
        h.add_numbers({double(i), run.J[i], run.stationarity[i], run.norms[i], i < run.steps.size() ? run.steps[i] : 0.0,
                       i < run.backtracks.size() ? double(run.backtracks[i]) : 0.0});
    atomic_write(w.out_path(dir + "/history.csv"), h.str());
    json j{{"termination", run.termination},
           {"ok", run.ok},
           {"active", run.active},
           {"iterations", run.J.size()},
           {"J_initial", run.J.empty() ? 0.0 : run.J.front()},
           {"J_final", run.J.empty() ? 0.0 : run.J.back()},
           {"stationarity", run.stationarity.empty() ? 0.0 : run.stationarity.back()},
           {"orthogonality", run.orthogonality},
           {"scale", run.scale},
           {"kappa", w.config().kappa}};
    atomic_write(w.out_path(dir + "/summary.json"), jdump(j));
    if (!run.J.empty())
        atomic_write(w.out_path(dir + "/final.vtk"),
                     vtk_surface(s.bnd, {{"v_star", run.iterates.back()}, {"G", run.final_gradient.values}}));
    out << "optimize: " << run.termination << ", J " << (run.J.empty() ? 0.0 : run.J.back()) << "\n";
    return run.ok ? 0 : static_cast<int>(ErrorCode::convergence);
}

int cmd_oracle(Workspace& w, std::ostream& out)
{
    const JpmSweep js = jpm_sweep();
    CsvTable jt({"omega", "R", "J_plus", "J_minus", "J_full", "bound", "ratio", "ratio_full"});
    for (const auto& r : js.rows)
        jt.add_numbers({r.omega, r.R, r.plus, r.minus, r.full, r.bound, r.ratio, r.ratio_full});
    atomic_write(w.out_path("oracle/jpm.csv"), jt.str());

    const SpectralGrid g(w.config().oracle_box, w.config().oracle_grid);
    L2Options lo;
    lo.n_mu = 16;
    lo.n_phi = 16;
    const L2Sweep ls = l2_sweep(g, lo);
    CsvTable lt({"case", "omega", "R", "v_norm", "rhs", "ratio"});
    for (const auto& r : ls.rows)
        lt.add({r.label, fmt_double(r.report.w), fmt_double(r.report.R), fmt_double(r.report.v_norm),
                fmt_double(r.report.rhs), fmt_double(r.report.ratio)});
    atomic_write(w.out_path("oracle/l2.csv"), lt.str());

    const SpectralChecks sc = spectral_checks(g);
    json j{{"jpm_C", js.C},
           {"jpm_spread", js.spread},
           {"jpm_spread_full", js.spread_full},
           {"l2_min_ratio", ls.min_ratio},
           {"l2_max_ratio", ls.max_ratio},
           {"transverse_scaling", ls.scaling},
           {"transverse_scaling_expected", ls.scaling_expected},
           {"oseen_residual", sc.oseen_residual},
           {"rot_oseen_residual", sc.rot_residual},
           {"closed_form_error", sc.closed_form_error}};
    atomic_write(w.out_path("oracle/summary.json"), jdump(j));
    out << "oracle: J+- spread " << js.spread << ", L2 ratio range [" << ls.min_ratio << ", " << ls.max_ratio
        << "], residuals " << sc.oseen_residual << " / " << sc.rot_residual << "\n";
    return 0;
}

int cmd_verify(Workspace& w, std::ostream& out)
{
    const auto checks = verify_checks(w);
    CsvTable t({"check", "value", "limit", "pass"});
    bool ok = true;
    for (const auto& c : checks) {
        t.add({c.name, fmt_double(c.value), fmt_double(c.limit), c.pass ? "1" : "0"});
        ok = ok && c.pass;
        out << (c.pass ? "PASS " : "FAIL ") << c.name << " " << c.value << " (limit " << c.limit << ")\n";
    }
    atomic_write(w.out_path("verify/verify.csv"), t.str());
    return ok ? 0 : 1;
}

} // namespace

int run_command(const std::string& cmd, const RunConfig& cfg, std::ostream& out)
{
    try {
        validate_config(cfg);
        Workspace w(cfg, out);
        if (cmd == "mesh")
            return cmd_mesh(w, out);
        if (cmd == "basis")
            return cmd_basis(w, out);
        if (cmd == "state")
            return cmd_state(w, out);
        if (cmd == "linearize")
            return cmd_linearize(w, out);
        if (cmd == "adjoint")
            return cmd_adjoint(w, out);
        if (cmd == "optimize")
            return cmd_optimize(w, out);
        if (cmd == "oracle")
            return cmd_oracle(w, out);
        if (cmd == "verify")
            return cmd_verify(w, out);
        throw Error(ErrorCode::config, "unknown command '" + cmd + "'");
    } catch (const Error& e) {
        out << "error[" << error_code_name(e.code()) << "]: " << e.what() << "\n";
        return e.exit_status();
    } catch (const fs::filesystem_error& e) {
        out << "error[io]: " << e.what() << "\n";
        return static_cast<int>(ErrorCode::io);
    }
}

} // namespace selfprop
