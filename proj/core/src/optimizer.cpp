#include "selfprop/optimizer.hpp"

#include <cmath>
#include <random>

namespace selfprop {

Vec riesz_gradient(const AdmissibleSpace& space, const Vec& functional) { return space.riesz(functional); }

std::vector<Vec> make_probes(const PropulsionBasis& b, const TraceNorm& n, const AdmissibleSpace& space,
                             const Vec& riesz, double kappa, int n_random, unsigned seed)
{
    std::vector<Vec> out;
    auto add = [&](const Vec& v) {
        double nv = n.norm(v);
        if (nv > 0)
            out.push_back(v * (kappa / nv));
    };
    for (const Vec& f : b.fields) {
        add(f);
        add(-f);
    }
    add(-riesz);
    std::mt19937 rng(seed);
    std::normal_distribution<double> d;
    const SpMat& P = space.basis();
    for (int i = 0; i < n_random; ++i) {
        Vec c(P.cols());
        for (auto& x : c)
            x = d(rng);
        add(P * c);
    }
    return out;
}

Stationarity stationarity_residual(const Vec& v, const Vec& functional, const TraceNorm& n, const Vec& riesz,
                                   const std::vector<Vec>& probes)
{
    Stationarity s;
    for (const Vec& p : probes)
        s.vi = std::max(s.vi, -functional.dot(p - v));
    s.riesz_norm = riesz.size() ? n.norm(riesz) : 0.0;
    return s;
}

OptimizationRun optimize(std::shared_ptr<const PropulsionBasis> bp, const TraceNorm& n, const AdmissibleSpace& space,
                         const OptimizerOptions& o, const Vec& start, const IterationHook& hook)
{
    if (!(o.kappa > 0))
        throw Error(ErrorCode::precondition, "kappa must be positive");
    const PropulsionBasis& b = *bp;
    const MixedSpace& s = *b.op->space;
    const TraceKind kind = b.kind;
    OptimizationRun run;
    run.scale = control_scale(b.op->motion, o.kappa);

    Vec v = start.size() ? project_ball(n, project_kind(s.bnd, kind, start), o.kappa) : Vec(Vec::Zero(s.bnd.dofs()));
    auto solve = [&](const Vec& c, const FlowState* warm) {
        return solve_state(bp, {c, kind}, o.state, warm, o.kappa);
    };

    try {
        FlowState st = solve(v, nullptr);
        double alpha = 0;
        Vec v_prev, g_prev;
        std::vector<Vec> mem_s, mem_y;
        for (int it = 0;; ++it) {
            Linearization L = linearize(st);
            AdjointState a = solve_adjoint(L, o.state);
            Vec g = riesz_gradient(space, a.functional);
            auto probes = make_probes(b, n, space, g, o.kappa, o.random_probes, o.seed + it);
            Stationarity sr = stationarity_residual(v, a.functional, n, g, probes);

            run.iterates.push_back(v);
            run.J.push_back(st.J);
            run.stationarity.push_back(sr.vi);
            run.norms.push_back(n.norm(v));
            run.final_state = st;
            run.final_functional = a.functional;
            run.final_gradient = gradient(a, space);
            run.orthogonality = sr.riesz_norm;
            if (hook)
                hook(it, run);

            if (sr.vi <= o.tol * run.scale) {
                run.termination = "stationary";
                run.ok = true;
                break;
            }
            if (it >= o.max_outer) {
                run.termination = "max_iterations";
                break;
            }
            // limited-memory quasi-Newton direction; pairs are (step, change
            // of the functional) and the seed operator is the M + S^{1/2} Riesz map
            const Vec& F = a.functional;
            if (v_prev.size()) {
                Vec sv = v - v_prev, yv = F - g_prev;
                double sy = sv.dot(yv);
                if (sy > 1e-12 * sv.norm() * yv.norm()) {
                    mem_s.push_back(sv);
                    mem_y.push_back(yv);
                    if (static_cast<int>(mem_s.size()) > o.memory) {
                        mem_s.erase(mem_s.begin());
                        mem_y.erase(mem_y.begin());
                    }
                }
            }
            v_prev = v;
            g_prev = F;
            auto direction = [&]() -> Vec {
                const int m = static_cast<int>(mem_s.size());
                std::vector<double> rho(m), al(m);
                Vec q = F;
                for (int i = m - 1; i >= 0; --i) {
                    rho[i] = 1.0 / mem_s[i].dot(mem_y[i]);
                    al[i] = rho[i] * mem_s[i].dot(q);
                    q -= al[i] * mem_y[i];
                }
                Vec r = space.smooth(q);
                if (m > 0) {
                    Vec hy = space.smooth(mem_y.back());
                    r *= mem_s.back().dot(mem_y.back()) / mem_y.back().dot(hy);
                }
                for (int i = 0; i < m; ++i)
                    r += (al[i] - rho[i] * mem_y[i].dot(r)) * mem_s[i];
                return -r;
            };
            Vec d = o.memory > 0 ? direction() : Vec(-g);
            if (F.dot(d) >= 0) {
                mem_s.clear();
                mem_y.clear();
                d = -g;
            }
            bool accepted = false;
            int bt = 0;
            for (int pass = 0; pass < 2 && !accepted; ++pass) {
                if (pass == 1) {
                    // fall back to the surrogate gradient
                    mem_s.clear();
                    mem_y.clear();
                    d = -g;
                }
                alpha = mem_s.empty() ? o.kappa / n.norm(d) : 1.0;
                for (bt = 0; bt <= o.max_backtracks; ++bt, alpha *= o.shrink) {
                    Vec trial = project_ball(n, Vec(v + alpha * d), o.kappa);
                    double pred = 2.0 * F.dot(trial - v); // DJ (trial - v)
                    if (pred >= 0)
                        continue;
                    FlowState ts = solve(trial, &st);
                    if (ts.J <= st.J + o.armijo * pred) {
                        v = trial;
                        st = std::move(ts);
                        accepted = true;
                        break;
                    }
                }
                if (o.memory == 0)
                    break;
            }
            run.steps.push_back(accepted ? alpha : 0.0);
            run.backtracks.push_back(bt);
            if (!accepted) {
                run.termination = "line_search_failed";
                break;
            }
        }
    } catch (const Error& e) {
        if (e.code() != ErrorCode::convergence)
            throw;
        run.termination = std::string("inner_nonconvergence: ") + e.what();
        run.ok = false;
    }
    run.active = !run.norms.empty() && run.norms.back() >= o.kappa * (1 - o.interior_margin);
    return run;
}

} // namespace selfprop
