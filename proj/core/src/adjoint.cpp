#include "selfprop/adjoint.hpp"

#include <Eigen/SparseCholesky>

#include <cmath>
#include <sstream>

namespace selfprop {

Linearization linearize(const FlowState& st)
{
    Linearization L;
    L.basis = st.basis;
    const PropulsionBasis& b = *st.basis;
    const MixedSpace& s = *b.op->space;
    const RigidMotion& m = b.op->motion;
    L.v = st.v;
    L.s = st.v_star.values + st.v_star_C.values;
    L.Nv = convection_jacobian(s, st.v);
    L.Dr = defect_jacobian(s, L.s, m);
    L.Bm.resize(s.bnd.dofs(), 6);
    for (int k = 0; k < 6; ++k)
        L.Bm.col(k) = b.fields[k];
    L.A_lin = b.A + L.Dr * L.Bm;
    L.Kdv = s.Kd * st.v;
    L.hs = 0.5 * drag_boundary_gradient(s, L.s, m);
    L.scale = st.residuals.scale;
    return L;
}

namespace {

[[noreturn]] void fail(const char* what, const std::vector<double>& inc)
{
    std::ostringstream os;
    os << what << " iteration is not contracting (increments";
    for (double x : inc)
        os << ' ' << x;
    os << ")";
    throw Error(ErrorCode::convergence, os.str());
}

// Relative stopping rule shared by the linear fixed points.
struct Tracker {
    const StateOptions& o;
    std::vector<double>& inc;
    std::vector<double>* ratios;
    double ref = 0;
    int growth = 0;

    bool step(double d, const char* what)
    {
        if (!inc.empty()) {
            double r = d / std::max(inc.back(), 1e-300);
            if (ratios)
                ratios->push_back(r);
            growth = r >= 1.0 ? growth + 1 : 0;
        }
        inc.push_back(d);
        ref = std::max(ref, d);
        if (d <= o.tol * ref || d == 0.0)
            return true;
        if (growth >= o.max_growth)
            fail(what, inc);
        return false;
    }
};

} // namespace

LinearizedState solve_linearized(const Linearization& L, const TraceField& delta, const StateOptions& o)
{
    const PropulsionBasis& b = *L.basis;
    const OseenOperator& op = *b.op;
    const MixedSpace& s = *op.space;
    if (delta.values.size() != s.bnd.dofs())
        throw Error(ErrorCode::precondition, "direction does not match the body nodes");
    if (delta.kind != TraceKind::general && delta.kind != b.kind)
        throw Error(ErrorCode::precondition, "direction kind does not match the control kind");
    check_kind(s.bnd, delta);
    WeightFn wf(op.motion);
    auto Alu = L.A_lin.fullPivLu();
    Vec6 Drd = L.Dr * delta.values;

    LinearizedState out;
    out.direction = delta;
    Vec zbar = Vec::Zero(s.n_u);
    Vec6 cbar = Vec6::Zero();
    Tracker tr{o, out.increments, nullptr};
    for (int it = 0; it < o.max_iter; ++it) {
        Vec load = -(L.Nv * zbar);
        FemSolution uf = solve_dirichlet(op, s.lift_trace(delta.values), load);
        Vec T = traction_functional(op, uf, load);
        Vec6 c = Alu.solve(Vec6(balance_lhs(b, T, delta.values) - Drd));
        Vec z = uf.u;
        Vec r = uf.p;
        double mu = uf.lambda;
        for (int k = 0; k < 6; ++k) {
            z += c[k] * b.lifts[k].u;
            r += c[k] * b.lifts[k].p;
            mu += c[k] * b.lifts[k].lambda;
        }
        double d = state_metric(s, wf, Vec(z - zbar), Vec6(c - cbar));
        zbar = z;
        cbar = c;
        out.z = z;
        out.r = r;
        out.mu = mu;
        out.c = c;
        if (tr.step(d, "linearized"))
            return out;
    }
    throw Error(ErrorCode::convergence, "linearized iteration did not reach tolerance");
}

double drag_derivative(const Linearization& L, const LinearizedState& z)
{
    Vec ds = z.direction.values + L.Bm * z.c;
    return 2.0 * L.Kdv.dot(z.z) + 2.0 * L.hs.dot(ds);
}

MappingF mapping_F(const MixedSpace& s, const WeightFn& w, const Vec& vhat, const Vec& u)
{
    MappingF out;
    out.load = mapping_F_load(s, vhat, u, &out.l2);
    Triplets t;
    for (int c = 0; c < s.Lu.outerSize(); ++c)
        for (SpMat::InnerIterator it(s.Lu, c); it; ++it) {
            int r = s.interior[it.row()], cc = s.interior[it.col()];
            if (r >= 0 && cc >= 0)
                t.emplace_back(r, cc, it.value());
        }
    SpMat LII(s.n_i, s.n_i);
    LII.setFromTriplets(t.begin(), t.end());
    Eigen::SimplicialLDLT<SpMat> f(LII);
    Vec rhs(s.n_i);
    for (int k = 0; k < s.n_i; ++k)
        rhs[k] = out.load[s.interior_dofs[k]];
    out.dual = std::sqrt(std::max(0.0, rhs.dot(f.solve(rhs))));
    FieldNorms nv = functional_norms(s, vhat, Vec(), &w);
    FieldNorms nu = functional_norms(s, u, Vec());
    double den = nv.weighted_sup * nu.grad_u;
    out.bound = den > 0 ? out.dual / den : 0.0;
    return out;
}

AdjointState solve_adjoint(const Linearization& L, const StateOptions& o)
{
    const PropulsionBasis& b = *L.basis;
    const OseenOperator& op = *b.op;
    const MixedSpace& s = *op.space;
    WeightFn wf(op.motion);
    auto Atlu = L.A_lin.transpose().fullPivLu();
    SpMat NvT = L.Nv.transpose();
    const Vec BtHs = L.Bm.transpose() * L.hs;

    AdjointState a;
    Vec ubar = Vec::Zero(s.n_u);
    Vec6 ybar = Vec6::Zero();
    Tracker tr{o, a.increments, &a.ratios};
    for (int it = 0; it < o.max_iter; ++it) {
        Vec load = L.Kdv - NvT * ubar;
        FemSolution uf = solve_dirichlet(op, Vec(), load, true);
        Vec tf = traction_functional(op, uf, load, true); // T*_f - a_B
        Vec6 y = Atlu.solve(Vec6(L.Bm.transpose() * tf - BtHs));
        Vec u = uf.u;
        Vec q = uf.p;
        double lam = uf.lambda;
        for (int j = 0; j < 6; ++j) {
            u -= y[j] * b.basic[j].u;
            q -= y[j] * b.basic[j].p;
            lam -= y[j] * b.basic[j].lambda;
        }
        double d = state_metric(s, wf, Vec(u - ubar), Vec6(y - ybar));
        ubar = u;
        ybar = y;
        a.u = u;
        a.q = q;
        a.lambda = lam;
        a.y = y;
        a.iterations = it + 1;
        if (tr.step(d, "adjoint")) {
            Vec MGy = Vec::Zero(s.bnd.dofs());
            for (int j = 0; j < 6; ++j)
                MGy += y[j] * b.g[j];
            MGy = s.bnd.mass_apply(MGy);
            Vec zeta_f = -tf + MGy + L.Dr.transpose() * y;
            a.functional = zeta_f + L.hs;
            a.zeta = {mass_solve(s.bnd, zeta_f), TraceKind::general};
            a.ell = -y.head<3>();
            a.k = -y.tail<3>();
            return a;
        }
    }
    throw Error(ErrorCode::convergence, "adjoint iteration did not reach tolerance");
}

TraceField multiplier(const AdjointState& a) { return a.zeta; }

Vec6 closure_integrals(const Linearization& L, const AdjointState& a) { return L.Bm.transpose() * a.functional; }

Vec6 multiplier_pairing(const Linearization& L, const AdjointState& a)
{
    const BoundarySpace& b = L.basis->op->space->bnd;
    Vec6 out;
    for (int k = 0; k < 6; ++k)
        out[k] = b.inner(L.Bm.col(k), a.zeta.values);
    return out;
}

TraceField gradient(const AdjointState& a, const AdmissibleSpace& space)
{
    return {space.density(a.functional), space.kind()};
}

} // namespace selfprop
