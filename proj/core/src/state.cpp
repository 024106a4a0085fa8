#include "selfprop/state.hpp"

#include "selfprop/quadrature.hpp"

#include <cmath>
#include <sstream>

namespace selfprop {

namespace {

// Degree-5 quadrature over the body faces with P2 values of a trace.
struct BodyPoint {
    int f;
    Vec3 x, n;      // n: unit face normal
    double w;
    std::array<double, 6> phi;
};

template <class Fn>
void body_quadrature(const BoundarySpace& b, Fn fn)
{
    const auto& q = tri_rule(5);
    BodyPoint p;
    for (std::size_t f = 0; f < b.tris.size(); ++f) {
        const auto& t = b.tris[f];
        p.f = static_cast<int>(f);
        p.n = b.face_normal[f];
        for (std::size_t k = 0; k < q.w.size(); ++k) {
            const auto& l = q.bary[k];
            p.x = l[0] * b.x[t[0]] + l[1] * b.x[t[1]] + l[2] * b.x[t[2]];
            p.w = q.w[k] * b.face_area[f];
            p.phi = tri_p2(l);
            fn(p);
        }
    }
}

// s and (s.n)_h at a quadrature point
void trace_at(const BoundarySpace& b, const BodyPoint& p, const Vec& s, Vec3& sv, double& sn)
{
    sv.setZero();
    sn = 0;
    const auto& t = b.tris[p.f];
    for (int a = 0; a < 6; ++a) {
        Vec3 sa = s.segment<3>(3 * t[a]);
        sv += p.phi[a] * sa;
        sn += p.phi[a] * sa.dot(b.nodal_normal[t[a]]);
    }
}

const BodyGeometry& body_of(const MixedSpace& sp) { return sp.mesh->body; }

// int (s.n)(s + V + omega x x) and its moment
Vec6 flux_transport(const MixedSpace& sp, const Vec& s, const RigidMotion& m)
{
    Vec6 out = Vec6::Zero();
    body_quadrature(sp.bnd, [&](const BodyPoint& p) {
        Vec3 sv;
        double sn;
        trace_at(sp.bnd, p, s, sv, sn);
        Vec3 a = p.w * sn * (sv + m(p.x) + m.omega.cross(p.x));
        out.head<3>() += a;
        out.tail<3>() += p.x.cross(a);
    });
    return out;
}

Vec6 inertial_terms(const MixedSpace& sp, const RigidMotion& m)
{
    const auto& body = body_of(sp);
    Vec6 out;
    out.head<3>() = body.mass * m.xi.cross(m.omega);
    out.tail<3>() = (body.inertia * m.omega).cross(m.omega);
    return out;
}

} // namespace

Vec rhs_force(const MixedSpace& s, const Vec& vbar) { return -convection(s, vbar); }

Vec rhs_flux_form(const MixedSpace& s, const Vec& vbar) { return -convection_flux_form(s, vbar); }

Vec6 propulsion_defect(const MixedSpace& sp, const Vec& s, const RigidMotion& m)
{
    Vec6 r = -inertial_terms(sp, m);
    body_quadrature(sp.bnd, [&](const BodyPoint& p) {
        Vec3 sv;
        double sn;
        trace_at(sp.bnd, p, s, sv, sn);
        Vec3 V = m(p.x);
        Vec3 a = p.w * (sn * (sv + V + m.omega.cross(p.x)) + V.dot(p.n) * (V + sv));
        r.head<3>() -= a;
        r.tail<3>() -= p.x.cross(a);
    });
    return r;
}

Mat defect_jacobian(const MixedSpace& sp, const Vec& s, const RigidMotion& m)
{
    const BoundarySpace& b = sp.bnd;
    Mat D = Mat::Zero(6, b.dofs());
    body_quadrature(b, [&](const BodyPoint& p) {
        Vec3 sv;
        double sn;
        trace_at(b, p, s, sv, sn);
        Vec3 V = m(p.x);
        Vec3 W = sv + V + m.omega.cross(p.x);
        double c = sn + V.dot(p.n);
        const auto& t = b.tris[p.f];
        for (int i = 0; i < 6; ++i) {
            Vec3 Ei = rigid_mode(i, p.x);
            double wE = W.dot(Ei);
            for (int a = 0; a < 6; ++a)
                D.block<1, 3>(i, 3 * t[a]) -=
                    (p.w * p.phi[a] * (wE * b.nodal_normal[t[a]] + c * Ei)).transpose();
        }
    });
    return D;
}

double drag_boundary_term(const MixedSpace& sp, const Vec& s, const RigidMotion& m)
{
    double J = 0;
    body_quadrature(sp.bnd, [&](const BodyPoint& p) {
        Vec3 sv;
        double sn;
        trace_at(sp.bnd, p, s, sv, sn);
        J += 0.5 * p.w * sn * (m(p.x) + sv).squaredNorm();
    });
    return J;
}

Vec drag_boundary_gradient(const MixedSpace& sp, const Vec& s, const RigidMotion& m)
{
    const BoundarySpace& b = sp.bnd;
    Vec g = Vec::Zero(b.dofs());
    body_quadrature(b, [&](const BodyPoint& p) {
        Vec3 sv;
        double sn;
        trace_at(b, p, s, sv, sn);
        Vec3 u = m(p.x) + sv;
        const auto& t = b.tris[p.f];
        for (int a = 0; a < 6; ++a)
            g.segment<3>(3 * t[a]) += 0.5 * p.w * p.phi[a] * (u.squaredNorm() * b.nodal_normal[t[a]] + 2.0 * sn * u);
    });
    return g;
}

Vec6 balance_lhs(const PropulsionBasis& b, const Vec& T, const Vec& uB)
{
    Vec MVu = apply_componentwise(b.MV, uB);
    Vec6 out;
    for (int i = 0; i < 6; ++i)
        out[i] = -b.E[i].dot(T) - b.E[i].dot(MVu);
    return out;
}

LinearStep linear_step(const PropulsionBasis& b, const Vec& vbar, const Vec6& gamma_bar, const Vec& v_star,
                       const Vec6* defect_override)
{
    const OseenOperator& op = *b.op;
    const MixedSpace& s = *op.space;
    Vec Vb = s.interpolate_trace([&](const Vec3& x) { return op.motion(x); });
    Vec load = vbar.size() ? rhs_force(s, vbar) : Vec();
    FemSolution uf = solve_dirichlet(op, s.lift_trace(Vb + v_star), load);
    Vec T = traction_functional(op, uf, load);
    LinearStep out;
    out.defect = defect_override ? *defect_override
                                 : propulsion_defect(s, Vec(v_star + b.corrector(gamma_bar)), op.motion);
    out.gamma = b.solve_A(balance_lhs(b, T, s.trace(uf.u)) - out.defect);
    out.v = uf.u;
    out.p = uf.p;
    out.lambda = uf.lambda;
    for (int k = 0; k < 6; ++k) {
        out.v += out.gamma[k] * b.lifts[k].u;
        out.p += out.gamma[k] * b.lifts[k].p;
        out.lambda += out.gamma[k] * b.lifts[k].lambda;
    }
    return out;
}

double state_metric(const MixedSpace& s, const WeightFn& w, const Vec& dv, const Vec6& dgamma)
{
    FieldNorms n = functional_norms(s, dv, Vec(), &w);
    return n.grad_u + n.weighted_sup + dgamma.norm();
}

double control_scale(const RigidMotion& m, double vstar_norm)
{
    return std::max(1.0, m.xi.norm() + m.omega.norm() + vstar_norm);
}

FlowState solve_state(std::shared_ptr<const PropulsionBasis> bp, const TraceField& v_star, const StateOptions& o,
                      const FlowState* warm, double vstar_norm)
{
    const PropulsionBasis& b = *bp;
    const MixedSpace& s = *b.op->space;
    if (v_star.values.size() != s.bnd.dofs())
        throw Error(ErrorCode::precondition, "v_star does not match the body nodes");
    if (v_star.kind != TraceKind::general && v_star.kind != b.kind)
        throw Error(ErrorCode::precondition, "v_star kind does not match the propulsion basis");
    check_kind(s.bnd, v_star);
    WeightFn wf(b.op->motion);
    const double scale = control_scale(b.op->motion, vstar_norm > 0 ? vstar_norm : v_star.values.norm() / std::sqrt(
                                                                                        std::max(1, s.bnd.size())));

    FlowState st;
    st.basis = bp;
    st.v_star = v_star;
    Vec vbar = warm ? warm->v : Vec();
    Vec6 gbar = warm ? warm->gamma : Vec6::Zero();
    int growth = 0;
    bool done = false;
    LinearStep step;
    for (int it = 0; it < o.max_iter; ++it) {
        step = linear_step(b, vbar, gbar, v_star.values);
        Vec dv = vbar.size() ? Vec(step.v - vbar) : step.v;
        double d = state_metric(s, wf, dv, step.gamma - gbar);
        if (!st.increments.empty()) {
            double r = d / std::max(st.increments.back(), 1e-300);
            st.ratios.push_back(r);
            growth = r >= 1.0 ? growth + 1 : 0;
        }
        st.increments.push_back(d);
        vbar = step.v;
        gbar = step.gamma;
        st.iterations = it + 1;
        if (d <= o.tol * scale) {
            done = true;
            break;
        }
        if (growth >= o.max_growth) {
            std::ostringstream os;
            os << "fixed-point iteration is not contracting (increments";
            for (double x : st.increments)
                os << ' ' << x;
            os << "); reduce |v_*| or the motion";
            throw Error(ErrorCode::convergence, os.str());
        }
    }
    if (!done) {
        std::ostringstream os;
        os << "fixed-point iteration did not reach tolerance " << o.tol << " in " << o.max_iter
           << " iterations (last increment " << st.increments.back() << ")";
        throw Error(ErrorCode::convergence, os.str());
    }
    st.v = step.v;
    st.p = step.p;
    st.lambda = step.lambda;
    st.gamma = step.gamma;
    st.v_star_C.kind = b.kind;
    st.v_star_C.values = b.corrector(st.gamma);
    st.J = drag(st);
    st.residuals = self_propulsion_residual(st, scale);
    return st;
}

Vec state_traction(const FlowState& st)
{
    const OseenOperator& op = *st.basis->op;
    const MixedSpace& s = *op.space;
    Vec r = op.K * st.v + s.Bd.transpose() * st.p + convection(s, st.v);
    return s.trace(r);
}

double drag(const FlowState& st)
{
    const OseenOperator& op = *st.basis->op;
    const MixedSpace& s = *op.space;
    Vec sv = st.v_star.values + st.v_star_C.values;
    return st.v.dot(s.Kd * st.v) + drag_boundary_term(s, sv, op.motion);
}

double boundary_work(const FlowState& st)
{
    const MixedSpace& s = *st.basis->op->space;
    return state_traction(st).dot(s.trace(st.v));
}

ResidualReport self_propulsion_residual(const FlowState& st, double scale)
{
    const OseenOperator& op = *st.basis->op;
    const MixedSpace& s = *op.space;
    const RigidMotion& m = op.motion;
    Vec sv = st.v_star.values + st.v_star_C.values;
    ResidualReport rep;
    rep.scale = scale;
    Vec full = op.K * st.v + s.Bd.transpose() * st.p + convection(s, st.v);
    double mom = 0;
    for (int d : s.interior_dofs)
        mom = std::max(mom, std::abs(full[d]));
    rep.momentum = mom;
    Vec T = s.trace(full);
    Vec6 st_force = force_torque(s, T);
    Vec6 bal = inertial_terms(s, m) - st_force + flux_transport(s, sv, m);
    rep.force_balance = bal.head<3>().norm() / scale;
    rep.torque_balance = bal.tail<3>().norm() / scale;

    // momentum-flux form with v = V + s on the body
    Vec6 N = st_force;
    body_quadrature(s.bnd, [&](const BodyPoint& p) {
        Vec3 svq;
        double sn;
        trace_at(s.bnd, p, sv, svq, sn);
        Vec3 V = m(p.x);
        Vec3 v = V + svq;
        double Vn = V.dot(p.n);
        double vn = Vn + sn;
        Vec3 a = p.w * (v * Vn - m.omega.cross(p.x) * vn - v * vn);
        N.head<3>() += a;
        N.tail<3>() += p.x.cross(a);
    });
    rep.net_force = N.head<3>().norm() / scale;
    rep.net_torque = N.tail<3>().norm() / scale;
    rep.flux = nodal_flux(s.bnd, s.trace(st.v));
    return rep;
}

double weak_form_residual(const FlowState& st, const Vec3& l, const Vec3& k, const Vec& interior_part)
{
    const OseenOperator& op = *st.basis->op;
    const MixedSpace& s = *op.space;
    const RigidMotion& m = op.motion;
    Vec w = Vec::Zero(s.n_u);
    if (interior_part.size())
        for (int d : s.interior_dofs)
            w[d] = interior_part[d];
    Vec tr = s.interpolate_trace([&](const Vec3& x) { return Vec3(l + k.cross(x)); });
    for (int j = 0; j < s.bnd.size(); ++j)
        w.segment<3>(3 * s.bnd.nodes[j]) = tr.segment<3>(3 * j);
    Vec full = op.K * st.v + s.Bd.transpose() * st.p + convection(s, st.v);
    Vec sv = st.v_star.values + st.v_star_C.values;
    Vec6 rhs = inertial_terms(s, m) + flux_transport(s, sv, m);
    return w.dot(full) - l.dot(rhs.head<3>()) - k.dot(rhs.tail<3>());
}

} // namespace selfprop
