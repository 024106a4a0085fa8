#include "selfprop/state.hpp"

#include "fixtures.hpp"

#include <doctest.h>

using namespace selfprop;
using fixtures::random_interior;
using fixtures::random_vec;
using fixtures::sphere_space;

namespace {

struct Setup {
    std::shared_ptr<const MixedSpace> sp;
    std::shared_ptr<const OseenOperator> op;
    std::shared_ptr<const PropulsionBasis> basis;
};

Setup setup(RigidMotion m, TraceKind k = TraceKind::tangential)
{
    Setup s;
    s.sp = sphere_space(4.0, 0.5);
    s.op = std::make_shared<const OseenOperator>(assemble_oseen(s.sp, m));
    s.basis = std::make_shared<const PropulsionBasis>(build_basis(s.op, k));
    return s;
}

// smooth control: projection of a swirl-and-squirm field
TraceField control(const MixedSpace& sp, TraceKind k, double amp)
{
    Vec v = sp.interpolate_trace([](const Vec3& x) { return Vec3(-x[1] + 0.3 * x[0] * x[2], x[0], 0.5 * x[0] * x[1]); });
    return {amp * project_kind(sp.bnd, k, v), k};
}

} // namespace

TEST_CASE("flux form of the convective forcing")
{
    auto sp = sphere_space(4.0, 0.5);
    // divergence-free quadratic field, exact in P2
    Vec v = sp->interpolate([](const Vec3& x) { return Vec3(x[1] * x[1], x[2] * x[2], x[0] * x[0]); });
    Vec f = rhs_force(*sp, v);
    Vec F = rhs_flux_form(*sp, v);
    double m = 0, scale = f.cwiseAbs().maxCoeff();
    for (int d : sp->interior_dofs)
        m = std::max(m, std::abs(f[d] + F[d]));
    CHECK(m <= 1e-10 * scale);
}

TEST_CASE("propulsion defect and boundary drag derivatives")
{
    auto sp = sphere_space(4.0, 0.5);
    RigidMotion m{Vec3(0.2, 0.0, 0.1), Vec3(0.0, 0.1, 0.05)};
    Vec s = 0.1 * random_vec(sp->bnd.dofs(), 11);
    Vec d = random_vec(sp->bnd.dofs(), 12);
    const double h = 1e-6;
    Vec6 fd = (propulsion_defect(*sp, Vec(s + h * d), m) - propulsion_defect(*sp, Vec(s - h * d), m)) / (2 * h);
    Vec6 an = defect_jacobian(*sp, s, m) * d;
    CHECK((fd - an).norm() <= 1e-7 * an.norm());
    double fj = (drag_boundary_term(*sp, Vec(s + h * d), m) - drag_boundary_term(*sp, Vec(s - h * d), m)) / (2 * h);
    CHECK(fj == doctest::Approx(drag_boundary_gradient(*sp, s, m).dot(d)).epsilon(1e-7));

    // pure translation, no control: no defect
    RigidMotion t{Vec3(0.3, -0.1, 0.2), Vec3::Zero()};
    CHECK(propulsion_defect(*sp, Vec(Vec::Zero(sp->bnd.dofs())), t).norm() <= 1e-12);
}

TEST_CASE("linear step is affine in the defect")
{
    auto S = setup({Vec3(0.1, 0, 0), Vec3(0, 0, 0.05)});
    Vec vs = control(*S.sp, TraceKind::tangential, 0.05).values;
    Vec vbar = 0.01 * random_interior(*S.sp, 4);
    Vec6 r = random_vec(6, 13);
    Vec6 r2 = 2.0 * r;
    Vec6 z = Vec6::Zero();
    auto a0 = linear_step(*S.basis, vbar, Vec6::Zero(), vs, &z);
    auto a1 = linear_step(*S.basis, vbar, Vec6::Zero(), vs, &r);
    auto a2 = linear_step(*S.basis, vbar, Vec6::Zero(), vs, &r2);
    CHECK(((a2.gamma - a0.gamma) - 2.0 * (a1.gamma - a0.gamma)).norm() <= 1e-10 * (a1.gamma - a0.gamma).norm());
}

TEST_CASE("self-propelled state: balance, trace, energy and weak form")
{
    RigidMotion m{Vec3(0.1, 0, 0), Vec3(0, 0, 0.05)};
    for (TraceKind k : {TraceKind::tangential, TraceKind::localized}) {
        CAPTURE(kind_name(k));
        auto S = setup(m, k);
        TraceField vs = control(*S.sp, k, 0.05);
        FlowState st = solve_state(S.basis, vs);
        CHECK(st.iterations < 30);
        for (double r : st.ratios)
            CHECK(r < 1.0);
        const auto& res = st.residuals;
        CHECK(res.force_balance <= 1e-7);
        CHECK(res.torque_balance <= 1e-7);
        CHECK(res.momentum <= 1e-9);
        // trace of v is V + v_* + v_*^C
        Vec Vb = S.sp->interpolate_trace([&](const Vec3& x) { return m(x); });
        CHECK((S.sp->trace(st.v) - Vb - vs.values - st.v_star_C.values).cwiseAbs().maxCoeff() <= 1e-14);
        if (k == TraceKind::tangential) {
            CHECK(normal_violation(S.sp->bnd, st.v_star_C.values) <= 1e-10);
            CHECK(std::abs(nodal_flux(S.sp->bnd, Vec(vs.values + st.v_star_C.values))) <= 1e-12);
        } else {
            CHECK(gamma_violation(S.sp->bnd, st.v_star_C.values) == 0.0);
        }
        // energy identity against the boundary work
        double W = boundary_work(st);
        CHECK(st.J > 0.0);
        CHECK(std::abs(st.J - W) <= 0.02 * std::abs(st.J));
        // weak form with rigid test traces
        double scale = std::abs(W) + 1.0;
        for (int i = 0; i < 6; ++i) {
            Vec3 l = Vec3::Zero(), kk = Vec3::Zero();
            (i < 3 ? l : kk)[i % 3] = 1.0;
            double wr = weak_form_residual(st, l, kk, random_interior(*S.sp, 20 + i));
            CHECK(std::abs(wr) <= 1e-8 * scale);
        }
        // momentum-flux form agrees with the balance
        CHECK(res.net_force <= 1e-3);
        CHECK(res.net_torque <= 1e-3);

        // warm start reaches the same state quickly
        FlowState w = solve_state(S.basis, vs, {}, &st);
        CHECK(w.iterations <= 2);
        CHECK((w.gamma - st.gamma).norm() <= 1e-8);
    }
}

TEST_CASE("state at rest without control is zero; blow-up is reported")
{
    auto S = setup({});
    TraceField z{Vec::Zero(S.sp->bnd.dofs()), TraceKind::tangential};
    FlowState st = solve_state(S.basis, z);
    CHECK(st.v.cwiseAbs().maxCoeff() == 0.0);
    CHECK(st.gamma.norm() == 0.0);
    CHECK(st.J == 0.0);

    TraceField big = control(*S.sp, TraceKind::tangential, 200.0);
    bool threw = false;
    try {
        solve_state(S.basis, big);
    } catch (const Error& e) {
        threw = true;
        CHECK((e.code() == ErrorCode::convergence || e.code() == ErrorCode::numerical));
    }
    CHECK(threw);

    TraceField bad = control(*S.sp, TraceKind::general, 0.1);
    bad.kind = TraceKind::tangential;
    CHECK_THROWS_AS(solve_state(S.basis, bad), Error);
}
