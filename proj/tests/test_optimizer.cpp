#include "selfprop/optimizer.hpp"

#include "fixtures.hpp"

#include <doctest.h>

using namespace selfprop;
using fixtures::sphere_space;

namespace {

struct Setup {
    std::shared_ptr<const MixedSpace> sp;
    std::shared_ptr<const PropulsionBasis> basis;
    std::unique_ptr<TraceNorm> norm;
    std::unique_ptr<AdmissibleSpace> adm;
};

Setup setup(RigidMotion m, TraceKind k)
{
    Setup s;
    s.sp = sphere_space(4.0, 0.5);
    auto op = std::make_shared<const OseenOperator>(assemble_oseen(s.sp, m));
    s.basis = std::make_shared<const PropulsionBasis>(build_basis(op, k));
    s.norm = std::make_unique<TraceNorm>(s.sp->bnd);
    s.adm = std::make_unique<AdmissibleSpace>(s.sp->bnd, *s.norm, k);
    return s;
}

Vec field(const MixedSpace& sp, TraceKind k)
{
    Vec v = sp.interpolate_trace([](const Vec3& x) { return Vec3(-x[1] + 0.3 * x[0] * x[2], x[0], 0.5 * x[0] * x[1]); });
    return project_kind(sp.bnd, k, v);
}

} // namespace

TEST_CASE("ball projection and Riesz gradient")
{
    auto sp = sphere_space(4.0, 0.5);
    TraceNorm tn(sp->bnd);
    AdmissibleSpace as(sp->bnd, tn, TraceKind::tangential);
    Vec v = field(*sp, TraceKind::tangential);
    const double kappa = 0.1;
    Vec big = v * (2 * kappa / tn.norm(v));
    Vec p = project_ball(tn, big, kappa);
    CHECK(tn.norm(p) == doctest::Approx(kappa).epsilon(1e-12));
    CHECK((p - 0.5 * big).norm() <= 1e-14 * big.norm());
    CHECK((project_ball(tn, p, kappa) - p).norm() <= 1e-14 * p.norm());
    Vec small = 0.5 * p;
    CHECK(project_ball(tn, small, kappa) == small);

    Vec ell = sp->bnd.mass_apply(fixtures::random_vec(sp->bnd.dofs(), 4));
    Vec g = riesz_gradient(as, ell);
    CHECK(tn.inner(g, g) == doctest::Approx(ell.dot(g)).epsilon(1e-10));
    CHECK(normal_violation(sp->bnd, g) <= 1e-10);
    CHECK(std::isfinite(tn.norm(g)));
}

TEST_CASE("variational-inequality residual examples")
{
    auto S = setup({Vec3(0.1, 0, 0), Vec3::Zero()}, TraceKind::tangential);
    const TraceNorm& tn = *S.norm;
    const double kappa = 0.1;
    const int nd = S.sp->bnd.dofs();
    Vec v = field(*S.sp, TraceKind::tangential);

    // zero gradient: stationary everywhere
    Vec F0 = Vec::Zero(nd);
    auto probes = make_probes(*S.basis, tn, *S.adm, Vec::Zero(nd), kappa, 8, 1);
    for (const Vec& q : probes)
        CHECK(tn.norm(q) == doctest::Approx(kappa).epsilon(1e-12));
    CHECK(stationarity_residual(0.3 * kappa / tn.norm(v) * v, F0, tn, Vec::Zero(nd), probes).vi == 0.0);

    // interior point, nonzero gradient: the descent probe witnesses kappa ||g||
    Vec F = S.sp->bnd.mass_apply(v);
    Vec g = riesz_gradient(*S.adm, F);
    probes = make_probes(*S.basis, tn, *S.adm, g, kappa, 8, 1);
    Vec vi = Vec::Zero(nd);
    Stationarity r = stationarity_residual(vi, F, tn, g, probes);
    CHECK(r.vi >= kappa * tn.norm(g) * (1 - 1e-10));
    CHECK(r.riesz_norm == doctest::Approx(tn.norm(g)));

    // boundary point with functional -mu H v_hat: every probe satisfies the inequality
    Vec vh = v * (kappa / tn.norm(v));
    Vec Fb = -2.5 * tn.apply(vh);
    Vec gb = riesz_gradient(*S.adm, Fb);
    probes = make_probes(*S.basis, tn, *S.adm, gb, kappa, 8, 3);
    CHECK(stationarity_residual(vh, Fb, tn, gb, probes).vi <= 1e-14);
    // the opposite sign is not stationary
    CHECK(stationarity_residual(vh, Vec(-Fb), tn, Vec(-gb), probes).vi > 0.0);
}

TEST_CASE("optimizer at rest terminates immediately")
{
    auto S = setup(RigidMotion{}, TraceKind::tangential);
    OptimizerOptions o;
    OptimizationRun run = optimize(S.basis, *S.norm, *S.adm, o);
    CHECK(run.ok);
    CHECK(run.termination == "stationary");
    CHECK(run.J.size() == 1);
    CHECK(run.J[0] == 0.0);
    CHECK(run.stationarity[0] == 0.0);
    o.kappa = -1;
    CHECK_THROWS_AS(optimize(S.basis, *S.norm, *S.adm, o), Error);
}

TEST_CASE("optimizer decreases drag monotonically with Armijo steps")
{
    for (TraceKind k : {TraceKind::tangential, TraceKind::localized}) {
        CAPTURE(kind_name(k));
        auto S = setup({Vec3(0.1, 0, 0), Vec3(0, 0, 0.05)}, k);
        for (int memory : {8, 0}) {
            CAPTURE(memory);
            OptimizerOptions o;
            o.kappa = 0.1;
            o.memory = memory;
            o.max_outer = memory ? 40 : 4;
            int calls = 0;
            OptimizationRun run = optimize(S.basis, *S.norm, *S.adm, o, Vec(), [&](int, const OptimizationRun&) { ++calls; });
            CHECK(calls == static_cast<int>(run.J.size()));
            REQUIRE(run.J.size() >= 2);
            for (std::size_t i = 1; i < run.J.size(); ++i) {
                CHECK(run.J[i] < run.J[i - 1]);
                CHECK(run.norms[i] <= o.kappa * (1 + 1e-12));
            }
            if (memory) {
                CHECK(run.ok);
                CHECK(run.stationarity.back() <= o.tol * run.scale);
            }
            CHECK(run.final_state.residuals.force_balance <= 1e-7);
            CHECK(normal_violation(S.sp->bnd, run.iterates.back()) <= (k == TraceKind::tangential ? 1e-10 : 1e300));
        }
    }
}
