#include "selfprop/basis.hpp"
#include "selfprop/state.hpp"
#include "selfprop/trace.hpp"

#include "fixtures.hpp"

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <numbers>

using namespace selfprop;
using fixtures::random_vec;
using fixtures::sphere_space;

namespace {

constexpr double pi = std::numbers::pi;

std::shared_ptr<const OseenOperator> make_op(std::shared_ptr<const MixedSpace> sp, RigidMotion m)
{
    return std::make_shared<const OseenOperator>(assemble_oseen(sp, m));
}

double concentric_K(double k) // drag factor of a unit sphere inside a sphere of radius 1/k
{
    return (1 - std::pow(k, 5)) / (1 - 2.25 * k + 2.5 * std::pow(k, 3) - 2.25 * std::pow(k, 5) + std::pow(k, 6));
}

} // namespace

TEST_CASE("trace kinds and projections")
{
    auto sp = sphere_space(4.0, 0.5);
    const BoundarySpace& b = sp->bnd;
    Vec v = random_vec(b.dofs(), 3);
    Vec t = project_kind(b, TraceKind::tangential, v);
    CHECK(normal_violation(b, t) < 1e-12);
    Vec l = project_kind(b, TraceKind::localized, v);
    CHECK(gamma_violation(b, l) == 0.0);
    CHECK_NOTHROW(check_kind(b, {t, TraceKind::tangential}));
    CHECK_THROWS_AS(check_kind(b, {v, TraceKind::tangential}), Error);
    CHECK_THROWS_AS(parse_kind("normal"), Error);
    CHECK(parse_kind("localized") == TraceKind::localized);
}

TEST_CASE("surrogate trace norm, ball projection and Riesz maps")
{
    auto sp = sphere_space(4.0, 0.5);
    const BoundarySpace& b = sp->bnd;
    TraceNorm tn(b);
    const Mat& H = tn.scalar_matrix();
    CHECK((H - H.transpose()).norm() <= 1e-10 * H.norm());
    CHECK(tn.eigenvalues().minCoeff() > -1e-8);

    // constants only see the L2 part
    Vec c = Vec::Zero(b.dofs());
    for (int j = 0; j < b.size(); ++j)
        c.segment<3>(3 * j) = Vec3(1, 2, -1);
    CHECK(tn.norm(c) * tn.norm(c) == doctest::Approx(6.0 * b.area).epsilon(1e-8));

    Vec v = random_vec(b.dofs(), 5);
    double nv = tn.norm(v);
    Vec pin = project_ball(tn, v, 2 * nv);
    CHECK((pin - v).norm() == 0.0);
    Vec pout = project_ball(tn, v, 0.5 * nv);
    CHECK(tn.norm(pout) == doctest::Approx(0.5 * nv).epsilon(1e-12));
    CHECK(pout.dot(tn.apply(v)) == doctest::Approx(0.5 * nv * nv).epsilon(1e-10));
    CHECK_THROWS_AS(project_ball(tn, v, 0.0), Error);

    for (TraceKind k : {TraceKind::tangential, TraceKind::localized, TraceKind::general}) {
        AdmissibleSpace as(b, tn, k);
        Vec ell = random_vec(b.dofs(), 7);
        Vec r = as.riesz(ell);
        Vec g = as.density(ell);
        Vec d = as.basis() * random_vec(static_cast<int>(as.basis().cols()), 9);
        CHECK(tn.inner(d, r) == doctest::Approx(d.dot(ell)).epsilon(1e-9));
        CHECK(b.inner(d, g) == doctest::Approx(d.dot(ell)).epsilon(1e-9));
        CHECK((project_kind(b, k, r) - r).norm() <= 1e-10 * r.norm());
    }
}

TEST_CASE("rigid tractions of the basic motions at rest")
{
    const double R = 4.0;
    auto sp = sphere_space(R, 0.5);
    auto op = make_op(sp, {});
    PropulsionBasis pb = build_basis(op, TraceKind::tangential);
    const BoundarySpace& b = sp->bnd;
    double drag = 6 * pi * concentric_K(1 / R);
    double torque = 8 * pi / (1 - std::pow(1 / R, 3));
    for (int i = 0; i < 3; ++i) {
        Vec3 F = b.integral(pb.g[i]);
        Vec3 Tq = b.moment(pb.g[3 + i]);
        CHECK(F[i] == doctest::Approx(drag).epsilon(0.03));
        CHECK(Tq[i] == doctest::Approx(torque).epsilon(0.1));
        CHECK(F.norm() == doctest::Approx(std::abs(F[i])).epsilon(1e-3));
    }
    // parity: translations and rotations decouple on a centrally symmetric body
    double off = pb.A.block<3, 3>(0, 3).norm() + pb.A.block<3, 3>(3, 0).norm();
    CHECK(off <= 0.02 * pb.A.norm());
}

TEST_CASE("propulsion basis invariants under motion")
{
    auto sp = sphere_space(4.0, 0.5);
    RigidMotion m{Vec3(0.1, 0.0, 0.02), Vec3(0.0, 0.0, 0.05)};
    auto op = make_op(sp, m);
    const BoundarySpace& b = sp->bnd;

    PropulsionBasis tb = build_basis(op, TraceKind::tangential);
    for (const Vec& f : tb.fields)
        CHECK(normal_violation(b, f) <= 1e-10);
    // Gram matrix of the fields is positive definite
    Mat6 G;
    for (int i = 0; i < 6; ++i)
        for (int k = 0; k < 6; ++k)
            G(i, k) = b.inner(tb.fields[i], tb.fields[k]);
    CHECK(Eigen::SelfAdjointEigenSolver<Mat6>(G).eigenvalues().minCoeff() > 0.0);

    // reciprocity: the balance rows of the lifted flows reproduce -A
    for (int k = 0; k < 6; ++k) {
        Vec T = traction_functional(*op, tb.lifts[k], Vec());
        Vec6 lhs = balance_lhs(tb, T, sp->trace(tb.lifts[k].u));
        CHECK((lhs + tb.A.col(k)).norm() <= 1e-8 * tb.A.norm());
    }

    PropulsionBasis lb = build_basis(op, TraceKind::localized);
    for (const Vec& f : lb.fields)
        CHECK(gamma_violation(b, f) == 0.0);
    Vec chi2 = 2.0 * lb.chi;
    PropulsionBasis lb2 = build_basis(op, TraceKind::localized, chi2);
    CHECK((lb2.A - 2.0 * lb.A).norm() <= 1e-10 * lb.A.norm());
    CHECK_THROWS_AS(build_basis(op, TraceKind::localized, Vec(Vec::Zero(b.size()))), Error);

    // cache round trip
    auto path = std::filesystem::temp_directory_path() / "selfprop_basis_test.bin";
    save_basis(path.string(), tb);
    PropulsionBasis rb = load_basis(path.string(), op);
    CHECK((rb.A - tb.A).cwiseAbs().maxCoeff() <= 1e-14 * tb.A.cwiseAbs().maxCoeff());
    for (int k = 0; k < 6; ++k)
        CHECK(rb.fields[k] == tb.fields[k]);
    auto other = make_op(sp, RigidMotion{Vec3(0.2, 0, 0), Vec3::Zero()});
    CHECK_THROWS_AS(load_basis(path.string(), other), Error);
    std::filesystem::remove(path);
}
