#include <doctest.h>

#include "selfprop/geometry.hpp"
#include "selfprop/quadrature.hpp"
#include "selfprop/weight.hpp"

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

using namespace selfprop;
using std::numbers::pi;

TEST_CASE("rigid velocity examples")
{
    RigidMotion m{{1, 0, 0}, {0, 0, 0}};
    CHECK((rigid_velocity(m, {5, 5, 5}) - Vec3(1, 0, 0)).norm() == 0.0);
    m = {{0, 0, 0}, {0, 0, 1}};
    CHECK((rigid_velocity(m, {1, 0, 0}) - Vec3(0, 1, 0)).norm() == 0.0);
    m = {{1, 0, 0}, {0, 0, 1}};
    CHECK(rigid_velocity(m, {0, 1, 0}).norm() == 0.0);
}

TEST_CASE("rigid velocity is linear and has zero symmetric gradient")
{
    std::mt19937 rng(3);
    std::normal_distribution<double> n;
    auto rv = [&] { return Vec3(n(rng), n(rng), n(rng)); };
    for (int t = 0; t < 20; ++t) {
        RigidMotion a{rv(), rv()}, b{rv(), rv()};
        const double s = n(rng), r = n(rng);
        RigidMotion c{s * a.xi + r * b.xi, s * a.omega + r * b.omega};
        const Vec3 x = rv();
        CHECK((c(x) - (s * a(x) + r * b(x))).norm() < 1e-13);
        CHECK((a(Vec3::Zero()) - a.xi).norm() == 0.0);
        Mat3 G;
        const double h = 1e-4;
        for (int j = 0; j < 3; ++j) {
            Vec3 e = Vec3::Zero();
            e[j] = h;
            G.col(j) = (a(x + e) - a(x - e)) / (2 * h);
        }
        CHECK((0.5 * (G + G.transpose())).norm() < 1e-10);
    }
}

TEST_CASE("weight examples")
{
    CHECK(WeightFn(RigidMotion{})(Vec3(3, 0, 0)) == doctest::Approx(4.0));
    CHECK(WeightFn(RigidMotion{{1, 0, 0}, {0, 0, 0}})(Vec3(-3, 0, 0)) == doctest::Approx(4.0));
    CHECK(WeightFn(RigidMotion{{1, 0, 0}, {1, 0, 0}})(Vec3(1, 0, 0)) == doctest::Approx(10.0));
}

TEST_CASE("weight bounded below, continuous, and its omega -> 0 limit")
{
    std::mt19937 rng(5);
    std::normal_distribution<double> n;
    auto rv = [&] { return Vec3(n(rng), n(rng), n(rng)); };
    for (int t = 0; t < 200; ++t) {
        RigidMotion m{rv(), t % 2 ? rv() : Vec3::Zero()};
        WeightFn w(m);
        const Vec3 x = 3 * rv();
        CHECK(w(x) >= 1.0);
        CHECK(std::abs(w(x + Vec3(1e-9, 0, 0)) - w(x)) < 1e-6 * w(x));
    }
    const Vec3 xi(0.3, -0.2, 0.5);
    const Vec3 x(1.5, 0.7, -2.0);
    const double limit = (1 + x.norm()) * (1 + 2 * (xi.norm() * x.norm() + xi.dot(x)));
    for (double eps : {1e-1, 1e-2, 1e-3, 1e-4}) {
        WeightFn w(RigidMotion{xi, eps * xi});
        CHECK(std::abs(w(x) - limit) / limit < 1e-12);
    }
}

namespace {
double monomial_exact_tet(int a, int b, int c)
{
    auto fact = [](int k) { double r = 1; for (int i = 2; i <= k; ++i) r *= i; return r; };
    return fact(a) * fact(b) * fact(c) / fact(a + b + c + 3);
}
double monomial_exact_tri(int a, int b)
{
    auto fact = [](int k) { double r = 1; for (int i = 2; i <= k; ++i) r *= i; return r; };
    return fact(a) * fact(b) / fact(a + b + 2);
}
} // namespace

TEST_CASE("tetrahedral rules integrate monomials exactly up to their degree")
{
    for (int deg : {1, 2, 5}) {
        const TetRule& r = tet_rule(deg);
        for (int a = 0; a <= deg; ++a)
            for (int b = 0; a + b <= deg; ++b)
                for (int c = 0; a + b + c <= deg; ++c) {
                    double s = 0;
                    for (std::size_t k = 0; k < r.w.size(); ++k)
                        s += r.w[k] / 6.0 * std::pow(r.bary[k][1], a) * std::pow(r.bary[k][2], b) *
                             std::pow(r.bary[k][3], c);
                    CHECK(s == doctest::Approx(monomial_exact_tet(a, b, c)).epsilon(1e-13));
                }
    }
}

TEST_CASE("triangle rules integrate monomials exactly up to their degree")
{
    for (int deg : {1, 2, 5}) {
        const TriRule& r = tri_rule(deg);
        for (int a = 0; a <= deg; ++a)
            for (int b = 0; a + b <= deg; ++b) {
                double s = 0;
                for (std::size_t k = 0; k < r.w.size(); ++k)
                    s += r.w[k] / 2.0 * std::pow(r.bary[k][1], a) * std::pow(r.bary[k][2], b);
                CHECK(s == doctest::Approx(monomial_exact_tri(a, b)).epsilon(1e-13));
            }
    }
}

TEST_CASE("gauss legendre")
{
    for (int n : {1, 5, 12, 32}) {
        const GaussRule& g = gauss_legendre(n);
        for (int p = 0; p < 2 * n; ++p) {
            double s = 0;
            for (int k = 0; k < n; ++k)
                s += g.w[k] * std::pow(g.x[k], p);
            const double ex = p % 2 ? 0.0 : 2.0 / (p + 1);
            CHECK(s == doctest::Approx(ex).epsilon(1e-13).scale(1));
        }
    }
}

TEST_CASE("body integrals of the unit ball")
{
    auto s = icosphere(4, 1.0, nullptr);
    const BodyIntegrals bi = body_integrals(s);
    CHECK(std::abs(bi.mass - 4 * pi / 3) / (4 * pi / 3) < 0.01);
    const Mat3 Iex = 8 * pi / 15 * Mat3::Identity();
    CHECK((bi.inertia - Iex).norm() / Iex.norm() < 0.01);
    CHECK((bi.inertia - bi.inertia.transpose()).norm() < 1e-14);
    CHECK(bi.centroid.norm() < 1e-12);
    Eigen::SelfAdjointEigenSolver<Mat3> es(bi.inertia);
    CHECK(es.eigenvalues().minCoeff() > 0);
}

TEST_CASE("body validation errors")
{
    auto s = icosphere(1, 1.0, nullptr);
    SUBCASE("translated body fails the centroid check")
    {
        auto t = s;
        for (auto& v : t.verts)
            v += Vec3(0.5, 0, 0);
        CHECK_THROWS_AS(make_body(t, 1), Error);
        BodyGeometry b = make_body(t, 1, 0, false);
        CHECK_FALSE(b.centroid_ok());
    }
    SUBCASE("open surface")
    {
        auto t = s;
        t.tris.pop_back();
        t.tags.pop_back();
        CHECK_THROWS_AS(check_closed_oriented(t), Error);
    }
    SUBCASE("inverted surface")
    {
        auto t = s;
        for (auto& tr : t.tris)
            std::swap(tr[1], tr[2]);
        CHECK_THROWS_AS(check_closed_oriented(t), Error);
    }
}

TEST_CASE("gamma bump")
{
    auto s = icosphere(2, 1.0, [](const Vec3& c) { return std::abs(c[0]) > 0.3; });
    BodyGeometry b = make_body(s, 1, 1.0);
    CHECK_FALSE(b.chi_degenerate());
    double mx = 0;
    for (std::size_t v = 0; v < b.chi.size(); ++v) {
        CHECK(b.chi[v] >= 0.0);
        mx = std::max(mx, b.chi[v]);
    }
    CHECK(mx == doctest::Approx(1.0));
    for (std::size_t f = 0; f < b.surface.tris.size(); ++f)
        if (!b.gamma[f])
            for (int v : b.surface.tris[f])
                CHECK(b.chi[v] == 0.0);
    // mirror symmetry x1 -> -x1
    for (std::size_t v = 0; v < b.surface.verts.size(); ++v) {
        Vec3 m = b.surface.verts[v];
        m[0] = -m[0];
        for (std::size_t w = 0; w < b.surface.verts.size(); ++w)
            if ((b.surface.verts[w] - m).norm() < 1e-12)
                CHECK(b.chi[w] == doctest::Approx(b.chi[v]).epsilon(1e-12));
    }
}

TEST_CASE("body file round trip and refinement")
{
    auto s = icosphere(1, 1.0, [](const Vec3& c) { return c[0] > 0.5; });
    BodyGeometry b = make_body(s, 1, 1.0);
    const auto path = std::filesystem::temp_directory_path() / "selfprop_body_rt.surf";
    save_body(path.string(), b);
    BodyGeometry c = load_body(path.string(), 1);
    CHECK(c.surface.tris.size() == b.surface.tris.size());
    CHECK(c.sphere_radius == 1.0);
    CHECK(c.mass == doctest::Approx(b.mass).epsilon(1e-14));
    BodyGeometry r = refine_body(c, 2);
    CHECK(r.surface.tris.size() == 16 * c.surface.tris.size());
    for (const auto& v : r.surface.verts)
        CHECK(v.norm() == doctest::Approx(1.0));
    std::filesystem::remove(path);
}
