#include <doctest.h>

#include "selfprop/spectral.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace selfprop;
using std::numbers::pi;

namespace {

ForcingPair random_forcing(unsigned seed, int ng, int nG, double rad = 1.0)
{
    std::mt19937 rng(seed);
    std::normal_distribution<double> n;
    std::uniform_real_distribution<double> u(0.8, 1.1);
    ForcingPair f;
    for (int i = 0; i < ng; ++i)
        f.g.push_back({rad * Vec3(n(rng), n(rng), n(rng)) / 2, u(rng), Vec3(n(rng), n(rng), n(rng))});
    for (int i = 0; i < nG; ++i) {
        Mat3 A;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c)
                A(r, c) = n(rng);
        f.G.push_back({rad * Vec3(n(rng), n(rng), n(rng)) / 2, u(rng), A});
    }
    return f;
}

} // namespace

TEST_CASE("mozzi-chasles examples")
{
    auto f = mozzi_chasles({{2, 0, 0}, {1, 0, 0}});
    CHECK((f.M - Mat3::Identity()).norm() < 1e-15);
    CHECK(f.shift.norm() == 0.0);
    CHECK(f.R == doctest::Approx(2.0));
    f = mozzi_chasles({{0, 0, 0}, {0, 0, 1}});
    CHECK((f.M * Vec3(0, 0, 1) - Vec3(1, 0, 0)).norm() < 1e-12);
    CHECK(f.R == 0.0);
    f = mozzi_chasles({{1, 0, 0}, {0, 0, 1}});
    CHECK((f.shift - Vec3(0, 1, 0)).norm() < 1e-15);
    CHECK(f.R == 0.0);
    CHECK_THROWS_AS(mozzi_chasles({{1, 0, 0}, {0, 0, 1e-9}}), Error);

    std::mt19937 rng(1);
    std::normal_distribution<double> n;
    for (int t = 0; t < 50; ++t) {
        RigidMotion m{{n(rng), n(rng), n(rng)}, {n(rng), n(rng), n(rng)}};
        auto fr = mozzi_chasles(m);
        CHECK((fr.M.transpose() * fr.M - Mat3::Identity()).norm() < 1e-12);
        CHECK((fr.M * m.omega.normalized() - Vec3::UnitX()).norm() < 1e-12);
        CHECK(fr.M.determinant() == doctest::Approx(1.0));
        // translation of the transformed motion is parallel to the axis
        const Vec3 V0 = m.xi + m.omega.cross(fr.shift);
        CHECK((fr.M * V0 - Vec3(fr.R, 0, 0)).norm() < 1e-12);
    }
}

TEST_CASE("oseen fourier solve examples")
{
    const Vec3 xi(0.3, -0.1, 0.2);
    const Vec3 z(0.5, 1.0, -0.7);
    CVec3 grad = z.cast<cplx>() * cplx(0.3, 1.7);
    CHECK(oseen_mode(z, grad, xi).norm() < 1e-15);
    const Vec3 e = z.cross(Vec3(1, 0, 0)).normalized();
    const CVec3 v = oseen_mode(z, e.cast<cplx>(), Vec3::Zero());
    CHECK((v - e.cast<cplx>() / z.squaredNorm()).norm() < 1e-15);
}

TEST_CASE("oseen residual on a random solenoidal field")
{
    SpectralGrid g(6.0, 32);
    std::mt19937 rng(7);
    std::normal_distribution<double> n;
    SpectralField phys(g.size());
    for (auto& p : phys)
        p = CVec3(n(rng), n(rng), n(rng));
    SpectralField fh = to_fourier(g, phys);
    for (std::size_t q = 0; q < g.size(); ++q) {
        const Vec3 z = g.zeta(q);
        if (z.squaredNorm() > 0) {
            const cplx zf = z[0] * fh[q][0] + z[1] * fh[q][1] + z[2] * fh[q][2];
            fh[q] -= z.cast<cplx>() * (zf / z.squaredNorm());
        }
    }
    const Vec3 xi(1.0, 0.5, -0.25);
    const SpectralField vh = oseen_fourier_solve(g, fh, xi);
    CHECK(oseen_residual(g, fh, vh, xi) < 1e-10);
}

TEST_CASE("transform round trip and plancherel")
{
    SpectralGrid g(5.0, 16);
    std::mt19937 rng(9);
    std::normal_distribution<double> n;
    SpectralField phys(g.size());
    for (auto& p : phys)
        p = CVec3(n(rng), n(rng), n(rng));
    const SpectralField h = to_fourier(g, phys);
    const SpectralField back = to_physical(g, h);
    double e = 0, a = 0, b = 0;
    for (std::size_t q = 0; q < g.size(); ++q) {
        e = std::max(e, (back[q] - phys[q]).norm());
        a += phys[q].squaredNorm() * std::pow(g.dy(), 3);
        b += h[q].squaredNorm() / std::pow(2 * g.L(), 3);
    }
    CHECK(e < 1e-12);
    CHECK(std::abs(a - b) / a < 1e-10);
}

TEST_CASE("gaussian atom transform matches the lattice FFT")
{
    SpectralGrid g(8.0, 48);
    ForcingPair f = random_forcing(11, 2, 2);
    SpectralField phys(g.size());
    for (std::size_t q = 0; q < g.size(); ++q)
        phys[q] = f.f_at(g.y(q)).cast<cplx>();
    const SpectralField h = to_fourier(g, phys);
    double e = 0, m = 0;
    for (std::size_t q = 0; q < g.size(); ++q) {
        if (g.nyquist(q))
            continue;
        e = std::max(e, (h[q] - f.f_hat(g.zeta(q))).norm());
        m = std::max(m, h[q].norm());
    }
    CHECK(e / m < 1e-8);
}

TEST_CASE("rotating solve: zero forcing, closed forms, divergence")
{
    RotQuad q;
    ForcingPair zero;
    FourierForcing fz = [&](const Vec3& z) { return zero.f_hat(z); };
    CHECK(rot_oseen_mode({0.3, 0.2, 0.1}, {0.5, 0, 0}, 1.0, fz, q).v.norm() == 0.0);

    ForcingPair axi;
    axi.g.push_back({{0.7, 0, 0}, 0.9, {1, 0, 0}});
    FourierForcing fa = [&](const Vec3& z) { return axi.f_hat(z); };
    q.phase_extent = 0.7;
    std::mt19937 rng(2);
    std::normal_distribution<double> n;
    for (double w : {0.25, 1.0, 4.0})
        for (int t = 0; t < 20; ++t) {
            const Vec3 z(n(rng), n(rng), n(rng));
            const CVec3 v = rot_oseen_mode(z, {0.5, 0, 0}, w, fa, q).v;
            const CVec3 c = axisymmetric_closed_form(z, axi.f_hat(z)[0], 0.5);
            CHECK((v - c).norm() <= 1e-8 * std::max(1.0, c.norm()));
            CHECK(std::abs(z[0] * v[0] + z[1] * v[1] + z[2] * v[2]) <= 1e-10 * v.norm());
        }

    const CVec3 g0(0.0, 0.7, -0.4);
    FourierForcing fc = [&](const Vec3&) { return g0; };
    for (int t = 0; t < 20; ++t) {
        const Vec3 z = 0.5 * Vec3(n(rng), n(rng), n(rng));
        const CVec3 v = rot_oseen_mode(z, {0.5, 0, 0}, 1.3, fc, RotQuad{}).v;
        const CVec3 c = transverse_closed_form(z, g0, 0.5, 1.3);
        CHECK((v - c).norm() <= 1e-8 * c.norm());
    }
}

TEST_CASE("frame equivariance for rotation about e1")
{
    // original system with xi not parallel to omega = w e1, versus the
    // shifted canonical system with translation R e1
    const RigidMotion m{{0.4, 0.6, -0.3}, {1.2, 0, 0}};
    const MozziChaslesFrame fr = mozzi_chasles(m);
    CHECK((fr.M - Mat3::Identity()).norm() < 1e-15);
    ForcingPair f = random_forcing(21, 2, 1);
    ForcingPair fc = f.transformed(fr.M, fr.shift);
    RotQuad q;
    q.phase_extent = std::max(f.max_center(), fc.max_center()) + 1.0;
    FourierForcing fo = [&](const Vec3& z) { return f.f_hat(z); };
    FourierForcing fm = [&](const Vec3& z) { return fc.f_hat(z); };
    std::mt19937 rng(4);
    std::normal_distribution<double> n;
    for (int t = 0; t < 20; ++t) {
        const Vec3 z = Vec3(n(rng), n(rng), n(rng));
        const CVec3 vo = rot_oseen_mode(z, m.xi, 1.2, fo, q).v;
        const CVec3 vc = rot_oseen_mode(z, {fr.R, 0, 0}, 1.2, fm, q).v;
        const CVec3 back = std::exp(cplx(0, -z.dot(fr.shift))) * vc;
        CHECK((vo - back).norm() <= 1e-8 * std::max(1e-3, vo.norm()));
    }
}

TEST_CASE("rotating residual on the lattice")
{
    SpectralGrid g(8.0, 32);
    ForcingPair f = random_forcing(5, 2, 1);
    const double r = rot_oseen_residual(g, f, 0.5, 1.0);
    CHECK(r < 1e-6);
    const auto rep = rot_oseen_fourier_solve(g, f, 0.5, 1.0);
    CHECK(rep.max_err < 1e-9);
    // plancherel for the computed velocity
    const SpectralField v = to_physical(g, rep.vhat);
    double a = 0, b = 0;
    for (std::size_t q = 0; q < g.size(); ++q) {
        a += v[q].squaredNorm() * std::pow(g.dy(), 3);
        b += rep.vhat[q].squaredNorm() / std::pow(2 * g.L(), 3);
    }
    CHECK(std::abs(a - b) / b < 1e-10);
}

TEST_CASE("J+- integral")
{
    CHECK(radial_reference_integral() == doctest::Approx(pi / (2 * std::sqrt(2.0))).epsilon(1e-12));
    for (double w : {0.5, 1.0, 3.0}) {
        const JpmResult r = jpm_integral(0.0, w);
        // independent composite Simpson of 4 pi rho^2 / (rho^4 + w^2) on [0, 1]
        const int n = 20000;
        double s = 0;
        for (int i = 0; i <= n; ++i) {
            const double rho = double(i) / n;
            const double c = (i == 0 || i == n) ? 1 : (i % 2 ? 4 : 2);
            s += c * 4 * pi * rho * rho / (std::pow(rho, 4) + w * w);
        }
        s /= 3.0 * n;
        CHECK(r.plus == doctest::Approx(s).epsilon(1e-9));
        CHECK(r.minus == doctest::Approx(r.plus).epsilon(1e-12));
        CHECK(r.full_plus == doctest::Approx(std::sqrt(2.0) * pi * pi / std::sqrt(w)).epsilon(1e-8));
    }
    const double a = jpm_integral(0.0, 4.0).full_plus, b = jpm_integral(0.0, 1.0).full_plus;
    CHECK(a / b <= 0.5 * (1 + 1e-9));
    double prev = 1e300;
    for (double w : {0.1, 0.5, 1.0, 4.0, 10.0}) {
        const double v = jpm_integral(0.0, w).plus;
        CHECK(v <= prev);
        prev = v;
    }
    // growth at most linear in |R| / |omega|
    double first = jpm_integral(1.0, 1.0).full_plus;
    for (double R : {2.0, 4.0, 8.0, 16.0}) {
        const double v = jpm_integral(R, 1.0).full_plus;
        CHECK(v <= first * R * 1.01);
    }
}

TEST_CASE("k quantity")
{
    const RigidMotion m{{0, 0, 1}, {0, 0, 1}};
    CHECK(k_quantity({1, 1, 1}, 0.0, m) == doctest::Approx(15.0));
    CHECK(k_quantity({2, 2, 2}, 0.0, m) == doctest::Approx(30.0));
    const RigidMotion p{{0, 0, 2}, {0, 0, 3}};
    const double K = k_quantity({1, 0, 0}, 0.0, p);
    const double pre = 1 + std::pow(3.0, -0.25) + std::sqrt(6.0) / 3.0;
    CHECK(K == doctest::Approx(pre * 6.0));
}

TEST_CASE("flux carrier")
{
    BodyGeometry b = make_body(icosphere(3, 1.0, nullptr), 1, 1.0);
    CHECK_THROWS_AS(flux_lift(1.0, {2, 0, 0}, b), Error);
    const FluxCarrier z = flux_lift(0.0, {0.1, 0, 0}, b);
    CHECK(z({2, 1, 0}).norm() == 0.0);
    const FluxCarrier W = flux_lift(1.7, {0.1, -0.2, 0.05}, b);
    for (const Vec3& x : {Vec3(2, 0, 0), Vec3(-1, 3, 1), Vec3(0.5, 0.5, -2)}) {
        double div = 0;
        const double h = 1e-4;
        for (int j = 0; j < 3; ++j) {
            Vec3 e = Vec3::Zero();
            e[j] = h;
            div += (W(x + e)[j] - W(x - e)[j]) / (2 * h);
        }
        CHECK(std::abs(div) < 1e-8);
        CHECK(std::abs(W.gradient(x).trace()) < 1e-14);
    }
    // flux through the body surface with the fluid-domain normal
    double flux = 0;
    const auto& s = b.surface;
    for (std::size_t f = 0; f < s.tris.size(); ++f) {
        const auto& t = s.tris[f];
        const Vec3 c = (s.verts[t[0]] + s.verts[t[1]] + s.verts[t[2]]) / 3.0;
        flux += W(c).dot(s.normal(static_cast<int>(f))) * s.area(static_cast<int>(f));
    }
    CHECK(flux == doctest::Approx(1.7).epsilon(0.02));
}

TEST_CASE("L2 bound check")
{
    ForcingPair G;
    Mat3 A;
    A << 1, 0.2, 0, -0.3, 0.5, 0.1, 0, 0.4, -0.7;
    G.G.push_back({{0.2, -0.1, 0.3}, 0.8, A});
    L2Options o;
    o.n_mu = 16;
    o.n_phi = 16;
    std::vector<double> ratios;
    for (int N : {32, 48, 64}) {
        SpectralGrid g(8.0, N);
        const L2Report r = l2_bound_check(g, G, RigidMotion{}, o);
        CHECK(std::isfinite(r.ratio));
        CHECK(r.ratio > 0);
        ratios.push_back(r.ratio);
    }
    CHECK(ratios[2] == doctest::Approx(ratios[0]).epsilon(0.01));

    ForcingPair bad;
    bad.g.push_back({{0, 0, 0}, 0.8, {1, 0, 0}});
    SpectralGrid g(8.0, 16);
    CHECK_THROWS_AS(l2_bound_check(g, bad, RigidMotion{}, o), Error);
    CHECK_THROWS_AS(l2_bound_check(g, bad, RigidMotion{{0, 0, 0}, {1, 0, 0}}, o), Error);
    // transverse mean is admissible when rotating
    ForcingPair tr;
    tr.g.push_back({{0, 0, 0}, 0.5, {0, 1, 0}});
    const L2Report r = l2_bound_check(g, tr, RigidMotion{{0, 0, 0}, {1, 0, 0}}, o);
    CHECK(r.I1 == doctest::Approx(r.I1_closed).epsilon(1e-6));
    CHECK(std::isfinite(r.ratio));
}
