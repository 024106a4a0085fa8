#include "selfprop/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace selfprop {

JpmSweep jpm_sweep(const std::vector<double>& omegas, const std::vector<double>& Rs)
{
    JpmSweep s;
    double lo = 1e300, lo_full = 1e300, hi_full = 0;
    for (double w : omegas)
        for (double R : Rs) {
            const JpmResult r = jpm_integral(R, w);
            JpmSweepRow row{w, R, r.plus, r.minus, r.full_plus, r.bound, r.ratio, r.full_plus / r.bound};
            s.rows.push_back(row);
            s.C = std::max(s.C, row.ratio);
            lo = std::min(lo, row.ratio);
            lo_full = std::min(lo_full, row.ratio_full);
            hi_full = std::max(hi_full, row.ratio_full);
        }
    s.spread = s.C / lo;
    s.spread_full = hi_full / lo_full;
    return s;
}

namespace {

ForcingPair tensor_forcing()
{
    ForcingPair f;
    Mat3 A;
    A << 1, 0.2, 0, -0.3, 0.5, 0.1, 0, 0.4, -0.7;
    f.G.push_back({{0.2, -0.1, 0.3}, 0.8, A});
    return f;
}

ForcingPair dipole_forcing()
{
    ForcingPair f;
    f.g.push_back({{0.4, 0.1, 0}, 0.7, {0.3, 1.0, -0.2}});
    f.g.push_back({{-0.4, -0.1, 0.2}, 0.7, {-0.3, -1.0, 0.2}});
    return f;
}

ForcingPair mixed_forcing()
{
    ForcingPair f = dipole_forcing();
    for (auto& a : f.g)
        a.amp *= 0.5;
    Mat3 A;
    A << 0, 0.6, -0.2, 0.3, 0, 0.5, -0.1, 0.2, 0.4;
    f.G.push_back({{-0.1, 0.3, 0.1}, 0.9, A});
    return f;
}

} // namespace

L2Sweep l2_sweep(const SpectralGrid& g, const L2Options& o)
{
    L2Sweep s;
    const std::vector<std::pair<std::string, ForcingPair>> forcings{
        {"tensor", tensor_forcing()}, {"dipole", dipole_forcing()}, {"mixed", mixed_forcing()}};
    const std::vector<std::pair<std::string, RigidMotion>> motions{
        {"oseen", {{0.5, 0, 0}, {0, 0, 0}}},
        {"screw", {{0.5, 0, 0}, {1, 0, 0}}},
        {"oblique", {{0.3, 0.2, 0}, {0, 0, 2}}}};
    for (const auto& [fl, f] : forcings)
        for (const auto& [ml, m] : motions)
            s.rows.push_back({fl + "/" + ml, m, l2_bound_check(g, f, m, o)});

    ForcingPair tr;
    tr.g.push_back({{0, 0, 0}, 0.5, {0, 1, 0}});
    const std::vector<double> ws{0.25, 1.0, 4.0};
    for (double w : ws) {
        RigidMotion m{{0, 0, 0}, {w, 0, 0}};
        s.rows.push_back({"transverse/w=" + std::to_string(w).substr(0, 4), m, l2_bound_check(g, tr, m, o)});
    }
    const std::size_t n = s.rows.size();
    s.scaling = s.rows[n - 3].report.v_norm / s.rows[n - 1].report.v_norm;
    s.scaling_expected = std::pow(ws.back() / ws.front(), 0.25);

    s.min_ratio = 1e300;
    for (const auto& r : s.rows) {
        s.min_ratio = std::min(s.min_ratio, r.report.ratio);
        s.max_ratio = std::max(s.max_ratio, r.report.ratio);
    }
    return s;
}

SpectralChecks spectral_checks(const SpectralGrid& g)
{
    SpectralChecks c;
    ForcingPair f;
    f.g.push_back({{0.3, -0.2, 0.1}, 1.0, {1, 0.5, -0.3}});
    Mat3 A;
    A << 0.2, 0.1, 0, -0.4, 0.3, 0.2, 0.1, 0, -0.5;
    f.G.push_back({{-0.2, 0.1, 0.3}, 0.9, A});

    SpectralField fhat(g.size());
    for (std::size_t q = 0; q < g.size(); ++q)
        fhat[q] = g.nyquist(q) ? CVec3::Zero() : f.f_hat(g.zeta(q));
    const Vec3 xi(0.5, -0.2, 0.3);
    c.oseen_residual = oseen_residual(g, fhat, oseen_fourier_solve(g, fhat, xi), xi);
    c.rot_residual = rot_oseen_residual(g, f, 0.5, 1.0);

    ForcingPair axi;
    axi.g.push_back({{0.7, 0, 0}, 0.9, {1, 0, 0}});
    FourierForcing fa = [&](const Vec3& z) { return axi.f_hat(z); };
    RotQuad q;
    q.phase_extent = 0.7;
    std::mt19937 rng(7);
    std::normal_distribution<double> n;
    for (double w : {0.25, 1.0, 4.0})
        for (int t = 0; t < 20; ++t) {
            const Vec3 z(n(rng), n(rng), n(rng));
            const CVec3 v = rot_oseen_mode(z, {0.5, 0, 0}, w, fa, q).v;
            const CVec3 e = axisymmetric_closed_form(z, axi.f_hat(z)[0], 0.5);
            c.closed_form_error = std::max(c.closed_form_error, (v - e).norm() / std::max(1.0, e.norm()));
        }
    return c;
}

} // namespace selfprop
