#include "selfprop/spectral.hpp"

#include "selfprop/parallel.hpp"
#include "selfprop/quadrature.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>
#include <sstream>

namespace selfprop {

namespace {

constexpr double pi = std::numbers::pi;
const cplx I(0.0, 1.0);

std::mutex& fftw_mutex()
{
    static std::mutex mu;
    return mu;
}

CVec3 project(const Vec3& z, const CVec3& f)
{
    const double r2 = z.squaredNorm();
    if (r2 == 0)
        return CVec3::Zero();
    const cplx zf = z[0] * f[0] + z[1] * f[1] + z[2] * f[2];
    return f - z.cast<cplx>() * (zf / r2);
}

// Rotation about e1 by angle a.
Vec3 rot1(double a, const Vec3& v)
{
    const double c = std::cos(a), s = std::sin(a);
    return {v[0], c * v[1] - s * v[2], s * v[1] + c * v[2]};
}

CVec3 rot1T(double a, const CVec3& v)
{
    const double c = std::cos(a), s = std::sin(a);
    return {v[0], c * v[1] + s * v[2], -s * v[1] + c * v[2]};
}

CVec3 e1_cross(const CVec3& v) { return {0.0, -v[2], v[1]}; }

void fft3(int N, std::vector<cplx>& data, int sign)
{
    fftw_plan p;
    {
        std::lock_guard lk(fftw_mutex());
        p = fftw_plan_dft_3d(N, N, N, reinterpret_cast<fftw_complex*>(data.data()),
                             reinterpret_cast<fftw_complex*>(data.data()), sign, FFTW_ESTIMATE);
    }
    fftw_execute(p);
    std::lock_guard lk(fftw_mutex());
    fftw_destroy_plan(p);
}

} // namespace

SpectralGrid::SpectralGrid(double L, int N) : L_(L), N_(N)
{
    if (!(L > 0))
        throw Error(ErrorCode::precondition, "spectral grid half-length must be positive");
    if (N < 2 || N % 2 != 0)
        throw Error(ErrorCode::precondition, "spectral grid resolution must be even and >= 2");
}

double SpectralGrid::dzeta() const { return pi / L_; }

Vec3 SpectralGrid::y(int i, int j, int k) const
{
    const double d = dy();
    return {-L_ + i * d, -L_ + j * d, -L_ + k * d};
}

Vec3 SpectralGrid::zeta(int i, int j, int k) const
{
    const double d = dzeta();
    return {d * wavenumber(i), d * wavenumber(j), d * wavenumber(k)};
}

Vec3 SpectralGrid::zeta(std::size_t idx) const
{
    const int k = static_cast<int>(idx % N_);
    const int j = static_cast<int>((idx / N_) % N_);
    const int i = static_cast<int>(idx / (static_cast<std::size_t>(N_) * N_));
    return zeta(i, j, k);
}

Vec3 SpectralGrid::y(std::size_t idx) const
{
    const int k = static_cast<int>(idx % N_);
    const int j = static_cast<int>((idx / N_) % N_);
    const int i = static_cast<int>(idx / (static_cast<std::size_t>(N_) * N_));
    return y(i, j, k);
}

bool SpectralGrid::nyquist(std::size_t idx) const
{
    const int k = static_cast<int>(idx % N_);
    const int j = static_cast<int>((idx / N_) % N_);
    const int i = static_cast<int>(idx / (static_cast<std::size_t>(N_) * N_));
    const int h = N_ / 2;
    return i == h || j == h || k == h;
}

SpectralField to_fourier(const SpectralGrid& g, const SpectralField& phys)
{
    const std::size_t n = g.size();
    const int N = g.N();
    const double d3 = std::pow(g.dy(), 3);
    SpectralField out(n);
    std::vector<cplx> buf(n);
    for (int c = 0; c < 3; ++c) {
        for (std::size_t q = 0; q < n; ++q)
            buf[q] = phys[q][c];
        fft3(N, buf, FFTW_FORWARD);
        for (std::size_t q = 0; q < n; ++q) {
            const int k = static_cast<int>(q % N), j = static_cast<int>((q / N) % N),
                      i = static_cast<int>(q / (static_cast<std::size_t>(N) * N));
            const double sg = ((i + j + k) % 2 == 0) ? 1.0 : -1.0;
            out[q][c] = d3 * sg * buf[q];
        }
    }
    return out;
}

SpectralField to_physical(const SpectralGrid& g, const SpectralField& hat)
{
    const std::size_t n = g.size();
    const int N = g.N();
    const double scale = 1.0 / std::pow(2.0 * g.L(), 3);
    SpectralField out(n);
    std::vector<cplx> buf(n);
    for (int c = 0; c < 3; ++c) {
        for (std::size_t q = 0; q < n; ++q) {
            const int k = static_cast<int>(q % N), j = static_cast<int>((q / N) % N),
                      i = static_cast<int>(q / (static_cast<std::size_t>(N) * N));
            const double sg = ((i + j + k) % 2 == 0) ? 1.0 : -1.0;
            buf[q] = sg * hat[q][c];
        }
        fft3(N, buf, FFTW_BACKWARD);
        for (std::size_t q = 0; q < n; ++q)
            out[q][c] = scale * buf[q];
    }
    return out;
}

MozziChaslesFrame mozzi_chasles(const RigidMotion& m, double omega_threshold)
{
    const double w = m.omega.norm();
    if (w <= omega_threshold)
        throw Error(ErrorCode::precondition,
                    "|omega| below threshold: the Mozzi-Chasles frame is singular, use the omega = 0 branch");
    MozziChaslesFrame f;
    const Vec3 e = m.omega / w;
    Vec3 a = std::abs(e[1]) < 0.9 ? Vec3::UnitY() : Vec3::UnitZ();
    if (std::abs(e[0]) > 1.0 - 1e-15)
        a = Vec3::UnitY();
    Vec3 r2 = (a - a.dot(e) * e).normalized();
    Vec3 r3 = e.cross(r2);
    f.M.row(0) = e.transpose();
    f.M.row(1) = r2.transpose();
    f.M.row(2) = r3.transpose();
    if ((e - Vec3::UnitX()).norm() < 1e-15)
        f.M.setIdentity();
    f.R = m.omega.dot(m.xi) / w;
    f.shift = m.omega.cross(m.xi) / (w * w);
    f.omega_norm = w;
    return f;
}

// ---- forcing ----

namespace {

inline double atom_norm(double s) { return std::pow(2.0 * pi * s * s, 1.5); }

inline cplx atom_hat(const Vec3& z, const Vec3& c, double s)
{
    return atom_norm(s) * std::exp(-0.5 * s * s * z.squaredNorm()) * std::exp(-I * z.dot(c));
}

} // namespace

CVec3 ForcingPair::g_hat(const Vec3& z) const
{
    CVec3 r = CVec3::Zero();
    for (const auto& a : g)
        r += atom_hat(z, a.center, a.width) * a.amp.cast<cplx>();
    return r;
}

CVec3 ForcingPair::divG_hat(const Vec3& z) const
{
    CVec3 r = CVec3::Zero();
    for (const auto& a : G)
        r += (I * atom_hat(z, a.center, a.width)) * (a.amp * z).cast<cplx>();
    return r;
}

CVec3 ForcingPair::f_hat_dir(const Vec3& z, const Vec3& d) const
{
    CVec3 r = CVec3::Zero();
    for (const auto& a : g) {
        const cplx h = atom_hat(z, a.center, a.width);
        const cplx fac = -a.width * a.width * z.dot(d) - I * a.center.dot(d);
        r += (fac * h) * a.amp.cast<cplx>();
    }
    for (const auto& a : G) {
        const cplx h = atom_hat(z, a.center, a.width);
        const cplx fac = -a.width * a.width * z.dot(d) - I * a.center.dot(d);
        r += (fac * I * h) * (a.amp * z).cast<cplx>() + (I * h) * (a.amp * d).cast<cplx>();
    }
    return r;
}

Vec3 ForcingPair::g_at(const Vec3& y) const
{
    Vec3 r = Vec3::Zero();
    for (const auto& a : g)
        r += a.amp * std::exp(-(y - a.center).squaredNorm() / (2 * a.width * a.width));
    return r;
}

Mat3 ForcingPair::G_at(const Vec3& y) const
{
    Mat3 r = Mat3::Zero();
    for (const auto& a : G)
        r += a.amp * std::exp(-(y - a.center).squaredNorm() / (2 * a.width * a.width));
    return r;
}

Vec3 ForcingPair::f_at(const Vec3& y) const
{
    Vec3 r = g_at(y);
    for (const auto& a : G) {
        const Vec3 d = y - a.center;
        const double e = std::exp(-d.squaredNorm() / (2 * a.width * a.width));
        r += a.amp * (-d / (a.width * a.width)) * e;
    }
    return r;
}

Vec3 ForcingPair::g_integral() const
{
    Vec3 r = Vec3::Zero();
    for (const auto& a : g)
        r += atom_norm(a.width) * a.amp;
    return r;
}

double ForcingPair::envelope(double rho) const
{
    double e = 0;
    for (const auto& a : g)
        e += a.amp.norm() * atom_norm(a.width) * std::exp(-0.5 * a.width * a.width * rho * rho);
    for (const auto& a : G)
        e += a.amp.norm() * atom_norm(a.width) * rho * std::exp(-0.5 * a.width * a.width * rho * rho);
    return e;
}

double ForcingPair::max_center() const
{
    double r = 0;
    for (const auto& a : g)
        r = std::max(r, a.center.norm());
    for (const auto& a : G)
        r = std::max(r, a.center.norm());
    return r;
}

double ForcingPair::min_width() const
{
    double r = 1e300;
    for (const auto& a : g)
        r = std::min(r, a.width);
    for (const auto& a : G)
        r = std::min(r, a.width);
    return r;
}

double ForcingPair::max_extent() const
{
    double r = 0;
    for (const auto& a : g)
        r = std::max(r, a.center.cwiseAbs().maxCoeff() + 6.0 * a.width);
    for (const auto& a : G)
        r = std::max(r, a.center.cwiseAbs().maxCoeff() + 6.0 * a.width);
    return r;
}

ForcingPair ForcingPair::transformed(const Mat3& M, const Vec3& shift) const
{
    ForcingPair r;
    for (const auto& a : g)
        r.g.push_back({M * (a.center - shift), a.width, M * a.amp});
    for (const auto& a : G)
        r.G.push_back({M * (a.center - shift), a.width, M * a.amp * M.transpose()});
    return r;
}

// ---- solvers ----

CVec3 oseen_mode(const Vec3& z, const CVec3& f, const Vec3& xi)
{
    const double r2 = z.squaredNorm();
    if (r2 == 0)
        return CVec3::Zero();
    return project(z, f) / cplx(r2, -xi.dot(z));
}

SpectralField oseen_fourier_solve(const SpectralGrid& g, const SpectralField& fhat, const Vec3& xi)
{
    SpectralField v(g.size(), CVec3::Zero());
    for (std::size_t q = 0; q < g.size(); ++q)
        if (!g.nyquist(q))
            v[q] = oseen_mode(g.zeta(q), fhat[q], xi);
    return v;
}

SpectralField oseen_pressure(const SpectralGrid& g, const SpectralField& fhat)
{
    SpectralField p(g.size(), CVec3::Zero());
    for (std::size_t q = 0; q < g.size(); ++q) {
        const Vec3 z = g.zeta(q);
        const double r2 = z.squaredNorm();
        if (r2 == 0 || g.nyquist(q))
            continue;
        const cplx zf = z[0] * fhat[q][0] + z[1] * fhat[q][1] + z[2] * fhat[q][2];
        p[q][0] = -I * zf / r2;
    }
    return p;
}

RotModeResult rot_oseen_mode(const Vec3& z, const Vec3& xi, double w, const FourierForcing& f, const RotQuad& q,
                             const std::function<CVec3(const Vec3&, const Vec3&)>* fdir)
{
    RotModeResult out;
    const double r2 = z.squaredNorm();
    if (r2 == 0)
        return out;
    if (!(w > 0))
        throw Error(ErrorCode::precondition, "rotating solve needs |omega| > 0");
    if (fdir && (std::abs(xi[1]) > 0 || std::abs(xi[2]) > 0))
        throw Error(ErrorCode::precondition, "angular derivative needs translation along the rotation axis");
    const double rho = std::sqrt(r2);
    const double T = 2.0 * pi / w;
    const double a2 = xi[1] * z[1] + xi[2] * z[2];
    const double a3 = -xi[1] * z[2] + xi[2] * z[1];
    auto phase = [&](double t) {
        return xi[0] * z[0] * t + a2 * std::sin(w * t) / w + a3 * (1.0 - std::cos(w * t)) / w;
    };
    const double tcut = q.tmax_factor / r2;
    const bool periodic = tcut > T;
    const double tend = periodic ? T : tcut;
    const double omega_eff = w * (1.0 + rho * q.phase_extent) + std::abs(xi[0] * z[0]) +
                             rho * std::hypot(xi[1], xi[2]);
    const double width = std::min(4.0 / r2, pi / (2.0 * omega_eff));
    const int panels = std::max(1, static_cast<int>(std::ceil(tend / width)));
    if (panels > q.max_panels)
        throw Error(ErrorCode::numerical, "time quadrature needs too many panels");
    const GaussRule& g12 = gauss_legendre(12);
    const GaussRule& g8 = gauss_legendre(8);
    const double h = tend / panels;

    auto integrand = [&](double t, CVec3& val, CVec3* dval) {
        const double ang = w * t;
        const Vec3 oz = rot1(ang, z);
        const cplx E = std::exp(cplx(-r2 * t, phase(t)));
        const CVec3 fz = f(oz);
        val = E * rot1T(ang, project(oz, fz));
        if (dval) {
            const Vec3 d{0.0, -oz[2], oz[1]};
            const CVec3 df = (*fdir)(oz, d);
            const cplx of = oz[0] * fz[0] + oz[1] * fz[1] + oz[2] * fz[2];
            const cplx df_dot = d[0] * fz[0] + d[1] * fz[1] + d[2] * fz[2];
            const cplx odf = oz[0] * df[0] + oz[1] * df[1] + oz[2] * df[2];
            const CVec3 dh = df - d.cast<cplx>() * (of / r2) - oz.cast<cplx>() * ((df_dot + odf) / r2);
            *dval = E * rot1T(ang, dh);
        }
    };

    CVec3 acc = CVec3::Zero(), dacc = CVec3::Zero();
    double err = 0, scale = 0;
    CVec3 val, dval;
    for (int p = 0; p < panels; ++p) {
        const double a = p * h, mid = a + 0.5 * h;
        CVec3 s12 = CVec3::Zero(), s8 = CVec3::Zero(), d12 = CVec3::Zero();
        for (std::size_t k = 0; k < g12.x.size(); ++k) {
            integrand(mid + 0.5 * h * g12.x[k], val, fdir ? &dval : nullptr);
            s12 += g12.w[k] * val;
            scale += 0.5 * h * g12.w[k] * val.norm();
            if (fdir)
                d12 += g12.w[k] * dval;
        }
        for (std::size_t k = 0; k < g8.x.size(); ++k) {
            integrand(mid + 0.5 * h * g8.x[k], val, nullptr);
            s8 += g8.w[k] * val;
        }
        acc += 0.5 * h * s12;
        dacc += 0.5 * h * d12;
        err += 0.5 * h * (s12 - s8).norm();
    }
    if (periodic) {
        const cplx fac = 1.0 / (1.0 - std::exp(cplx(-r2 * T, xi[0] * z[0] * T)));
        acc *= fac;
        dacc *= fac;
        err *= std::abs(fac);
        scale *= std::abs(fac);
    }
    out.v = acc;
    out.dtheta = dacc;
    out.err = err;
    out.scale = scale;
    out.panels = panels;
    return out;
}

SpectralSolveReport rot_oseen_fourier_solve(const SpectralGrid& g, const ForcingPair& f, double R, double w,
                                            const RotQuad& q0)
{
    RotQuad q = q0;
    if (q.phase_extent <= 0)
        q.phase_extent = f.max_center();
    SpectralSolveReport rep;
    rep.vhat.assign(g.size(), CVec3::Zero());
    const double env0 = f.envelope(0.0) + f.envelope(1.0 / std::max(f.min_width(), 1e-12));
    const Vec3 xi(R, 0, 0);
    FourierForcing ff = [&](const Vec3& z) { return f.f_hat(z); };
    std::vector<double> errs(g.size(), 0.0), scales(g.size(), 0.0);
    std::vector<char> skipped(g.size(), 0);
    parallel_for(g.size(), [&](std::size_t idx) {
        if (g.nyquist(idx)) {
            skipped[idx] = 1;
            return;
        }
        const Vec3 z = g.zeta(idx);
        if (f.envelope(z.norm()) < 1e-16 * env0) {
            skipped[idx] = 1;
            return;
        }
        const RotModeResult r = rot_oseen_mode(z, xi, w, ff, q);
        rep.vhat[idx] = r.v;
        errs[idx] = r.err;
        scales[idx] = r.scale;
    });
    double smax = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        smax = std::max(smax, scales[i]);
        rep.modes_skipped += skipped[i];
    }
    rep.modes_solved = g.size() - rep.modes_skipped;
    for (std::size_t i = 0; i < g.size(); ++i)
        rep.max_err = std::max(rep.max_err, errs[i] / std::max(smax, 1e-300));
    if (rep.max_err > q.rel_tol) {
        std::ostringstream os;
        os << "time quadrature error estimate " << rep.max_err << " exceeds tolerance " << q.rel_tol;
        throw Error(ErrorCode::numerical, os.str());
    }
    return rep;
}

namespace {

double max_norm(const SpectralField& a)
{
    double m = 0;
    for (const auto& v : a)
        m = std::max(m, v.norm());
    return m;
}

} // namespace

double oseen_residual(const SpectralGrid& g, const SpectralField& fhat, const SpectralField& vhat, const Vec3& xi)
{
    const SpectralField phat = oseen_pressure(g, fhat);
    SpectralField r(g.size(), CVec3::Zero()), fref(g.size(), CVec3::Zero());
    for (std::size_t q = 0; q < g.size(); ++q) {
        if (g.nyquist(q))
            continue;
        const Vec3 z = g.zeta(q);
        fref[q] = fhat[q];
        if (z.squaredNorm() == 0)
            continue;
        r[q] = cplx(z.squaredNorm(), -xi.dot(z)) * vhat[q] + I * z.cast<cplx>() * phat[q][0] - fhat[q];
    }
    const double fm = max_norm(to_physical(g, fref));
    return max_norm(to_physical(g, r)) / std::max(fm, 1e-300);
}

double rot_oseen_residual(const SpectralGrid& g, const ForcingPair& f, double R, double w, const RotQuad& q0)
{
    RotQuad q = q0;
    if (q.phase_extent <= 0)
        q.phase_extent = f.max_center();
    const double env0 = f.envelope(0.0) + f.envelope(1.0 / std::max(f.min_width(), 1e-12));
    const Vec3 xi(R, 0, 0);
    FourierForcing ff = [&](const Vec3& z) { return f.f_hat(z); };
    std::function<CVec3(const Vec3&, const Vec3&)> fd = [&](const Vec3& z, const Vec3& d) {
        return f.f_hat_dir(z, d);
    };
    SpectralField r(g.size(), CVec3::Zero()), pf(g.size(), CVec3::Zero());
    parallel_for(g.size(), [&](std::size_t idx) {
        if (g.nyquist(idx))
            return;
        const Vec3 z = g.zeta(idx);
        if (z.squaredNorm() == 0)
            return;
        const CVec3 p = project(z, ff(z));
        pf[idx] = p;
        if (f.envelope(z.norm()) < 1e-16 * env0) {
            r[idx] = -p;
            return;
        }
        const RotModeResult m = rot_oseen_mode(z, xi, w, ff, q, &fd);
        r[idx] = cplx(z.squaredNorm(), -R * z[0]) * m.v - w * (m.dtheta - e1_cross(m.v)) - p;
    });
    const double fm = max_norm(to_physical(g, pf));
    return max_norm(to_physical(g, r)) / std::max(fm, 1e-300);
}

CVec3 axisymmetric_closed_form(const Vec3& z, cplx phi, double R)
{
    const double r2 = z.squaredNorm();
    if (r2 == 0)
        return CVec3::Zero();
    Vec3 d = Vec3::UnitX() - z * (z[0] / r2);
    return (phi / cplx(r2, -R * z[0])) * d.cast<cplx>();
}

CVec3 transverse_closed_form(const Vec3& z, const CVec3& g0, double R, double w)
{
    const double r2 = z.squaredNorm();
    if (r2 == 0)
        return CVec3::Zero();
    const cplx ap = g0[1] + I * g0[2], am = g0[1] - I * g0[2];
    const cplx Jp = 1.0 / cplx(r2, -(R * z[0] + w));
    const cplx Jm = 1.0 / cplx(r2, -(R * z[0] - w));
    CVec3 phi(0.0, 0.5 * (am * Jp + ap * Jm), 0.5 * I * (am * Jp - ap * Jm));
    return project(z, phi);
}

double adaptive_integrate(const std::function<double(double)>& f, double a, double b, double tol, int depth)
{
    const GaussRule& g = gauss_legendre(10);
    auto gl = [&](double lo, double hi) {
        double s = 0;
        const double m = 0.5 * (lo + hi), h = 0.5 * (hi - lo);
        for (std::size_t k = 0; k < g.x.size(); ++k)
            s += g.w[k] * f(m + h * g.x[k]);
        return h * s;
    };
    std::function<double(double, double, double, double, int)> rec = [&](double lo, double hi, double whole,
                                                                         double t, int d) -> double {
        const double m = 0.5 * (lo + hi);
        const double l = gl(lo, m), r = gl(m, hi);
        if (d <= 0 || std::abs(l + r - whole) <= t)
            return l + r;
        return rec(lo, m, l, 0.5 * t, d - 1) + rec(m, hi, r, 0.5 * t, d - 1);
    };
    return rec(a, b, gl(a, b), tol, depth);
}

namespace {

// int_{-1}^{1} rho^2 dmu / (rho^4 + (R rho mu + b)^2)
double jpm_shell(double rho, double R, double b)
{
    const double r2 = rho * rho;
    if (rho == 0)
        return 0;
    const double a = R * rho;
    if (std::abs(a) < 1e-7 * (std::abs(b) + r2)) {
        const double d = r2 * r2 + b * b;
        return 2.0 * r2 / d;
    }
    return (std::atan((a + b) / r2) - std::atan((-a + b) / r2)) / (R * rho) * 1.0;
}

} // namespace

double radial_reference_integral()
{
    auto f = [](double x) {
        if (x >= 1.0)
            return 0.0;
        const double r = x / (1.0 - x);
        const double jac = 1.0 / ((1.0 - x) * (1.0 - x));
        return r * r / (r * r * r * r + 1.0) * jac;
    };
    return adaptive_integrate(f, 0.0, 1.0, 1e-14);
}

JpmResult jpm_integral(double R, double w, double C)
{
    if (!(w > 0))
        throw Error(ErrorCode::precondition, "jpm_integral needs |omega| > 0");
    JpmResult r;
    const double tol = 1e-12;
    auto inner = [&](double sgn) {
        return [=](double rho) { return 2.0 * pi * jpm_shell(rho, R, sgn * w); };
    };
    r.plus = adaptive_integrate(inner(1.0), 0.0, 1.0, tol);
    r.minus = adaptive_integrate(inner(-1.0), 0.0, 1.0, tol);
    auto fp = inner(1.0);
    auto full = [&](double x) {
        if (x >= 1.0)
            return 0.0;
        const double rho = x / (1.0 - x);
        return fp(rho) / ((1.0 - x) * (1.0 - x));
    };
    // split at the image of rho = 1 and near the resonance shells
    r.full_plus = adaptive_integrate(full, 0.0, 0.5, tol) + adaptive_integrate(full, 0.5, 0.9, tol) +
                  adaptive_integrate(full, 0.9, 1.0, tol);
    r.bound = 1.0 / std::sqrt(w) + std::abs(R) / w;
    r.ratio = std::max(r.plus, r.minus) / r.bound;
    r.within = r.ratio <= C;
    return r;
}

// ---- L2 estimate ----

L2Report l2_bound_check(const SpectralGrid& g, const ForcingPair& f0, const RigidMotion& m, const L2Options& o)
{
    L2Report rep;
    const double thr = 1e-8;
    rep.rotating = m.omega.norm() > thr;
    ForcingPair f = f0;
    Vec3 xi = m.xi;
    if (rep.rotating) {
        const MozziChaslesFrame fr = mozzi_chasles(m, thr);
        f = f0.transformed(fr.M, fr.shift);
        rep.R = fr.R;
        rep.w = fr.omega_norm;
        xi = Vec3(fr.R, 0, 0);
    }
    if (f.max_extent() > g.L())
        throw Error(ErrorCode::precondition, "forcing is not contained in the periodic box (centre + 6 widths > L)");

    // physical-space norms on the grid
    const double d3 = std::pow(g.dy(), 3);
    double gl1 = 0, Gl2 = 0, yG = 0, ygs = 0;
    for (std::size_t q = 0; q < g.size(); ++q) {
        const Vec3 y = g.y(q);
        const Vec3 gv = f.g_at(y);
        const Mat3 Gv = f.G_at(y);
        gl1 += gv.norm() * d3;
        Gl2 += Gv.squaredNorm() * d3;
        yG += y.squaredNorm() * Gv.squaredNorm() * d3;
        ygs += std::pow(y.norm() * gv.norm(), o.s) * d3;
    }
    rep.g_l1 = gl1;
    rep.G_l2 = std::sqrt(Gl2);
    rep.yG_l2 = std::sqrt(yG);
    rep.yg_ls = std::pow(ygs, 1.0 / o.s);
    const Vec3 gint = f.g_integral();
    rep.g_mean = gint.norm();
    const double compat = rep.rotating ? std::abs(gint[0]) : gint.norm();
    if (compat > o.compat_tol * std::max(gl1, 1e-300))
        throw Error(ErrorCode::precondition, rep.rotating
                                                 ? "compatibility violated: e1 . int g != 0 in the Mozzi-Chasles frame"
                                                 : "compatibility violated: int g != 0");

    RotQuad q = o.quad;
    q.phase_extent = f.max_center();
    const CVec3 g0 = gint.cast<cplx>();
    FourierForcing p1 = [&](const Vec3&) { return g0; };
    FourierForcing p2 = [&](const Vec3& z) { return CVec3(f.g_hat(z) - g0); };
    FourierForcing p3 = [&](const Vec3& z) { return f.divG_hat(z); };
    FourierForcing pt = [&](const Vec3& z) { return f.f_hat(z); };
    auto solve = [&](const Vec3& z, const FourierForcing& ff) -> CVec3 {
        if (rep.rotating)
            return rot_oseen_mode(z, xi, rep.w, ff, q).v;
        return oseen_mode(z, ff(z), xi);
    };

    // radial panels
    std::vector<double> low{0.0};
    for (double b = 1.0 / 64; b < 1.0; b *= 2)
        low.push_back(b);
    low.push_back(1.0);
    const double rmax = 10.0 / f.min_width();
    std::vector<double> high{1.0};
    for (double b = 2.0; b < rmax; b *= 2)
        high.push_back(b);
    high.push_back(std::max(rmax, 2.0));

    const GaussRule& gr = gauss_legendre(10);
    const GaussRule& gm = gauss_legendre(o.n_mu);
    struct Node {
        Vec3 z;
        double w;
        bool low;
    };
    std::vector<Node> nodes;
    auto add_shells = [&](const std::vector<double>& br, bool lowflag) {
        for (std::size_t p = 0; p + 1 < br.size(); ++p) {
            const double a = br[p], b = br[p + 1];
            for (std::size_t k = 0; k < gr.x.size(); ++k) {
                const double rho = 0.5 * (a + b) + 0.5 * (b - a) * gr.x[k];
                const double wr = 0.5 * (b - a) * gr.w[k] * rho * rho;
                for (std::size_t i = 0; i < gm.x.size(); ++i) {
                    const double mu = gm.x[i], st = std::sqrt(1.0 - mu * mu);
                    for (int j = 0; j < o.n_phi; ++j) {
                        const double ph = 2.0 * pi * j / o.n_phi;
                        nodes.push_back({rho * Vec3(mu, st * std::cos(ph), st * std::sin(ph)),
                                         wr * gm.w[i] * 2.0 * pi / o.n_phi, lowflag});
                    }
                }
            }
        }
    };
    add_shells(low, true);
    add_shells(high, false);

    std::vector<std::array<double, 5>> contrib(nodes.size(), {0, 0, 0, 0, 0});
    parallel_for(nodes.size(), [&](std::size_t n) {
        const Node& nd = nodes[n];
        auto& c = contrib[n];
        if (nd.low) {
            const CVec3 v1 = solve(nd.z, p1), v2 = solve(nd.z, p2), v3 = solve(nd.z, p3);
            c[0] = nd.w * (v1 + v2 + v3).squaredNorm();
            c[1] = nd.w * v1.squaredNorm();
            c[2] = nd.w * v2.squaredNorm();
            c[3] = nd.w * v3.squaredNorm();
            if (rep.rotating)
                c[4] = nd.w * transverse_closed_form(nd.z, g0, rep.R, rep.w).squaredNorm();
        } else {
            c[0] = nd.w * solve(nd.z, pt).squaredNorm();
        }
    });
    double lowtot = 0, hightot = 0, s1 = 0, s2 = 0, s3 = 0, s1c = 0;
    for (std::size_t n = 0; n < nodes.size(); ++n) {
        if (nodes[n].low) {
            lowtot += contrib[n][0];
            s1 += contrib[n][1];
            s2 += contrib[n][2];
            s3 += contrib[n][3];
            s1c += contrib[n][4];
        } else {
            hightot += contrib[n][0];
        }
    }
    const double nrm = std::pow(2.0 * pi, -3.0);
    rep.v_norm = std::sqrt(nrm * (lowtot + hightot));
    rep.high = std::sqrt(nrm * hightot);
    rep.I1 = std::sqrt(nrm * s1);
    rep.I2 = std::sqrt(nrm * s2);
    rep.I3 = std::sqrt(nrm * s3);
    rep.I1_closed = std::sqrt(nrm * s1c);
    if (rep.rotating)
        rep.prefactor = std::pow(rep.w, -0.25) + std::sqrt(std::abs(rep.R)) / std::sqrt(rep.w);
    rep.rhs = rep.prefactor * rep.g_mean + rep.g_l1 + rep.G_l2 + rep.yG_l2 + rep.yg_ls;
    rep.ratio = rep.v_norm / rep.rhs;

    if (o.lattice) {
        SpectralField vh;
        if (rep.rotating) {
            vh = rot_oseen_fourier_solve(g, f, rep.R, rep.w, q).vhat;
        } else {
            SpectralField fh(g.size());
            for (std::size_t i = 0; i < g.size(); ++i)
                fh[i] = f.f_hat(g.zeta(i));
            vh = oseen_fourier_solve(g, fh, xi);
        }
        double s = 0;
        for (const auto& v : vh)
            s += v.squaredNorm();
        rep.v_norm_lattice = std::sqrt(s / std::pow(2.0 * g.L(), 3));
    }
    return rep;
}

double k_quantity(const KNorms& n, double Phi, const RigidMotion& m, double omega_threshold)
{
    const double xi = m.xi.norm(), w = m.omega.norm();
    if (w <= omega_threshold)
        return (1.0 + xi) * (n.grad_u + std::abs(Phi)) + n.q + n.F;
    const double pre = 1.0 + std::pow(w, -0.25) + std::sqrt(std::abs(m.omega.dot(m.xi))) / w +
                       m.omega.cross(m.xi).norm() / (w * w);
    return pre * ((1.0 + xi + w) * (n.grad_u + std::abs(Phi)) + n.q + n.F);
}

Vec3 FluxCarrier::operator()(const Vec3& x) const
{
    const Vec3 d = x - x0_;
    const double r = d.norm();
    return -Phi_ * d / (4.0 * pi * r * r * r);
}

Mat3 FluxCarrier::gradient(const Vec3& x) const
{
    const Vec3 d = x - x0_;
    const double r = d.norm();
    const double r3 = r * r * r, r5 = r3 * r * r;
    return -Phi_ / (4.0 * pi) * (Mat3::Identity() / r3 - 3.0 * d * d.transpose() / r5);
}

double winding_number(const SurfaceMesh& s, const Vec3& x)
{
    double total = 0;
    for (const auto& t : s.tris) {
        const Vec3 a = s.verts[t[0]] - x, b = s.verts[t[1]] - x, c = s.verts[t[2]] - x;
        const double la = a.norm(), lb = b.norm(), lc = c.norm();
        const double num = a.dot(b.cross(c));
        const double den = la * lb * lc + a.dot(b) * lc + a.dot(c) * lb + b.dot(c) * la;
        total += 2.0 * std::atan2(num, den);
    }
    return total / (4.0 * pi);
}

FluxCarrier flux_lift(double Phi, const Vec3& x0, const BodyGeometry& body)
{
    if (winding_number(body.surface, x0) < 0.5)
        throw Error(ErrorCode::domain, "flux carrier centre x0 must lie strictly inside the body");
    return FluxCarrier(Phi, x0);
}

} // namespace selfprop
