#pragma once

#include "selfprop/geometry.hpp"
#include "selfprop/types.hpp"

#include <complex>
#include <functional>
#include <string>
#include <vector>

namespace selfprop {

using cplx = std::complex<double>;
using CVec3 = Eigen::Matrix<cplx, 3, 1>;
using CMat3 = Eigen::Matrix<cplx, 3, 3>;

// Periodic box [-L, L)^3 with N points per axis. Lattice zeta = (pi/L) k,
// k in [-N/2, N/2). Transform: fhat = dy^3 sum f(y) e^{-i zeta.y}; inverse
// v(y) = (2L)^{-3} sum vhat e^{i zeta.y}.
class SpectralGrid {
public:
    SpectralGrid(double L, int N);

    double L() const { return L_; }
    int N() const { return N_; }
    std::size_t size() const { return static_cast<std::size_t>(N_) * N_ * N_; }
    double dy() const { return 2.0 * L_ / N_; }
    double dzeta() const;
    int wavenumber(int i) const { return i < N_ / 2 ? i : i - N_; }
    std::size_t index(int i, int j, int k) const { return (static_cast<std::size_t>(i) * N_ + j) * N_ + k; }
    Vec3 y(int i, int j, int k) const;
    Vec3 zeta(int i, int j, int k) const;
    Vec3 zeta(std::size_t idx) const;
    Vec3 y(std::size_t idx) const;
    bool nyquist(std::size_t idx) const;

private:
    double L_;
    int N_;
};

using SpectralField = std::vector<CVec3>;

// Forward and inverse transforms of vector fields (complex storage).
SpectralField to_fourier(const SpectralGrid& g, const SpectralField& phys);
SpectralField to_physical(const SpectralGrid& g, const SpectralField& hat);

struct MozziChaslesFrame {
    Mat3 M = Mat3::Identity();
    double R = 0;
    Vec3 shift = Vec3::Zero();
    double omega_norm = 0;
};

MozziChaslesFrame mozzi_chasles(const RigidMotion& m, double omega_threshold = 1e-8);

// f = g + div G with (div G)_i = d_j G_ij, each part a sum of Gaussian atoms
// a exp(-|y-c|^2 / (2 s^2)).
struct VectorAtom {
    Vec3 center = Vec3::Zero();
    double width = 1;
    Vec3 amp = Vec3::Zero();
};

struct TensorAtom {
    Vec3 center = Vec3::Zero();
    double width = 1;
    Mat3 amp = Mat3::Zero();
};

struct ForcingPair {
    std::vector<VectorAtom> g;
    std::vector<TensorAtom> G;

    CVec3 g_hat(const Vec3& z) const;
    // i Ghat(z) z
    CVec3 divG_hat(const Vec3& z) const;
    CVec3 f_hat(const Vec3& z) const { return g_hat(z) + divG_hat(z); }
    // Directional derivative of f_hat at z along d.
    CVec3 f_hat_dir(const Vec3& z, const Vec3& d) const;

    Vec3 g_at(const Vec3& y) const;
    Mat3 G_at(const Vec3& y) const;
    Vec3 f_at(const Vec3& y) const;

    Vec3 g_integral() const;
    // Upper envelope of |f_hat| at |zeta| = rho.
    double envelope(double rho) const;
    double max_center() const;
    double min_width() const;
    double max_extent() const;

    // Forcing seen in the frame y' = M (y - shift).
    ForcingPair transformed(const Mat3& M, const Vec3& shift) const;
};

using FourierForcing = std::function<CVec3(const Vec3&)>;

// omega = 0 branch, single mode.
CVec3 oseen_mode(const Vec3& z, const CVec3& f, const Vec3& xi);
SpectralField oseen_fourier_solve(const SpectralGrid& g, const SpectralField& fhat, const Vec3& xi);
// pressure mode p = -i z.f / |z|^2
SpectralField oseen_pressure(const SpectralGrid& g, const SpectralField& fhat);

struct RotQuad {
    double rel_tol = 1e-9;
    double tmax_factor = 28.0;
    int max_panels = 200000;
    // Spatial scale of the forcing phase; sets the panel width.
    double phase_extent = 0.0;
};

struct RotModeResult {
    CVec3 v = CVec3::Zero();
    CVec3 dtheta = CVec3::Zero(); // d/dtheta v(R_theta z) at theta = 0, when requested
    double err = 0;
    double scale = 0;
    int panels = 0;
};

// Time-integral solution at a single mode for the rotating system with
// rotation |omega| e1 and translation xi (R e1 in the canonical frame).
// When fdir is given the angular derivative is accumulated as well.
RotModeResult rot_oseen_mode(const Vec3& z, const Vec3& xi, double w, const FourierForcing& f,
                             const RotQuad& q, const std::function<CVec3(const Vec3&, const Vec3&)>* fdir = nullptr);

struct SpectralSolveReport {
    SpectralField vhat;
    double max_err = 0;
    std::size_t modes_solved = 0;
    std::size_t modes_skipped = 0;
};

// Canonical-frame rotating solve over the lattice; modes whose envelope is
// below 1e-16 of the maximum are set to zero. Throws numerical error if the
// quadrature error estimate exceeds rel_tol.
SpectralSolveReport rot_oseen_fourier_solve(const SpectralGrid& g, const ForcingPair& f, double R, double w,
                                            const RotQuad& q = {});

// Relative max-norm (physical space) residuals.
double oseen_residual(const SpectralGrid& g, const SpectralField& fhat, const SpectralField& vhat, const Vec3& xi);
double rot_oseen_residual(const SpectralGrid& g, const ForcingPair& f, double R, double w, const RotQuad& q = {});

// Closed form for axisymmetric e1-directed forcing phi(|z|, z1) e1.
CVec3 axisymmetric_closed_form(const Vec3& z, cplx phi, double R);
// Closed form of the constant transverse part: P(z) phi(z), phi built from J+-.
CVec3 transverse_closed_form(const Vec3& z, const CVec3& g0, double R, double w);

struct JpmResult {
    double plus = 0, minus = 0;
    double full_plus = 0; // whole-space integral
    double bound = 0;
    double ratio = 0;
    bool within = true;
};

// int_{|z|<1} |J+-|^2 dz by adaptive quadrature, with bound |w|^{-1/2} + |R|/|w|.
JpmResult jpm_integral(double R, double w, double C = 20.0);

// Integral of rho^2 / (rho^4 + 1) over (0, inf) (= pi / (2 sqrt 2)).
double radial_reference_integral();

double adaptive_integrate(const std::function<double(double)>& f, double a, double b, double tol, int depth = 40);

struct L2Report {
    double v_norm = 0;       // spherical-quadrature value of ||v||_2
    double v_norm_lattice = -1;
    double high = 0, I1 = 0, I2 = 0, I3 = 0;
    double I1_closed = 0;
    double g_l1 = 0, G_l2 = 0, yG_l2 = 0, yg_ls = 0, g_mean = 0;
    double prefactor = 0;    // |w|^{-1/4} + |R|^{1/2} |w|^{-1/2} (0 when omega = 0)
    double rhs = 0;
    double ratio = 0;
    double R = 0, w = 0;
    bool rotating = false;
};

struct L2Options {
    double s = 1.0;
    double compat_tol = 1e-8;
    int n_mu = 32, n_phi = 32;
    bool lattice = false;
    RotQuad quad{};
};

// Norm of v and the right-hand side of the whole-space L2 estimate with all
// constants set to 1. Forcing is given in the original frame.
L2Report l2_bound_check(const SpectralGrid& g, const ForcingPair& f, const RigidMotion& m, const L2Options& o = {});

struct KNorms {
    double grad_u = 0, q = 0, F = 0;
};

double k_quantity(const KNorms& n, double Phi, const RigidMotion& m, double omega_threshold = 1e-8);

// W(x) = Phi grad(1/(4 pi |x - x0|)).
class FluxCarrier {
public:
    FluxCarrier(double Phi, const Vec3& x0) : Phi_(Phi), x0_(x0) {}
    Vec3 operator()(const Vec3& x) const;
    Mat3 gradient(const Vec3& x) const;
    double Phi() const { return Phi_; }
    const Vec3& x0() const { return x0_; }

private:
    double Phi_;
    Vec3 x0_;
};

// Winding number of the closed surface around x (1 inside, 0 outside).
double winding_number(const SurfaceMesh& s, const Vec3& x);

FluxCarrier flux_lift(double Phi, const Vec3& x0, const BodyGeometry& body);

} // namespace selfprop
