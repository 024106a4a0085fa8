#pragma once

#include "selfprop/basis.hpp"

#include <memory>
#include <vector>

namespace selfprop {

struct StateOptions {
    double tol = 1e-9;
    int max_iter = 50;
    int max_growth = 3;   // consecutive ratios >= 1 before giving up
};

struct ResidualReport {
    double momentum = 0;        // max interior residual
    double force_balance = 0;   // |m xi x omega - int sigma n + int (s.n)(s+V+omega x x)|
    double torque_balance = 0;
    double net_force = 0;       // |N| (momentum-flux form)
    double net_torque = 0;
    double flux = 0;            // int n . v
    double scale = 1;
};

struct FlowState {
    std::shared_ptr<const PropulsionBasis> basis;
    Vec v, p;
    double lambda = 0;
    Vec6 gamma = Vec6::Zero();   // (alpha, beta)
    TraceField v_star, v_star_C;
    ResidualReport residuals;
    std::vector<double> increments, ratios;
    int iterations = 0;
    double J = 0;

    Vec3 alpha() const { return gamma.head<3>(); }
    Vec3 beta() const { return gamma.tail<3>(); }
};

// Volume forcing of the fixed point: load vector of f = -v.grad v.
Vec rhs_force(const MixedSpace& s, const Vec& vbar);
// Weak flux form int F : grad phi with F = -v (x) v; equals the load of
// div F up to boundary terms.
Vec rhs_flux_form(const MixedSpace& s, const Vec& vbar);

// (xi_f, omega_f) for the lagged boundary velocity s = v_* + v_*^C.
Vec6 propulsion_defect(const MixedSpace& sp, const Vec& s, const RigidMotion& m);
// Jacobian of propulsion_defect in s (6 x 3 n_body).
Mat defect_jacobian(const MixedSpace& sp, const Vec& s, const RigidMotion& m);

// 1/2 int (s.n)|V + s|^2 and its gradient in s.
double drag_boundary_term(const MixedSpace& sp, const Vec& s, const RigidMotion& m);
Vec drag_boundary_gradient(const MixedSpace& sp, const Vec& s, const RigidMotion& m);

// Self-propulsion rows -E^T T(u) - E^T M_V u_B for a traction functional T.
Vec6 balance_lhs(const PropulsionBasis& b, const Vec& T, const Vec& uB);

struct LinearStep {
    Vec v, p;
    double lambda = 0;
    Vec6 gamma = Vec6::Zero();
    Vec6 defect = Vec6::Zero();
};

// One application of the fixed-point map at (vbar, gamma_bar). When
// defect_override is given it replaces (xi_f, omega_f).
LinearStep linear_step(const PropulsionBasis& b, const Vec& vbar, const Vec6& gamma_bar, const Vec& v_star,
                       const Vec6* defect_override = nullptr);

// Discrete X-type metric |dv|_{1,2} + max varpi |dv| + |d gamma|.
double state_metric(const MixedSpace& s, const WeightFn& w, const Vec& dv, const Vec6& dgamma);

double control_scale(const RigidMotion& m, double vstar_norm);

// Picard iteration of linear_step from zero (or the warm start). Throws a
// convergence error on non-contraction or when max_iter is exhausted.
FlowState solve_state(std::shared_ptr<const PropulsionBasis> b, const TraceField& v_star,
                      const StateOptions& o = {}, const FlowState* warm = nullptr, double vstar_norm = 0.0);

double drag(const FlowState& st);
// Direct boundary work int v . sigma(v,p) n.
double boundary_work(const FlowState& st);
ResidualReport self_propulsion_residual(const FlowState& st, double scale = 1.0);
// Weak form with a test field carrying rigid body trace l + k x x and a
// given interior extension (far trace 0).
double weak_form_residual(const FlowState& st, const Vec3& l, const Vec3& k, const Vec& interior_part);

// Traction functional of the full nonlinear state.
Vec state_traction(const FlowState& st);

} // namespace selfprop
