#pragma once

#include "selfprop/state.hpp"

#include <memory>
#include <vector>

namespace selfprop {

// Data of a converged state reused by linearized and adjoint solves.
struct Linearization {
    std::shared_ptr<const PropulsionBasis> basis;
    Vec v;          // state velocity
    Vec s;          // v_* + v_*^C
    SpMat Nv;       // convection Jacobian at v
    Mat Dr;         // defect Jacobian at s (6 x 3 n_body)
    Mat Bm;         // corrector fields as columns
    Mat6 A_lin;     // A + Dr Bm
    Vec Kdv;        // Kd v (state stiffness action)
    Vec hs;         // 1/2 gradient of the boundary drag term
    double scale = 1;
};

Linearization linearize(const FlowState& st);

struct LinearizedState {
    TraceField direction;
    Vec z, r;
    double mu = 0;
    Vec6 c = Vec6::Zero();   // corrector coefficients
    std::vector<double> increments;
};

// Frozen-transport linearization; the z.grad v + v.grad z term is iterated.
LinearizedState solve_linearized(const Linearization& L, const TraceField& delta, const StateOptions& o = {});

// DJ(v_*) delta through the linearized state.
double drag_derivative(const Linearization& L, const LinearizedState& z);

struct MappingF {
    Vec load;          // int F . phi
    double l2 = 0;     // ||F||_2
    double dual = 0;   // sup over zero-trace phi of <F, phi> / |phi|_{1,2}
    double bound = 0;  // dual / (weighted sup of vhat * |u|_{1,2}), the fitted constant
};

MappingF mapping_F(const MixedSpace& s, const WeightFn& w, const Vec& vhat, const Vec& u);

struct AdjointState {
    Vec u, q;
    double lambda = 0;
    Vec3 ell = Vec3::Zero(), k = Vec3::Zero();   // body trace ell + k x x
    Vec6 y = Vec6::Zero();                       // closure unknowns, (ell, k) = -y
    Vec functional;   // gradient functional on body dofs: 1/2 DJ delta = functional . delta
    TraceField zeta;  // boundary multiplier density
    std::vector<double> increments, ratios;
    int iterations = 0;
};

// Exact discrete adjoint of the linearized system: transposed Oseen solves,
// the convection Jacobian lagged to the right-hand side, and the closure
// A_lin^T y = B^T (...).
AdjointState solve_adjoint(const Linearization& L, const StateOptions& o = {});

TraceField multiplier(const AdjointState& a);
// Closure integrals <B_k, functional> (zero at a converged adjoint).
Vec6 closure_integrals(const Linearization& L, const AdjointState& a);
// Multiplier pairing <B_k, zeta>.
Vec6 multiplier_pairing(const Linearization& L, const AdjointState& a);

// L2 density G of the gradient functional on the admissible traces.
TraceField gradient(const AdjointState& a, const AdmissibleSpace& space);

} // namespace selfprop
