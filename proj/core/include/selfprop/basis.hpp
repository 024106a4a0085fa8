#pragma once

#include "selfprop/fem.hpp"
#include "selfprop/trace.hpp"

#include <array>
#include <memory>
#include <string>

namespace selfprop {

using Flows6 = std::array<FemSolution, 6>;
using Traces6 = std::array<Vec, 6>;

// Scalar boundary mass weighted by V . n_f.
SpMat flux_mass(const BoundarySpace& b, const RigidMotion& m);

// Rigid traces E_i: e_i (i < 3), e_{i-3} x x.
Traces6 rigid_traces(const MixedSpace& s);

// Flows of the adjoint-transport system (+V.grad - omega x) with body trace
// e_i and e_i x x, realized as transposed solves of op.
Flows6 solve_basic_motions(const OseenOperator& op);

// g^(i) = sigma n of the basic flows as L2 densities on the body nodes.
Traces6 traction_basis(const OseenOperator& op, const Flows6& basic, const SpMat& MV);

// tangential: (g x n) x n with unit nodal normals; localized: chi g.
Traces6 control_basis(const BoundarySpace& b, const Traces6& g, TraceKind kind, const Vec& chi);

// A_ik = int g^(i) . B_k
Mat6 assemble_A(const BoundarySpace& b, const Traces6& g, const Traces6& fields);

struct PropulsionBasis {
    std::shared_ptr<const OseenOperator> op;
    TraceKind kind = TraceKind::tangential;
    Vec chi;
    SpMat MV;
    Traces6 E;
    Flows6 basic;
    Traces6 g;
    Traces6 fields;
    Flows6 lifts;      // forward flows with trace B_k and zero forcing
    Mat6 A = Mat6::Zero();
    double cond = 0;

    Vec6 solve_A(const Vec6& rhs) const;
    Vec6 solve_At(const Vec6& rhs) const;
    // Corrector trace sum_k gamma_k B_k.
    Vec corrector(const Vec6& gamma) const;
};

// Throws a config error when A is numerically singular.
PropulsionBasis build_basis(std::shared_ptr<const OseenOperator> op, TraceKind kind, const Vec& chi = Vec());

void save_basis(const std::string& path, const PropulsionBasis& b);
// Restores the basis on an operator for the same mesh and motion.
PropulsionBasis load_basis(const std::string& path, std::shared_ptr<const OseenOperator> op);

} // namespace selfprop
