#pragma once

#include "selfprop/linsolve.hpp"
#include "selfprop/mesh.hpp"
#include "selfprop/weight.hpp"

#include <functional>
#include <memory>

namespace selfprop {

using VecField = std::function<Vec3(const Vec3&)>;

// P2-P1 Taylor-Hood on an ExteriorMesh. Velocity dof 3 * node + component,
// pressure dof = vertex. Body and far-field velocity dofs are Dirichlet.
struct MixedSpace {
    std::shared_ptr<const ExteriorMesh> mesh;
    BoundarySpace bnd;
    int n_u = 0, n_p = 0, n_i = 0;
    std::vector<int> interior;           // velocity dof -> interior index, -1 on Dirichlet dofs
    std::vector<int> interior_dofs;
    std::vector<double> vol;
    std::vector<Eigen::Matrix<double, 4, 3>> grad_l;

    SpMat Kd;   // 2 int D(u):D(phi), all velocity dofs
    SpMat Bd;   // -int psi div phi
    SpMat Mp;   // pressure mass
    SpMat Lu;   // int grad u : grad phi (vector H1 seminorm)
    Vec m;      // int psi_k

    // Gradients of the 10 P2 functions at barycentric point l of cell c.
    void p2_gradients(int c, const std::array<double, 4>& l, Eigen::Matrix<double, 10, 3>& G) const;
    Vec3 point(int c, const std::array<double, 4>& l) const;

    // Velocity dofs of the body node j.
    int body_dof(int j, int comp) const { return 3 * bnd.nodes[j] + comp; }
    // Full velocity vector carrying the given body trace (3 * body node + c) and zero elsewhere.
    Vec lift_trace(const Vec& trace) const;
    Vec trace(const Vec& u) const;
    Vec body_rows(const Vec& r) const { return trace(r); }
    // Nodal interpolant of f on the nodes selected by tag (-1 = all).
    Vec interpolate(const VecField& f, int tag = -1) const;
    Vec interpolate_trace(const VecField& f) const;
};

std::shared_ptr<const MixedSpace> make_space(std::shared_ptr<const ExteriorMesh> mesh);
std::shared_ptr<const MixedSpace> make_space(ExteriorMesh mesh);

struct SolverOptions {
    int direct_limit = 60000;
    double rel_tol = 1e-10;
};

// Assembled generalized Oseen operator for one rigid motion, with the
// factorized saddle system on the interior dofs. Immutable once built.
struct OseenOperator {
    std::shared_ptr<const MixedSpace> space;
    RigidMotion motion;
    SpMat K;          // full velocity block: Kd + transport + Coriolis
    SpMat Kt;         // transport + Coriolis alone
    std::shared_ptr<SaddleSolver> solver;
    SolverOptions opts;
};

// Transport -int (V.grad u).phi plus Coriolis int (omega x u).phi.
SpMat assemble_transport(const MixedSpace& s, const RigidMotion& m);
OseenOperator assemble_oseen(std::shared_ptr<const MixedSpace> s, const RigidMotion& m, const SolverOptions& o = {});

struct FemSolution {
    Vec u;   // all velocity dofs
    Vec p;   // mean zero
    double lambda = 0;
};

// Solves K u + Bd^T p = load on interior rows, Bd u + lambda m = 0,
// m^T p = 0, with u = u_bc on body and far dofs. With transpose the
// velocity block is K^T. An empty load means zero forcing.
FemSolution solve_dirichlet(const OseenOperator& op, const Vec& u_bc, const Vec& load, bool transpose = false);

// Full residual K u + Bd^T p - load (or K^T u ... with transpose).
Vec residual(const OseenOperator& op, const Vec& u, const Vec& p, const Vec& load, bool transpose = false);

// Consistent traction functional on the body: body rows of the residual,
// so that T . w_B equals the residual pairing with any lift of w_B.
// Density = M_boundary^{-1} T.
Vec traction_functional(const OseenOperator& op, const FemSolution& s, const Vec& load, bool transpose = false);
Vec boundary_traction(const OseenOperator& op, const FemSolution& s, const Vec& load = Vec(), bool transpose = false);
Vec mass_solve(const BoundarySpace& b, const Vec& T);

// Net force int sigma n and torque int x x sigma n from a traction functional.
Vec6 force_torque(const MixedSpace& s, const Vec& T);

// Load vector int f . phi.
Vec load_vector(const MixedSpace& s, const VecField& f);
// N(v)_phi = int (v.grad v).phi
Vec convection(const MixedSpace& s, const Vec& v);
// int (v (x) v) : grad phi, equal to -N(v) on interior rows when div v = 0
Vec convection_flux_form(const MixedSpace& s, const Vec& v);
// Load of vhat.grad u + (grad u)^T vhat, ((grad u)^T vhat)_i = d_i u_j vhat_j;
// l2 receives the L2 norm of the field.
Vec mapping_F_load(const MixedSpace& s, const Vec& vhat, const Vec& u, double* l2 = nullptr);
// Jacobian of convection at v: z -> int (z.grad v + v.grad z).phi
SpMat convection_jacobian(const MixedSpace& s, const Vec& v);

struct FieldNorms {
    double grad_u = 0;     // ||grad u||_2
    double hess_u = 0;     // broken ||grad^2 u||_2
    double u_l2 = 0;
    double u_inf = 0;      // max over quadrature points
    double q_l2 = 0;
    double weighted_sup = 0; // max over quadrature points of varpi |u|
    double flux = 0;       // int_body n . u
};

FieldNorms functional_norms(const MixedSpace& s, const Vec& u, const Vec& q, const WeightFn* w = nullptr);

// L2 error of u against an exact field (degree-5 quadrature).
double l2_error(const MixedSpace& s, const Vec& u, const VecField& exact);

// beta = sqrt of the smallest generalized eigenvalue of Bd Kd^{-1} Bd^T vs the pressure
// mass on mean-zero pressures. Dense below dense_limit pressure dofs, a
// shifted power iteration above.
double inf_sup_probe(const MixedSpace& s, int dense_limit = 2500, int iters = 400);

// Surface flux int (f . n_h) with the P2 interpolant of f . n_node.
double nodal_flux(const BoundarySpace& b, const Vec& trace);

} // namespace selfprop
