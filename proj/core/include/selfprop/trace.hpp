#pragma once

#include "selfprop/mesh.hpp"

#include <string>

namespace selfprop {

enum class TraceKind { tangential, localized, general };
using ControlKind = TraceKind;

const char* kind_name(TraceKind k);
TraceKind parse_kind(const std::string& s);

// Vector field on the P2 body nodes, stacked 3 * node + component.
struct TraceField {
    Vec values;
    TraceKind kind = TraceKind::general;
};

// Apply a scalar node-node matrix to each component of a stacked trace.
Vec apply_componentwise(const SpMat& S, const Vec& v);

// max |v_j . n_j| over nodes (unit nodal normals)
double normal_violation(const BoundarySpace& b, const Vec& v);
// max |v_j| over nodes outside the interior of Gamma
double gamma_violation(const BoundarySpace& b, const Vec& v);
// Throws a precondition error when the kind invariant fails.
void check_kind(const BoundarySpace& b, const TraceField& t, double tol = 1e-10);

// Orthonormal nodal basis of the admissible traces: two tangents per node
// (tangential), three axes on Gamma-interior nodes (localized), or all.
SpMat admissible_basis(const BoundarySpace& b, TraceKind k);
// Nodal projection onto the admissible set.
Vec project_kind(const BoundarySpace& b, TraceKind k, const Vec& v);

// Surrogate W^{3/2,2} norm: <v, (M + S^{3/2}) v> with the spectral power
// taken in the M metric of the generalized problem S y = lambda M y.
class TraceNorm {
public:
    explicit TraceNorm(const BoundarySpace& b);

    Vec apply(const Vec& v) const;
    double inner(const Vec& a, const Vec& b) const { return a.dot(apply(b)); }
    double norm(const Vec& v) const;
    const Mat& scalar_matrix() const { return H_; }
    // M + S^{1/2}, the order of the drag Hessian; used to precondition steps
    const Mat& smoothing_matrix() const { return Q_; }
    const Vec& eigenvalues() const { return lambda_; }

private:
    Mat H_, Q_;
    Vec lambda_;
};

// Radial projection onto {norm <= kappa}.
Vec project_ball(const TraceNorm& n, const Vec& v, double kappa);

// Admissible subspace with cached factorizations of the surrogate and L2
// Gram matrices restricted to it.
class AdmissibleSpace {
public:
    AdmissibleSpace(const BoundarySpace& b, const TraceNorm& n, TraceKind k);

    TraceKind kind() const { return kind_; }
    const SpMat& basis() const { return P_; }
    // Riesz representative of ell(delta) = ell . delta in the surrogate
    // inner product: g = P (P^T H P)^{-1} P^T ell.
    Vec riesz(const Vec& ell) const;
    // L2 density G with int G . delta = ell . delta on the subspace:
    // G = P (P^T M P)^{-1} P^T ell.
    Vec density(const Vec& ell) const;
    // Representative in the M + S^{1/2} inner product.
    Vec smooth(const Vec& ell) const;

private:
    TraceKind kind_;
    SpMat P_;
    Eigen::LDLT<Mat> h_, m_, q_;
};

} // namespace selfprop
