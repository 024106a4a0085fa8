#include "selfprop/trace.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>

#include <cmath>

namespace selfprop {

const char* kind_name(TraceKind k)
{
    switch (k) {
    case TraceKind::tangential:
        return "tangential";
    case TraceKind::localized:
        return "localized";
    case TraceKind::general:
        return "general";
    }
    return "?";
}

TraceKind parse_kind(const std::string& s)
{
    if (s == "tangential")
        return TraceKind::tangential;
    if (s == "localized")
        return TraceKind::localized;
    if (s == "general")
        return TraceKind::general;
    throw Error(ErrorCode::config, "unknown control kind '" + s + "' (expected tangential or localized)");
}

Vec apply_componentwise(const SpMat& S, const Vec& v)
{
    const Eigen::Index n = S.cols();
    Vec out(3 * S.rows());
    Eigen::Map<const Eigen::Matrix<double, 3, Eigen::Dynamic>> V(v.data(), 3, n);
    Eigen::Map<Eigen::Matrix<double, 3, Eigen::Dynamic>> O(out.data(), 3, S.rows());
    O = (S * V.transpose()).transpose();
    return out;
}

double normal_violation(const BoundarySpace& b, const Vec& v)
{
    double m = 0;
    for (int j = 0; j < b.size(); ++j)
        m = std::max(m, std::abs(v.segment<3>(3 * j).dot(b.unit_normal[j])));
    return m;
}

double gamma_violation(const BoundarySpace& b, const Vec& v)
{
    double m = 0;
    for (int j = 0; j < b.size(); ++j)
        if (!b.gamma_interior[j])
            m = std::max(m, v.segment<3>(3 * j).norm());
    return m;
}

void check_kind(const BoundarySpace& b, const TraceField& t, double tol)
{
    if (t.values.size() != b.dofs())
        throw Error(ErrorCode::precondition, "trace field size does not match the body nodes");
    double scale = std::max(1.0, t.values.lpNorm<Eigen::Infinity>());
    if (t.kind == TraceKind::tangential && normal_violation(b, t.values) > tol * scale)
        throw Error(ErrorCode::precondition, "tangential trace has a normal component");
    if (t.kind == TraceKind::localized && gamma_violation(b, t.values) > 0.0)
        throw Error(ErrorCode::precondition, "localized trace is nonzero outside Gamma");
}

namespace {

void tangents(const Vec3& n, Vec3& t1, Vec3& t2)
{
    Vec3 a = std::abs(n[0]) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    t1 = (a - n * n.dot(a)).normalized();
    t2 = n.cross(t1);
}

} // namespace

SpMat admissible_basis(const BoundarySpace& b, TraceKind k)
{
    Triplets t;
    int col = 0;
    for (int j = 0; j < b.size(); ++j) {
        if (k == TraceKind::tangential) {
            Vec3 t1, t2;
            tangents(b.unit_normal[j], t1, t2);
            for (int c = 0; c < 3; ++c) {
                t.emplace_back(3 * j + c, col, t1[c]);
                t.emplace_back(3 * j + c, col + 1, t2[c]);
            }
            col += 2;
        } else if (k == TraceKind::general || b.gamma_interior[j]) {
            for (int c = 0; c < 3; ++c)
                t.emplace_back(3 * j + c, col + c, 1.0);
            col += 3;
        }
    }
    SpMat P(b.dofs(), col);
    P.setFromTriplets(t.begin(), t.end());
    return P;
}

Vec project_kind(const BoundarySpace& b, TraceKind k, const Vec& v)
{
    Vec out = v;
    for (int j = 0; j < b.size(); ++j) {
        if (k == TraceKind::tangential) {
            const Vec3& n = b.unit_normal[j];
            Vec3 x = v.segment<3>(3 * j);
            out.segment<3>(3 * j) = x - n * n.dot(x);
        } else if (k == TraceKind::localized && !b.gamma_interior[j]) {
            out.segment<3>(3 * j).setZero();
        }
    }
    return out;
}

TraceNorm::TraceNorm(const BoundarySpace& b)
{
    Mat M = Mat(b.mass), S = Mat(b.stiff);
    S = 0.5 * (S + S.transpose()).eval();
    Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(S, M);
    if (es.info() != Eigen::Success)
        throw Error(ErrorCode::numerical, "boundary eigenproblem failed");
    lambda_ = es.eigenvalues().cwiseMax(0.0);
    const Mat& Y = es.eigenvectors(); // Y^T M Y = I
    Mat MY = M * Y;
    Vec d = (1.0 + lambda_.array().pow(1.5)).matrix();
    H_ = MY * d.asDiagonal() * MY.transpose();
    H_ = 0.5 * (H_ + H_.transpose()).eval();
    Vec e = (1.0 + lambda_.array().sqrt()).matrix();
    Q_ = MY * e.asDiagonal() * MY.transpose();
    Q_ = 0.5 * (Q_ + Q_.transpose()).eval();
}

Vec TraceNorm::apply(const Vec& v) const
{
    const Eigen::Index n = H_.rows();
    Vec out(3 * n);
    Eigen::Map<const Eigen::Matrix<double, 3, Eigen::Dynamic>> V(v.data(), 3, n);
    Eigen::Map<Eigen::Matrix<double, 3, Eigen::Dynamic>> O(out.data(), 3, n);
    O = V * H_; // H symmetric
    return out;
}

double TraceNorm::norm(const Vec& v) const { return std::sqrt(std::max(0.0, inner(v, v))); }

Vec project_ball(const TraceNorm& n, const Vec& v, double kappa)
{
    if (!(kappa > 0))
        throw Error(ErrorCode::precondition, "project_ball: kappa must be positive");
    double nv = n.norm(v);
    if (nv <= kappa)
        return v;
    return v * (kappa / nv);
}

namespace {

// P^T (S kron I3) P without forming the Kronecker product.
Mat restricted_gram(const Mat& S, const SpMat& P)
{
    const Eigen::Index n = S.rows(), k = P.cols();
    SpMat Pt = P.transpose();
    Mat out = Mat::Zero(k, k);
    for (int c = 0; c < 3; ++c) {
        // rows 3a + c of P as an n x k matrix
        Triplets t;
        for (int col = 0; col < P.outerSize(); ++col)
            for (SpMat::InnerIterator it(P, col); it; ++it)
                if (it.row() % 3 == c)
                    t.emplace_back(static_cast<int>(it.row() / 3), col, it.value());
        SpMat Pc(n, k);
        Pc.setFromTriplets(t.begin(), t.end());
        Mat SPc = S * Pc;
        out += Mat(Pc.transpose() * SPc);
    }
    return 0.5 * (out + out.transpose());
}

} // namespace

AdmissibleSpace::AdmissibleSpace(const BoundarySpace& b, const TraceNorm& n, TraceKind k)
    : kind_(k), P_(admissible_basis(b, k))
{
    if (P_.cols() == 0)
        throw Error(ErrorCode::config, "admissible control space is empty (Gamma has no interior nodes)");
    h_.compute(restricted_gram(n.scalar_matrix(), P_));
    m_.compute(restricted_gram(Mat(b.mass), P_));
    q_.compute(restricted_gram(n.smoothing_matrix(), P_));
    if (h_.info() != Eigen::Success || m_.info() != Eigen::Success || h_.rcond() < 1e-14 || m_.rcond() < 1e-14)
        throw Error(ErrorCode::config, "singular boundary operator on the admissible subspace");
}

Vec AdmissibleSpace::riesz(const Vec& ell) const
{
    if (ell.isZero(0.0))
        return Vec::Zero(ell.size());
    return P_ * h_.solve(Vec(P_.transpose() * ell));
}

Vec AdmissibleSpace::density(const Vec& ell) const
{
    if (ell.isZero(0.0))
        return Vec::Zero(ell.size());
    return P_ * m_.solve(Vec(P_.transpose() * ell));
}

} // namespace selfprop

namespace selfprop {

Vec AdmissibleSpace::smooth(const Vec& ell) const
{
    if (ell.isZero(0.0))
        return Vec::Zero(ell.size());
    return P_ * q_.solve(Vec(P_.transpose() * ell));
}

} // namespace selfprop
