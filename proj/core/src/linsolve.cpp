#include "selfprop/linsolve.hpp"

#include <Eigen/CholmodSupport>
#include <umfpack.h>

#include <cmath>
#include <sstream>

namespace selfprop {

SparseLU::SparseLU(const SpMat& A0)
{
    if (A0.rows() != A0.cols())
        throw Error(ErrorCode::numerical, "SparseLU: matrix not square");
    SpMat A = A0;
    A.makeCompressed();
    n_ = static_cast<int>(A.rows());
    Ap_.assign(A.outerIndexPtr(), A.outerIndexPtr() + n_ + 1);
    Ai_.assign(A.innerIndexPtr(), A.innerIndexPtr() + A.nonZeros());
    Ax_.assign(A.valuePtr(), A.valuePtr() + A.nonZeros());

    double control[UMFPACK_CONTROL], info[UMFPACK_INFO];
    umfpack_dl_defaults(control);
    // The peak estimate is pessimistic for 3D saddle systems; start small and grow.
    control[UMFPACK_ALLOC_INIT] = 0.15;
    void* symbolic = nullptr;
    int st = umfpack_dl_symbolic(n_, n_, Ap_.data(), Ai_.data(), Ax_.data(), &symbolic, control, info);
    if (st != UMFPACK_OK)
        throw Error(ErrorCode::numerical, "umfpack symbolic failed, status " + std::to_string(st));
    st = umfpack_dl_numeric(Ap_.data(), Ai_.data(), Ax_.data(), symbolic, &numeric_, control, info);
    umfpack_dl_free_symbolic(&symbolic);
    if (st != UMFPACK_OK) {
        if (numeric_)
            umfpack_dl_free_numeric(&numeric_);
        throw Error(ErrorCode::numerical, st == UMFPACK_ERROR_out_of_memory
                                              ? "umfpack numeric factorization ran out of memory (n = " + std::to_string(n_) + ")"
                                              : "umfpack numeric failed, status " + std::to_string(st));
    }
    rcond_ = info[UMFPACK_RCOND];
}

SparseLU::~SparseLU()
{
    if (numeric_)
        umfpack_dl_free_numeric(&numeric_);
}

Vec SparseLU::solve_impl(const Vec& b, int sys) const
{
    if (b.size() != n_)
        throw Error(ErrorCode::numerical, "SparseLU: rhs size mismatch");
    Vec x(n_);
    double control[UMFPACK_CONTROL], info[UMFPACK_INFO];
    umfpack_dl_defaults(control);
    int st = umfpack_dl_solve(sys, Ap_.data(), Ai_.data(), Ax_.data(), x.data(), b.data(), numeric_, control, info);
    if (st != UMFPACK_OK)
        throw Error(ErrorCode::numerical, "umfpack solve failed, status " + std::to_string(st));
    return x;
}

Vec SparseLU::solve(const Vec& b) const { return solve_impl(b, UMFPACK_A); }
Vec SparseLU::solve_transpose(const Vec& b) const { return solve_impl(b, UMFPACK_At); }

Vec fgmres(const std::function<Vec(const Vec&)>& apply, const std::function<Vec(const Vec&)>& prec,
           const Vec& b, const IterativeOptions& o, std::vector<double>* history)
{
    const Eigen::Index n = b.size();
    Vec x = Vec::Zero(n);
    double bnorm = b.norm();
    if (bnorm == 0)
        return x;
    std::vector<double> hist;
    int total = 0;
    const int m = o.restart;
    while (total < o.max_iter) {
        Vec r = b - apply(x);
        double beta = r.norm();
        hist.push_back(beta / bnorm);
        if (beta <= o.rel_tol * bnorm)
            break;
        std::vector<Vec> V, Z;
        V.push_back(r / beta);
        Mat H = Mat::Zero(m + 1, m);
        Vec cs = Vec::Zero(m), sn = Vec::Zero(m), g = Vec::Zero(m + 1);
        g[0] = beta;
        int k = 0;
        for (; k < m && total < o.max_iter; ++k, ++total) {
            Z.push_back(prec ? prec(V[k]) : V[k]);
            Vec w = apply(Z[k]);
            for (int i = 0; i <= k; ++i) {
                H(i, k) = w.dot(V[i]);
                w -= H(i, k) * V[i];
            }
            H(k + 1, k) = w.norm();
            V.push_back(H(k + 1, k) > 0 ? Vec(w / H(k + 1, k)) : Vec(w));
            for (int i = 0; i < k; ++i) {
                double t = cs[i] * H(i, k) + sn[i] * H(i + 1, k);
                H(i + 1, k) = -sn[i] * H(i, k) + cs[i] * H(i + 1, k);
                H(i, k) = t;
            }
            double den = std::hypot(H(k, k), H(k + 1, k));
            cs[k] = den > 0 ? H(k, k) / den : 1.0;
            sn[k] = den > 0 ? H(k + 1, k) / den : 0.0;
            H(k, k) = den;
            H(k + 1, k) = 0;
            g[k + 1] = -sn[k] * g[k];
            g[k] = cs[k] * g[k];
            hist.push_back(std::abs(g[k + 1]) / bnorm);
            if (std::abs(g[k + 1]) <= o.rel_tol * bnorm) {
                ++k;
                ++total;
                break;
            }
        }
        Vec y = H.topLeftCorner(k, k).triangularView<Eigen::Upper>().solve(g.head(k));
        for (int i = 0; i < k; ++i)
            x += y[i] * Z[i];
        if (hist.back() <= o.rel_tol)
            break;
    }
    double rel = (b - apply(x)).norm() / bnorm;
    if (history)
        *history = hist;
    if (!(rel <= 10 * o.rel_tol)) {
        std::ostringstream os;
        os << "FGMRES stagnated: relative residual " << rel << " after " << total << " iterations; history:";
        for (std::size_t i = 0; i < hist.size(); i += std::max<std::size_t>(1, hist.size() / 20))
            os << ' ' << hist[i];
        throw Error(ErrorCode::numerical, os.str());
    }
    return x;
}

SpMat assemble_saddle(const SpMat& K, const SpMat& B, const Vec& m)
{
    const int nu = static_cast<int>(K.rows()), np = static_cast<int>(B.rows());
    Triplets t;
    t.reserve(K.nonZeros() + 2 * B.nonZeros() + 2 * np);
    for (int c = 0; c < K.outerSize(); ++c)
        for (SpMat::InnerIterator it(K, c); it; ++it)
            t.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    for (int c = 0; c < B.outerSize(); ++c)
        for (SpMat::InnerIterator it(B, c); it; ++it) {
            t.emplace_back(nu + static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
            t.emplace_back(static_cast<int>(it.col()), nu + static_cast<int>(it.row()), it.value());
        }
    for (int k = 0; k < np; ++k) {
        t.emplace_back(nu + k, nu + np, m[k]);
        t.emplace_back(nu + np, nu + k, m[k]);
    }
    SpMat S(nu + np + 1, nu + np + 1);
    S.setFromTriplets(t.begin(), t.end());
    S.makeCompressed();
    return S;
}

struct SaddleSolver::Prec {
    Eigen::CholmodSupernodalLLT<SpMat> vel;
    Vec pinv;
    double lam = 1;
};

SaddleSolver::SaddleSolver(const SpMat& K, const SpMat& B, const Vec& m, const SpMat& Mp, int direct_limit,
                           IterativeOptions io)
    : nu_(static_cast<int>(K.rows())), np_(static_cast<int>(B.rows())), io_(io)
{
    n_ = nu_ + np_ + 1;
    S_ = assemble_saddle(K, B, m);
    if (n_ <= direct_limit) {
        lu_ = std::make_unique<SparseLU>(S_);
        return;
    }
    prec_ = std::make_unique<Prec>();
    SpMat Ks = SpMat(0.5 * (K + SpMat(K.transpose())));
    prec_->vel.compute(Ks);
    if (prec_->vel.info() != Eigen::Success)
        throw Error(ErrorCode::numerical, "velocity preconditioner factorization failed");
    Vec lump = Vec::Zero(np_);
    for (int c = 0; c < Mp.outerSize(); ++c)
        for (SpMat::InnerIterator it(Mp, c); it; ++it)
            lump[it.row()] += it.value();
    // Schur complement of 2 D:D is close to half the pressure mass.
    prec_->pinv = (0.5 * lump).cwiseInverse();
    prec_->lam = 1.0 / m.cwiseProduct(prec_->pinv).dot(m);
}

SaddleSolver::~SaddleSolver() = default;

Vec SaddleSolver::iterate(const Vec& rhs, bool transpose) const
{
    auto apply = [&](const Vec& x) -> Vec { return transpose ? Vec(S_.transpose() * x) : Vec(S_ * x); };
    auto prec = [&](const Vec& r) -> Vec {
        Vec z(n_);
        z.head(nu_) = prec_->vel.solve(r.head(nu_));
        z.segment(nu_, np_) = prec_->pinv.cwiseProduct(r.segment(nu_, np_));
        z[n_ - 1] = prec_->lam * r[n_ - 1];
        return z;
    };
    return fgmres(apply, prec, rhs, io_);
}

Vec SaddleSolver::solve(const Vec& rhs) const { return lu_ ? lu_->solve(rhs) : iterate(rhs, false); }

Vec SaddleSolver::solve_transpose(const Vec& rhs) const
{
    return lu_ ? lu_->solve_transpose(rhs) : iterate(rhs, true);
}

} // namespace selfprop
