#pragma once

#include "selfprop/types.hpp"

#include <Eigen/Sparse>

#include <functional>
#include <memory>
#include <vector>

namespace selfprop {

using SpMat = Eigen::SparseMatrix<double>;
using Triplets = std::vector<Eigen::Triplet<double>>;

// UMFPACK LU of a square sparse matrix with solves against A and A^T.
// Solves are const and may run concurrently.
class SparseLU {
public:
    explicit SparseLU(const SpMat& A);
    ~SparseLU();
    SparseLU(const SparseLU&) = delete;
    SparseLU& operator=(const SparseLU&) = delete;

    Vec solve(const Vec& b) const;
    Vec solve_transpose(const Vec& b) const;
    int rows() const { return n_; }
    double rcond() const { return rcond_; }

private:
    Vec solve_impl(const Vec& b, int sys) const;

    int n_ = 0;
    std::vector<long> Ap_, Ai_;  // SuiteSparse_long
    std::vector<double> Ax_;
    void* numeric_ = nullptr;
    double rcond_ = 0;
};

struct IterativeOptions {
    double rel_tol = 1e-10;
    int restart = 200;
    int max_iter = 4000;
};

// Restarted right-preconditioned FGMRES. prec may be empty (identity).
// Throws a numerical error carrying the residual history on stagnation.
Vec fgmres(const std::function<Vec(const Vec&)>& apply, const std::function<Vec(const Vec&)>& prec,
           const Vec& b, const IterativeOptions& o, std::vector<double>* history = nullptr);

// Saddle system [K B^T 0; B 0 m; 0 m^T 0] over (u, p, lambda). Direct below
// direct_limit unknowns, FGMRES with a block-diagonal preconditioner
// (supernodal Cholesky of the symmetric velocity part, lumped pressure
// mass) above.
class SaddleSolver {
public:
    SaddleSolver(const SpMat& K, const SpMat& B, const Vec& m, const SpMat& Mp, int direct_limit = 60000,
                 IterativeOptions io = {});
    ~SaddleSolver();

    Vec solve(const Vec& rhs) const;
    Vec solve_transpose(const Vec& rhs) const;
    int size() const { return n_; }
    bool direct() const { return static_cast<bool>(lu_); }

private:
    Vec iterate(const Vec& rhs, bool transpose) const;

    int nu_, np_, n_;
    SpMat S_;
    std::unique_ptr<SparseLU> lu_;
    struct Prec;
    std::unique_ptr<Prec> prec_;
    IterativeOptions io_;
};

SpMat assemble_saddle(const SpMat& K, const SpMat& B, const Vec& m);

} // namespace selfprop
