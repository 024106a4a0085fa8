#include "selfprop/fem.hpp"

#include "selfprop/parallel.hpp"
#include "selfprop/quadrature.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <mutex>

namespace selfprop {

namespace {

struct RefTable {
    const TetRule* rule = nullptr;
    std::vector<std::array<double, 10>> phi;
    std::vector<std::array<std::array<double, 4>, 10>> dl;
};

const RefTable& ref_table(int degree)
{
    static const RefTable tables[2] = {[] {
                                           RefTable t;
                                           t.rule = &tet_rule(2);
                                           return t;
                                       }(),
                                       [] {
                                           RefTable t;
                                           t.rule = &tet_rule(5);
                                           return t;
                                       }()};
    static std::once_flag once;
    std::call_once(once, [] {
        for (auto& tc : tables) {
            auto& t = const_cast<RefTable&>(tc);
            for (const auto& l : t.rule->bary) {
                t.phi.push_back(tet_p2(l));
                double d[10][4];
                tet_p2_dl(l, d);
                std::array<std::array<double, 4>, 10> a;
                for (int i = 0; i < 10; ++i)
                    for (int k = 0; k < 4; ++k)
                        a[i][k] = d[i][k];
                t.dl.push_back(a);
            }
        }
    });
    return tables[degree == 2 ? 0 : 1];
}

using Grad10 = Eigen::Matrix<double, 10, 3>;

void grads_at(const MixedSpace& s, int c, const RefTable& t, std::size_t q, Grad10& G)
{
    const auto& gl = s.grad_l[c];
    for (int i = 0; i < 10; ++i) {
        G.row(i).setZero();
        for (int k = 0; k < 4; ++k)
            G.row(i) += t.dl[q][i][k] * gl.row(k);
    }
}

// Local matrices are computed in parallel per chunk and scattered in cell
// order so the triplet list does not depend on the thread count.
template <int R, int C, class Local, class Scatter>
void cell_loop(int ncells, Local local, Scatter scatter)
{
    using LM = Eigen::Matrix<double, R, C>;
    constexpr int chunk = 2048;
    std::vector<LM, Eigen::aligned_allocator<LM>> buf(chunk);
    for (int c0 = 0; c0 < ncells; c0 += chunk) {
        int n = std::min(chunk, ncells - c0);
        parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
            buf[i].setZero();
            local(c0 + static_cast<int>(i), buf[i]);
        });
        for (int i = 0; i < n; ++i)
            scatter(c0 + i, buf[i]);
    }
}

using Loc30 = Eigen::Matrix<double, 30, 30>;

SpMat assemble_vv(const MixedSpace& s, const std::function<void(int, Loc30&)>& local)
{
    const auto& mesh = *s.mesh;
    Triplets t;
    t.reserve(mesh.tets.size() * 900);
    cell_loop<30, 30>(static_cast<int>(mesh.tets.size()), local, [&](int c, const Loc30& L) {
        const auto& tn = mesh.tet_nodes[c];
        for (int b = 0; b < 10; ++b)
            for (int j = 0; j < 3; ++j)
                for (int a = 0; a < 10; ++a)
                    for (int i = 0; i < 3; ++i) {
                        double v = L(3 * b + j, 3 * a + i);
                        if (v != 0.0)
                            t.emplace_back(3 * tn[b] + j, 3 * tn[a] + i, v);
                    }
    });
    SpMat K(s.n_u, s.n_u);
    K.setFromTriplets(t.begin(), t.end());
    K.makeCompressed();
    return K;
}

SpMat restrict_interior(const MixedSpace& s, const SpMat& K, bool rows, bool cols)
{
    Triplets t;
    t.reserve(K.nonZeros());
    for (int c = 0; c < K.outerSize(); ++c) {
        int cc = cols ? s.interior[c] : c;
        if (cc < 0)
            continue;
        for (SpMat::InnerIterator it(K, c); it; ++it) {
            int rr = rows ? s.interior[it.row()] : static_cast<int>(it.row());
            if (rr >= 0)
                t.emplace_back(rr, cc, it.value());
        }
    }
    SpMat R(rows ? s.n_i : K.rows(), cols ? s.n_i : K.cols());
    R.setFromTriplets(t.begin(), t.end());
    R.makeCompressed();
    return R;
}

} // namespace

void MixedSpace::p2_gradients(int c, const std::array<double, 4>& l, Grad10& G) const
{
    double d[10][4];
    tet_p2_dl(l, d);
    for (int i = 0; i < 10; ++i) {
        G.row(i).setZero();
        for (int k = 0; k < 4; ++k)
            G.row(i) += d[i][k] * grad_l[c].row(k);
    }
}

Vec3 MixedSpace::point(int c, const std::array<double, 4>& l) const
{
    const auto& t = mesh->tets[c];
    Vec3 x = Vec3::Zero();
    for (int k = 0; k < 4; ++k)
        x += l[k] * mesh->verts[t[k]];
    return x;
}

Vec MixedSpace::lift_trace(const Vec& tr) const
{
    Vec u = Vec::Zero(n_u);
    for (int j = 0; j < bnd.size(); ++j)
        u.segment<3>(3 * bnd.nodes[j]) = tr.segment<3>(3 * j);
    return u;
}

Vec MixedSpace::trace(const Vec& u) const
{
    Vec tr(bnd.dofs());
    for (int j = 0; j < bnd.size(); ++j)
        tr.segment<3>(3 * j) = u.segment<3>(3 * bnd.nodes[j]);
    return tr;
}

Vec MixedSpace::interpolate(const VecField& f, int tag) const
{
    Vec u = Vec::Zero(n_u);
    for (int n = 0; n < mesh->n_nodes; ++n)
        if (tag < 0 || mesh->node_tag[n] == tag)
            u.segment<3>(3 * n) = f(mesh->node_x[n]);
    return u;
}

Vec MixedSpace::interpolate_trace(const VecField& f) const
{
    Vec tr(bnd.dofs());
    for (int j = 0; j < bnd.size(); ++j)
        tr.segment<3>(3 * j) = f(bnd.x[j]);
    return tr;
}

std::shared_ptr<const MixedSpace> make_space(ExteriorMesh mesh)
{
    return make_space(std::make_shared<const ExteriorMesh>(std::move(mesh)));
}

std::shared_ptr<const MixedSpace> make_space(std::shared_ptr<const ExteriorMesh> mp)
{
    auto sp = std::make_shared<MixedSpace>();
    MixedSpace& s = *sp;
    s.mesh = mp;
    const ExteriorMesh& mesh = *mp;
    s.bnd = make_boundary_space(mesh);
    s.n_u = 3 * mesh.n_nodes;
    s.n_p = mesh.n_vertices();
    s.interior.assign(s.n_u, -1);
    for (int n = 0; n < mesh.n_nodes; ++n)
        if (mesh.node_tag[n] == 0)
            for (int c = 0; c < 3; ++c) {
                s.interior[3 * n + c] = s.n_i++;
                s.interior_dofs.push_back(3 * n + c);
            }
    const int nc = static_cast<int>(mesh.tets.size());
    s.vol.resize(nc);
    s.grad_l.resize(nc);
    for (int c = 0; c < nc; ++c) {
        const auto& t = mesh.tets[c];
        Mat3 J;
        for (int k = 0; k < 3; ++k)
            J.col(k) = mesh.verts[t[k + 1]] - mesh.verts[t[0]];
        s.vol[c] = J.determinant() / 6.0;
        Mat3 Ji = J.inverse(); // rows: grad lambda_1..3
        for (int k = 0; k < 3; ++k)
            s.grad_l[c].row(k + 1) = Ji.row(k);
        s.grad_l[c].row(0) = -(Ji.row(0) + Ji.row(1) + Ji.row(2));
    }

    const RefTable& t2 = ref_table(2);
    s.Kd = assemble_vv(s, [&](int c, Loc30& L) {
        Grad10 G;
        for (std::size_t q = 0; q < t2.rule->w.size(); ++q) {
            grads_at(s, c, t2, q, G);
            double w = t2.rule->w[q] * s.vol[c];
            Eigen::Matrix<double, 10, 10> GG = G * G.transpose();
            for (int b = 0; b < 10; ++b)
                for (int a = 0; a < 10; ++a)
                    for (int j = 0; j < 3; ++j)
                        for (int i = 0; i < 3; ++i)
                            L(3 * b + j, 3 * a + i) += w * ((i == j ? GG(a, b) : 0.0) + G(a, j) * G(b, i));
        }
    });
    s.Lu = assemble_vv(s, [&](int c, Loc30& L) {
        Grad10 G;
        for (std::size_t q = 0; q < t2.rule->w.size(); ++q) {
            grads_at(s, c, t2, q, G);
            double w = t2.rule->w[q] * s.vol[c];
            Eigen::Matrix<double, 10, 10> GG = G * G.transpose();
            for (int b = 0; b < 10; ++b)
                for (int a = 0; a < 10; ++a)
                    for (int i = 0; i < 3; ++i)
                        L(3 * b + i, 3 * a + i) += w * GG(a, b);
        }
    });

    Triplets tb, tp;
    s.m = Vec::Zero(s.n_p);
    cell_loop<4, 30>(nc,
                     [&](int c, Eigen::Matrix<double, 4, 30>& L) {
                         Grad10 G;
                         for (std::size_t q = 0; q < t2.rule->w.size(); ++q) {
                             grads_at(s, c, t2, q, G);
                             double w = t2.rule->w[q] * s.vol[c];
                             for (int k = 0; k < 4; ++k)
                                 for (int a = 0; a < 10; ++a)
                                     for (int i = 0; i < 3; ++i)
                                         L(k, 3 * a + i) -= w * t2.rule->bary[q][k] * G(a, i);
                         }
                     },
                     [&](int c, const Eigen::Matrix<double, 4, 30>& L) {
                         const auto& tv = mesh.tets[c];
                         const auto& tn = mesh.tet_nodes[c];
                         for (int k = 0; k < 4; ++k)
                             for (int a = 0; a < 10; ++a)
                                 for (int i = 0; i < 3; ++i)
                                     if (L(k, 3 * a + i) != 0.0)
                                         tb.emplace_back(tv[k], 3 * tn[a] + i, L(k, 3 * a + i));
                         for (int k = 0; k < 4; ++k) {
                             s.m[tv[k]] += s.vol[c] / 4.0;
                             for (int l = 0; l < 4; ++l)
                                 tp.emplace_back(tv[k], tv[l], s.vol[c] * (k == l ? 0.1 : 0.05));
                         }
                     });
    s.Bd.resize(s.n_p, s.n_u);
    s.Bd.setFromTriplets(tb.begin(), tb.end());
    s.Bd.makeCompressed();
    s.Mp.resize(s.n_p, s.n_p);
    s.Mp.setFromTriplets(tp.begin(), tp.end());
    s.Mp.makeCompressed();
    return sp;
}

SpMat assemble_transport(const MixedSpace& s, const RigidMotion& mo)
{
    const RefTable& t5 = ref_table(5);
    return assemble_vv(s, [&](int c, Loc30& L) {
        Grad10 G;
        Mat3 W; // (omega x e_i)_j at (j, i)
        for (int i = 0; i < 3; ++i)
            W.col(i) = mo.omega.cross(Vec3::Unit(i));
        for (std::size_t q = 0; q < t5.rule->w.size(); ++q) {
            grads_at(s, c, t5, q, G);
            double w = t5.rule->w[q] * s.vol[c];
            Vec3 V = mo(s.point(c, t5.rule->bary[q]));
            Eigen::Matrix<double, 10, 1> Vg = G * V;
            const auto& phi = t5.phi[q];
            for (int b = 0; b < 10; ++b)
                for (int a = 0; a < 10; ++a) {
                    double tr = -w * Vg[a] * phi[b];
                    double pp = w * phi[a] * phi[b];
                    for (int j = 0; j < 3; ++j)
                        for (int i = 0; i < 3; ++i)
                            L(3 * b + j, 3 * a + i) += (i == j ? tr : 0.0) + pp * W(j, i);
                }
        }
    });
}

OseenOperator assemble_oseen(std::shared_ptr<const MixedSpace> sp, const RigidMotion& mo, const SolverOptions& o)
{
    OseenOperator op;
    op.space = sp;
    op.motion = mo;
    op.opts = o;
    const MixedSpace& s = *sp;
    if (mo.is_zero())
        op.Kt = SpMat(s.n_u, s.n_u);
    else
        op.Kt = assemble_transport(s, mo);
    op.K = s.Kd + op.Kt;
    op.K.makeCompressed();
    SpMat KII = restrict_interior(s, op.K, true, true);
    SpMat BI = restrict_interior(s, s.Bd, false, true);
    IterativeOptions io;
    io.rel_tol = o.rel_tol;
    op.solver = std::make_shared<SaddleSolver>(KII, BI, s.m, s.Mp, o.direct_limit, io);
    return op;
}

FemSolution solve_dirichlet(const OseenOperator& op, const Vec& u_bc0, const Vec& load, bool transpose)
{
    const MixedSpace& s = *op.space;
    Vec u_bc = u_bc0.size() ? u_bc0 : Vec(Vec::Zero(s.n_u));
    for (int d : s.interior_dofs)
        u_bc[d] = 0.0;
    Vec ru = transpose ? Vec(-(op.K.transpose() * u_bc)) : Vec(-(op.K * u_bc));
    if (load.size())
        ru += load;
    Vec rhs = Vec::Zero(s.n_i + s.n_p + 1);
    for (int k = 0; k < s.n_i; ++k)
        rhs[k] = ru[s.interior_dofs[k]];
    rhs.segment(s.n_i, s.n_p) = -(s.Bd * u_bc);
    Vec x = transpose ? op.solver->solve_transpose(rhs) : op.solver->solve(rhs);
    if (!x.allFinite())
        throw Error(ErrorCode::numerical, "saddle solve produced non-finite values");
    FemSolution out;
    out.u = u_bc;
    for (int k = 0; k < s.n_i; ++k)
        out.u[s.interior_dofs[k]] = x[k];
    out.p = x.segment(s.n_i, s.n_p);
    out.lambda = x[s.n_i + s.n_p];
    return out;
}

Vec residual(const OseenOperator& op, const Vec& u, const Vec& p, const Vec& load, bool transpose)
{
    const MixedSpace& s = *op.space;
    Vec r = transpose ? Vec(op.K.transpose() * u) : Vec(op.K * u);
    r += s.Bd.transpose() * p;
    if (load.size())
        r -= load;
    return r;
}

Vec traction_functional(const OseenOperator& op, const FemSolution& sol, const Vec& load, bool transpose)
{
    return op.space->trace(residual(op, sol.u, sol.p, load, transpose));
}

Vec mass_solve(const BoundarySpace& b, const Vec& T)
{
    const int n = b.size();
    Eigen::Map<const Eigen::Matrix<double, 3, Eigen::Dynamic>> Tm(T.data(), 3, n);
    Mat rhs = Tm.transpose();
    Mat x = b.mass_factor->solve(rhs);
    Vec out(3 * n);
    Eigen::Map<Eigen::Matrix<double, 3, Eigen::Dynamic>>(out.data(), 3, n) = x.transpose();
    return out;
}

Vec boundary_traction(const OseenOperator& op, const FemSolution& sol, const Vec& load, bool transpose)
{
    return mass_solve(op.space->bnd, traction_functional(op, sol, load, transpose));
}

Vec6 force_torque(const MixedSpace& s, const Vec& T)
{
    Vec6 ft = Vec6::Zero();
    for (int j = 0; j < s.bnd.size(); ++j) {
        Vec3 t = T.segment<3>(3 * j);
        ft.head<3>() += t;
        ft.tail<3>() += s.bnd.x[j].cross(t);
    }
    return ft;
}

Vec load_vector(const MixedSpace& s, const VecField& f)
{
    const RefTable& t5 = ref_table(5);
    const auto& mesh = *s.mesh;
    const int nc = static_cast<int>(mesh.tets.size());
    std::vector<Eigen::Matrix<double, 30, 1>> loc(nc);
    parallel_for(static_cast<std::size_t>(nc), [&](std::size_t ci) {
        int c = static_cast<int>(ci);
        loc[c].setZero();
        for (std::size_t q = 0; q < t5.rule->w.size(); ++q) {
            Vec3 fx = f(s.point(c, t5.rule->bary[q]));
            double w = t5.rule->w[q] * s.vol[c];
            for (int b = 0; b < 10; ++b)
                loc[c].segment<3>(3 * b) += w * t5.phi[q][b] * fx;
        }
    });
    Vec F = Vec::Zero(s.n_u);
    for (int c = 0; c < nc; ++c)
        for (int b = 0; b < 10; ++b)
            F.segment<3>(3 * mesh.tet_nodes[c][b]) += loc[c].segment<3>(3 * b);
    return F;
}

namespace {

void cell_values(const MixedSpace& s, const Vec& v, int c, Eigen::Matrix<double, 10, 3>& vl)
{
    const auto& tn = s.mesh->tet_nodes[c];
    for (int a = 0; a < 10; ++a)
        vl.row(a) = v.segment<3>(3 * tn[a]).transpose();
}

} // namespace

Vec convection(const MixedSpace& s, const Vec& v)
{
    const RefTable& t5 = ref_table(5);
    const auto& mesh = *s.mesh;
    const int nc = static_cast<int>(mesh.tets.size());
    std::vector<Eigen::Matrix<double, 30, 1>> loc(nc);
    parallel_for(static_cast<std::size_t>(nc), [&](std::size_t ci) {
        int c = static_cast<int>(ci);
        loc[c].setZero();
        Eigen::Matrix<double, 10, 3> vl;
        cell_values(s, v, c, vl);
        if (vl.isZero(0.0))
            return;
        Grad10 G;
        for (std::size_t q = 0; q < t5.rule->w.size(); ++q) {
            grads_at(s, c, t5, q, G);
            Eigen::Matrix<double, 1, 10> phi = Eigen::Map<const Eigen::Matrix<double, 1, 10>>(t5.phi[q].data());
            Vec3 vq = (phi * vl).transpose();
            Mat3 gv = vl.transpose() * G; // (j, i) = d_i v_j
            Vec3 conv = gv * vq;
            double w = t5.rule->w[q] * s.vol[c];
            for (int b = 0; b < 10; ++b)
                loc[c].segment<3>(3 * b) += w * phi[b] * conv;
        }
    });
    Vec N = Vec::Zero(s.n_u);
    for (int c = 0; c < nc; ++c)
        for (int b = 0; b < 10; ++b)
            N.segment<3>(3 * mesh.tet_nodes[c][b]) += loc[c].segment<3>(3 * b);
    return N;
}

Vec convection_flux_form(const MixedSpace& s, const Vec& v)
{
    const RefTable& t5 = ref_table(5);
    const auto& mesh = *s.mesh;
    const int nc = static_cast<int>(mesh.tets.size());
    std::vector<Eigen::Matrix<double, 30, 1>> loc(nc);
    parallel_for(static_cast<std::size_t>(nc), [&](std::size_t ci) {
        int c = static_cast<int>(ci);
        loc[c].setZero();
        Eigen::Matrix<double, 10, 3> vl;
        cell_values(s, v, c, vl);
        if (vl.isZero(0.0))
            return;
        Grad10 G;
        for (std::size_t q = 0; q < t5.rule->w.size(); ++q) {
            grads_at(s, c, t5, q, G);
            Eigen::Matrix<double, 1, 10> phi = Eigen::Map<const Eigen::Matrix<double, 1, 10>>(t5.phi[q].data());
            Vec3 vq = (phi * vl).transpose();
            double w = t5.rule->w[q] * s.vol[c];
            for (int b = 0; b < 10; ++b)
                loc[c].segment<3>(3 * b) += w * G.row(b).dot(vq) * vq;
        }
    });
    Vec F = Vec::Zero(s.n_u);
    for (int c = 0; c < nc; ++c)
        for (int b = 0; b < 10; ++b)
            F.segment<3>(3 * mesh.tet_nodes[c][b]) += loc[c].segment<3>(3 * b);
    return F;
}

Vec mapping_F_load(const MixedSpace& s, const Vec& vhat, const Vec& u, double* l2)
{
    const RefTable& t5 = ref_table(5);
    const auto& mesh = *s.mesh;
    const int nc = static_cast<int>(mesh.tets.size());
    std::vector<Eigen::Matrix<double, 30, 1>> loc(nc);
    std::vector<double> sq(nc, 0.0);
    parallel_for(static_cast<std::size_t>(nc), [&](std::size_t ci) {
        int c = static_cast<int>(ci);
        loc[c].setZero();
        Eigen::Matrix<double, 10, 3> vl, ul;
        cell_values(s, vhat, c, vl);
        cell_values(s, u, c, ul);
        if (vl.isZero(0.0) || ul.isZero(0.0))
            return;
        Grad10 G;
        for (std::size_t q = 0; q < t5.rule->w.size(); ++q) {
            grads_at(s, c, t5, q, G);
            Eigen::Matrix<double, 1, 10> phi = Eigen::Map<const Eigen::Matrix<double, 1, 10>>(t5.phi[q].data());
            Vec3 vq = (phi * vl).transpose();
            Mat3 gu = ul.transpose() * G; // (j, i) = d_i u_j
            Vec3 F = (gu + gu.transpose()) * vq;
            double w = t5.rule->w[q] * s.vol[c];
            sq[c] += w * F.squaredNorm();
            for (int b = 0; b < 10; ++b)
                loc[c].segment<3>(3 * b) += w * phi[b] * F;
        }
    });
    Vec out = Vec::Zero(s.n_u);
    double acc = 0;
    for (int c = 0; c < nc; ++c) {
        acc += sq[c];
        for (int b = 0; b < 10; ++b)
            out.segment<3>(3 * mesh.tet_nodes[c][b]) += loc[c].segment<3>(3 * b);
    }
    if (l2)
        *l2 = std::sqrt(acc);
    return out;
}

SpMat convection_jacobian(const MixedSpace& s, const Vec& v)
{
    const RefTable& t5 = ref_table(5);
    return assemble_vv(s, [&](int c, Loc30& L) {
        Eigen::Matrix<double, 10, 3> vl;
        cell_values(s, v, c, vl);
        if (vl.isZero(0.0))
            return;
        Grad10 G;
        for (std::size_t q = 0; q < t5.rule->w.size(); ++q) {
            grads_at(s, c, t5, q, G);
            Eigen::Matrix<double, 1, 10> phi = Eigen::Map<const Eigen::Matrix<double, 1, 10>>(t5.phi[q].data());
            Vec3 vq = (phi * vl).transpose();
            Mat3 gv = vl.transpose() * G;
            Eigen::Matrix<double, 10, 1> vg = G * vq;
            double w = t5.rule->w[q] * s.vol[c];
            for (int b = 0; b < 10; ++b)
                for (int a = 0; a < 10; ++a) {
                    double pb = w * phi[b];
                    for (int j = 0; j < 3; ++j) {
                        for (int i = 0; i < 3; ++i)
                            L(3 * b + j, 3 * a + i) += pb * phi[a] * gv(j, i);
                        L(3 * b + j, 3 * a + j) += pb * vg[a];
                    }
                }
        }
    });
}

double nodal_flux(const BoundarySpace& b, const Vec& tr)
{
    double f = 0;
    for (int j = 0; j < b.size(); ++j)
        f += b.node_integral[j] * tr.segment<3>(3 * j).dot(b.nodal_normal[j]);
    return f;
}

FieldNorms functional_norms(const MixedSpace& s, const Vec& u, const Vec& q, const WeightFn* wf)
{
    const RefTable& t5 = ref_table(5);
    const auto& mesh = *s.mesh;
    const int nc = static_cast<int>(mesh.tets.size());
    struct Acc {
        double g = 0, h = 0, l2 = 0, inf = 0, q2 = 0, ws = 0;
    };
    std::vector<Acc> acc(nc);
    parallel_for(static_cast<std::size_t>(nc), [&](std::size_t ci) {
        int c = static_cast<int>(ci);
        Acc a;
        Eigen::Matrix<double, 10, 3> vl;
        cell_values(s, u, c, vl);
        const auto& tv = mesh.tets[c];
        Grad10 G;
        for (std::size_t k = 0; k < t5.rule->w.size(); ++k) {
            grads_at(s, c, t5, k, G);
            Eigen::Matrix<double, 1, 10> phi = Eigen::Map<const Eigen::Matrix<double, 1, 10>>(t5.phi[k].data());
            Vec3 uq = (phi * vl).transpose();
            Mat3 gu = vl.transpose() * G;
            double qq = 0;
            if (q.size())
                for (int l = 0; l < 4; ++l)
                    qq += t5.rule->bary[k][l] * q[tv[l]];
            double w = t5.rule->w[k] * s.vol[c];
            a.g += w * gu.squaredNorm();
            a.l2 += w * uq.squaredNorm();
            a.q2 += w * qq * qq;
            a.inf = std::max(a.inf, uq.norm());
            double wx = wf ? (*wf)(s.point(c, t5.rule->bary[k])) : 1.0;
            a.ws = std::max(a.ws, wx * uq.norm());
        }
        // second derivatives are constant per cell
        const auto& gl = s.grad_l[c];
        double h2 = 0;
        for (int comp = 0; comp < 3; ++comp) {
            Mat3 H = Mat3::Zero();
            for (int i = 0; i < 4; ++i)
                H += 4.0 * vl(i, comp) * gl.row(i).transpose() * gl.row(i);
            for (int e = 0; e < 6; ++e) {
                int x = kTetEdges[e][0], y = kTetEdges[e][1];
                H += 4.0 * vl(4 + e, comp) *
                     (gl.row(x).transpose() * gl.row(y) + gl.row(y).transpose() * gl.row(x));
            }
            h2 += H.squaredNorm();
        }
        a.h = h2 * s.vol[c];
        acc[c] = a;
    });
    FieldNorms n;
    for (const auto& a : acc) {
        n.grad_u += a.g;
        n.hess_u += a.h;
        n.u_l2 += a.l2;
        n.q_l2 += a.q2;
        n.u_inf = std::max(n.u_inf, a.inf);
        n.weighted_sup = std::max(n.weighted_sup, a.ws);
    }
    n.grad_u = std::sqrt(n.grad_u);
    n.hess_u = std::sqrt(n.hess_u);
    n.u_l2 = std::sqrt(n.u_l2);
    n.q_l2 = std::sqrt(n.q_l2);
    n.flux = nodal_flux(s.bnd, s.trace(u));
    return n;
}

double l2_error(const MixedSpace& s, const Vec& u, const VecField& exact)
{
    const RefTable& t5 = ref_table(5);
    const int nc = static_cast<int>(s.mesh->tets.size());
    std::vector<double> e(nc, 0.0);
    parallel_for(static_cast<std::size_t>(nc), [&](std::size_t ci) {
        int c = static_cast<int>(ci);
        Eigen::Matrix<double, 10, 3> vl;
        cell_values(s, u, c, vl);
        for (std::size_t k = 0; k < t5.rule->w.size(); ++k) {
            Eigen::Matrix<double, 1, 10> phi = Eigen::Map<const Eigen::Matrix<double, 1, 10>>(t5.phi[k].data());
            Vec3 d = (phi * vl).transpose() - exact(s.point(c, t5.rule->bary[k]));
            e[c] += t5.rule->w[k] * s.vol[c] * d.squaredNorm();
        }
    });
    double sum = 0;
    for (double v : e)
        sum += v;
    return std::sqrt(sum);
}

double inf_sup_probe(const MixedSpace& s, int dense_limit, int iters)
{
    SpMat KII = restrict_interior(s, s.Kd, true, true);
    SpMat BI = restrict_interior(s, s.Bd, false, true);
    Eigen::SimplicialLDLT<SpMat> kf(KII);
    if (kf.info() != Eigen::Success)
        throw Error(ErrorCode::numerical, "inf-sup probe: velocity block not positive definite");
    const int np = s.n_p;
    Vec ones = Vec::Ones(np);
    Vec Mp1 = s.Mp * ones;
    const double one_M_one = ones.dot(Mp1);
    auto Sapply = [&](const Vec& p) -> Vec { return BI * kf.solve(Vec(BI.transpose() * p)); };
    if (np <= dense_limit) {
        Mat S(np, np);
        for (int k = 0; k < np; ++k)
            S.col(k) = Sapply(Vec::Unit(np, k));
        S = 0.5 * (S + S.transpose()).eval();
        Mat M = Mat(s.Mp);
        Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(S, M, Eigen::EigenvaluesOnly);
        // the first eigenvalue belongs to the constant pressure
        return std::sqrt(std::max(0.0, es.eigenvalues()[1]));
    }
    Eigen::SimplicialLDLT<SpMat> mf(s.Mp);
    auto project = [&](Vec& p) { p -= (Mp1.dot(p) / one_M_one) * ones; };
    auto rq = [&](const Vec& p) { return p.dot(Sapply(p)) / p.dot(s.Mp * p); };
    Vec p = Vec::LinSpaced(np, -1.0, 1.0).array().sin();
    project(p);
    double mu_max = 0;
    for (int it = 0; it < 60; ++it) {
        p = mf.solve(Sapply(p));
        project(p);
        p.normalize();
        mu_max = rq(p);
    }
    double shift = 1.05 * mu_max;
    p = Vec::LinSpaced(np, 0.0, 3.0).array().cos();
    project(p);
    double mu = mu_max;
    for (int it = 0; it < iters; ++it) {
        p = shift * p - mf.solve(Sapply(p));
        project(p);
        p.normalize();
        mu = rq(p);
    }
    return std::sqrt(std::max(0.0, mu));
}

} // namespace selfprop
