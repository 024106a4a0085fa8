#include "selfprop/basis.hpp"

#include "selfprop/parallel.hpp"

#include <Eigen/SVD>

#include <cstring>
#include <fstream>
#include <sstream>

namespace selfprop {

SpMat flux_mass(const BoundarySpace& b, const RigidMotion& m)
{
    return b.weighted_mass([&](int f, const Vec3& x) { return m(x).dot(b.face_normal[f]); });
}

Traces6 rigid_traces(const MixedSpace& s)
{
    Traces6 E;
    for (int i = 0; i < 6; ++i)
        E[i] = s.interpolate_trace([i](const Vec3& x) { return rigid_mode(i, x); });
    return E;
}

Flows6 solve_basic_motions(const OseenOperator& op)
{
    const MixedSpace& s = *op.space;
    Traces6 E = rigid_traces(s);
    Flows6 out;
    parallel_for(6, [&](std::size_t i) { out[i] = solve_dirichlet(op, s.lift_trace(E[i]), Vec(), true); });
    return out;
}

Traces6 traction_basis(const OseenOperator& op, const Flows6& basic, const SpMat& MV)
{
    const MixedSpace& s = *op.space;
    Traces6 g;
    for (int i = 0; i < 6; ++i) {
        Vec T = traction_functional(op, basic[i], Vec(), true);
        g[i] = mass_solve(s.bnd, Vec(T + apply_componentwise(MV, s.trace(basic[i].u))));
    }
    return g;
}

Traces6 control_basis(const BoundarySpace& b, const Traces6& g, TraceKind kind, const Vec& chi)
{
    Traces6 B;
    if (kind == TraceKind::localized) {
        if (chi.size() != b.size())
            throw Error(ErrorCode::precondition, "chi must be given on the body nodes");
        if (chi.maxCoeff() <= 0.0)
            throw Error(ErrorCode::config, "degenerate control: chi vanishes identically on Gamma");
        for (int j = 0; j < b.size(); ++j)
            if (chi[j] < 0.0 || (chi[j] != 0.0 && !b.gamma_interior[j]))
                throw Error(ErrorCode::precondition, "chi must be non-negative and supported in Gamma");
    }
    for (int i = 0; i < 6; ++i) {
        B[i] = g[i];
        for (int j = 0; j < b.size(); ++j) {
            Vec3 v = g[i].segment<3>(3 * j);
            if (kind == TraceKind::tangential) {
                const Vec3& n = b.unit_normal[j];
                B[i].segment<3>(3 * j) = v.cross(n).cross(n);
            } else if (kind == TraceKind::localized) {
                B[i].segment<3>(3 * j) = chi[j] * v;
            }
        }
    }
    return B;
}

Mat6 assemble_A(const BoundarySpace& b, const Traces6& g, const Traces6& fields)
{
    Mat6 A;
    for (int k = 0; k < 6; ++k) {
        Vec MB = b.mass_apply(fields[k]);
        for (int i = 0; i < 6; ++i)
            A(i, k) = g[i].dot(MB);
    }
    return A;
}

namespace {

double condition(const Mat6& A)
{
    Eigen::JacobiSVD<Mat6> svd(A);
    const auto& sv = svd.singularValues();
    return sv[5] > 0 ? sv[0] / sv[5] : std::numeric_limits<double>::infinity();
}

void finish(PropulsionBasis& pb)
{
    pb.cond = condition(pb.A);
    if (!(pb.cond < 1e12)) {
        std::ostringstream os;
        os << "corrector matrix A is singular (condition " << pb.cond
           << "); use smaller (xi, omega) or a finer mesh";
        throw Error(ErrorCode::config, os.str());
    }
}

} // namespace

Vec6 PropulsionBasis::solve_A(const Vec6& rhs) const { return A.fullPivLu().solve(rhs); }
Vec6 PropulsionBasis::solve_At(const Vec6& rhs) const { return A.transpose().fullPivLu().solve(rhs); }

Vec PropulsionBasis::corrector(const Vec6& gamma) const
{
    Vec c = Vec::Zero(fields[0].size());
    for (int k = 0; k < 6; ++k)
        c += gamma[k] * fields[k];
    return c;
}

PropulsionBasis build_basis(std::shared_ptr<const OseenOperator> op, TraceKind kind, const Vec& chi)
{
    const MixedSpace& s = *op->space;
    PropulsionBasis pb;
    pb.op = op;
    pb.kind = kind;
    pb.chi = chi.size() ? chi : Eigen::Map<const Vec>(s.bnd.chi.data(), s.bnd.size());
    pb.MV = flux_mass(s.bnd, op->motion);
    pb.E = rigid_traces(s);
    pb.basic = solve_basic_motions(*op);
    pb.g = traction_basis(*op, pb.basic, pb.MV);
    pb.fields = control_basis(s.bnd, pb.g, kind, pb.chi);
    parallel_for(6, [&](std::size_t k) { pb.lifts[k] = solve_dirichlet(*op, s.lift_trace(pb.fields[k]), Vec()); });
    pb.A = assemble_A(s.bnd, pb.g, pb.fields);
    finish(pb);
    return pb;
}

namespace {

constexpr char kBasisMagic[8] = {'S', 'P', 'B', 'A', 'S', 'I', '0', '1'};

void put_vec(std::ostream& os, const Vec& v)
{
    std::int64_t n = v.size();
    os.write(reinterpret_cast<const char*>(&n), sizeof n);
    os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
}

Vec get_vec(std::istream& is)
{
    std::int64_t n = 0;
    is.read(reinterpret_cast<char*>(&n), sizeof n);
    if (!is || n < 0 || n > (1ll << 32))
        throw Error(ErrorCode::io, "basis file corrupt");
    Vec v(n);
    is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!is)
        throw Error(ErrorCode::io, "basis file truncated");
    return v;
}

void put_flow(std::ostream& os, const FemSolution& f)
{
    put_vec(os, f.u);
    put_vec(os, f.p);
    os.write(reinterpret_cast<const char*>(&f.lambda), sizeof f.lambda);
}

FemSolution get_flow(std::istream& is)
{
    FemSolution f;
    f.u = get_vec(is);
    f.p = get_vec(is);
    is.read(reinterpret_cast<char*>(&f.lambda), sizeof f.lambda);
    return f;
}

} // namespace

void save_basis(const std::string& path, const PropulsionBasis& b)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw Error(ErrorCode::io, "cannot write " + path);
    os.write(kBasisMagic, 8);
    std::int32_t k = static_cast<std::int32_t>(b.kind);
    os.write(reinterpret_cast<const char*>(&k), sizeof k);
    Vec mo(6);
    mo << b.op->motion.xi, b.op->motion.omega;
    put_vec(os, mo);
    std::uint64_t h = b.op->space->mesh->hash();
    os.write(reinterpret_cast<const char*>(&h), sizeof h);
    put_vec(os, b.chi);
    for (int i = 0; i < 6; ++i) {
        put_flow(os, b.basic[i]);
        put_vec(os, b.g[i]);
        put_vec(os, b.fields[i]);
        put_flow(os, b.lifts[i]);
    }
    os.write(reinterpret_cast<const char*>(b.A.data()), sizeof(double) * 36);
    if (!os)
        throw Error(ErrorCode::io, "write failed: " + path);
}

PropulsionBasis load_basis(const std::string& path, std::shared_ptr<const OseenOperator> op)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw Error(ErrorCode::io, "cannot read " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kBasisMagic, 8) != 0)
        throw Error(ErrorCode::io, "not a basis file (bad header or version): " + path);
    PropulsionBasis b;
    b.op = op;
    std::int32_t k = 0;
    is.read(reinterpret_cast<char*>(&k), sizeof k);
    b.kind = static_cast<TraceKind>(k);
    Vec mo = get_vec(is);
    std::uint64_t h = 0;
    is.read(reinterpret_cast<char*>(&h), sizeof h);
    if (mo.size() != 6 || (mo.head<3>() - op->motion.xi).norm() != 0.0 ||
        (mo.tail<3>() - op->motion.omega).norm() != 0.0 || h != op->space->mesh->hash())
        throw Error(ErrorCode::io, "basis file does not match the mesh or motion: " + path);
    b.chi = get_vec(is);
    for (int i = 0; i < 6; ++i) {
        b.basic[i] = get_flow(is);
        b.g[i] = get_vec(is);
        b.fields[i] = get_vec(is);
        b.lifts[i] = get_flow(is);
    }
    is.read(reinterpret_cast<char*>(b.A.data()), sizeof(double) * 36);
    if (!is)
        throw Error(ErrorCode::io, "basis file truncated");
    const MixedSpace& s = *op->space;
    b.MV = flux_mass(s.bnd, op->motion);
    b.E = rigid_traces(s);
    finish(b);
    return b;
}

} // namespace selfprop
