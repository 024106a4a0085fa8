#include "selfprop/mesh.hpp"

#include "selfprop/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

namespace selfprop {

namespace {

std::uint64_t edge_key(int a, int b)
{
    if (a > b)
        std::swap(a, b);
    return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b);
}

double signed_volume(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d)
{
    return (b - a).dot((c - a).cross(d - a)) / 6.0;
}

// Prism (a,b,c)-(a',b',c') to three tets. Diagonals start at the smaller
// surface index of each quad so neighbouring prisms agree.
void split_prism(std::array<int, 3> s, int lo, int hi, std::vector<std::array<int, 4>>& out)
{
    int r = static_cast<int>(std::min_element(s.begin(), s.end()) - s.begin());
    std::rotate(s.begin(), s.begin() + r, s.end());
    const int a = s[0], b = s[1], c = s[2];
    auto B = [&](int v) { return lo + v; };
    auto T = [&](int v) { return hi + v; };
    if (b < c) {
        out.push_back({B(a), B(b), B(c), T(c)});
        out.push_back({B(a), B(b), T(b), T(c)});
        out.push_back({B(a), T(b), T(a), T(c)});
    } else {
        out.push_back({B(a), B(b), B(c), T(b)});
        out.push_back({B(a), B(c), T(c), T(b)});
        out.push_back({B(a), T(c), T(a), T(b)});
    }
}

template <class T>
void put(std::ostream& os, const T& v)
{
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
void get(std::istream& is, T& v)
{
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is)
        throw Error(ErrorCode::io, "mesh file truncated");
}

template <class T>
void put_vec(std::ostream& os, const std::vector<T>& v)
{
    std::uint64_t n = v.size();
    put(os, n);
    os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
}

template <class T>
void get_vec(std::istream& is, std::vector<T>& v)
{
    std::uint64_t n = 0;
    get(is, n);
    if (n > (1ull << 34))
        throw Error(ErrorCode::io, "mesh file corrupt");
    v.resize(n);
    is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
    if (!is)
        throw Error(ErrorCode::io, "mesh file truncated");
}

constexpr char kMeshMagic[8] = {'S', 'P', 'M', 'E', 'S', 'H', '0', '1'};

} // namespace

double tet_min_dihedral(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d)
{
    const std::array<Vec3, 4> p{a, b, c, d};
    // face i opposite vertex i, outward normals
    std::array<Vec3, 4> n;
    for (int i = 0; i < 4; ++i) {
        const Vec3& q0 = p[(i + 1) % 4];
        const Vec3& q1 = p[(i + 2) % 4];
        const Vec3& q2 = p[(i + 3) % 4];
        Vec3 v = (q1 - q0).cross(q2 - q0);
        if (v.dot(p[i] - q0) > 0)
            v = -v;
        double len = v.norm();
        if (len == 0)
            return 0.0;
        n[i] = v / len;
    }
    double best = 180.0;
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j) {
            double cosang = std::clamp(-n[i].dot(n[j]), -1.0, 1.0);
            best = std::min(best, std::acos(cosang) * 180.0 / std::numbers::pi);
        }
    return best;
}

std::uint64_t ExteriorMesh::hash() const
{
    std::uint64_t hsh = 1469598103934665603ull;
    auto mix = [&](const void* data, std::size_t n) {
        const auto* c = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            hsh ^= c[i];
            hsh *= 1099511628211ull;
        }
    };
    mix(verts.data(), verts.size() * sizeof(Vec3));
    mix(tets.data(), tets.size() * sizeof(tets[0]));
    mix(body.surface.tags.data(), body.surface.tags.size() * sizeof(int));
    mix(&R_inf, sizeof R_inf);
    mix(&h, sizeof h);
    return hsh;
}

int ExteriorMesh::edge_node(int a, int b) const
{
    auto k = edge_key(a, b);
    auto it = std::lower_bound(edge_keys.begin(), edge_keys.end(), k);
    if (it == edge_keys.end() || *it != k)
        throw Error(ErrorCode::geometry, "edge not in mesh");
    return n_vertices() + static_cast<int>(it - edge_keys.begin());
}

namespace {

void finish_p2(ExteriorMesh& m)
{
    const int nv = m.n_vertices();
    m.edge_keys.clear();
    m.edge_keys.reserve(m.tets.size() * 6);
    for (const auto& t : m.tets)
        for (const auto& e : kTetEdges)
            m.edge_keys.push_back(edge_key(t[e[0]], t[e[1]]));
    std::sort(m.edge_keys.begin(), m.edge_keys.end());
    m.edge_keys.erase(std::unique(m.edge_keys.begin(), m.edge_keys.end()), m.edge_keys.end());
    m.n_nodes = nv + static_cast<int>(m.edge_keys.size());
    m.node_x.resize(m.n_nodes);
    m.node_tag.assign(m.n_nodes, 0);
    const int nsv = m.n_surface_vertices();
    for (int v = 0; v < nv; ++v) {
        m.node_x[v] = m.verts[v];
        int layer = v / nsv;
        m.node_tag[v] = layer == 0 ? 1 : (layer == m.layers ? 2 : 0);
    }
    for (std::size_t e = 0; e < m.edge_keys.size(); ++e) {
        int a = static_cast<int>(m.edge_keys[e] >> 32), b = static_cast<int>(m.edge_keys[e] & 0xffffffffu);
        m.node_x[nv + e] = 0.5 * (m.verts[a] + m.verts[b]);
        if (m.node_tag[a] != 0 && m.node_tag[a] == m.node_tag[b])
            m.node_tag[nv + e] = m.node_tag[a];
    }
    m.tet_nodes.resize(m.tets.size());
    for (std::size_t c = 0; c < m.tets.size(); ++c) {
        const auto& t = m.tets[c];
        auto& tn = m.tet_nodes[c];
        for (int i = 0; i < 4; ++i)
            tn[i] = t[i];
        for (int e = 0; e < 6; ++e)
            tn[4 + e] = m.edge_node(t[kTetEdges[e][0]], t[kTetEdges[e][1]]);
    }
}

} // namespace

ExteriorMesh build_mesh(const BodyGeometry& body0, double R_inf, double h, const MeshOptions& o)
{
    if (!(R_inf > 0) || !(h > 0))
        throw Error(ErrorCode::precondition, "build_mesh: R_inf and h must be positive");
    const double rc = body0.surface.circumradius();
    if (!(R_inf > 2.0 * rc)) {
        std::ostringstream os;
        os << "build_mesh: R_inf = " << R_inf << " must exceed twice the body circumradius " << rc;
        throw Error(ErrorCode::precondition, os.str());
    }
    ExteriorMesh m;
    m.R_inf = R_inf;
    m.h = h;
    m.body = body0;
    for (int lvl = 0; m.body.surface.mean_edge() > 1.25 * h; ++lvl) {
        if (lvl >= 8)
            throw Error(ErrorCode::geometry, "build_mesh: surface refinement did not reach the target size");
        m.body = refine_body(m.body, 1);
    }
    const SurfaceMesh& s = m.body.surface;
    const int nsv = static_cast<int>(s.verts.size());

    std::vector<int> bad;
    for (std::size_t f = 0; f < s.tris.size(); ++f) {
        const auto& t = s.tris[f];
        if (s.verts[t[0]].dot(s.verts[t[1]].cross(s.verts[t[2]])) <= 0)
            bad.push_back(static_cast<int>(f));
    }
    if (!bad.empty()) {
        std::ostringstream os;
        os << "build_mesh: surface is not star-shaped about the origin; faces";
        for (std::size_t i = 0; i < std::min<std::size_t>(bad.size(), 20); ++i)
            os << ' ' << bad[i];
        throw Error(ErrorCode::geometry, os.str());
    }

    double rmin = 1e300, rmean = 0;
    for (const auto& v : s.verts) {
        rmin = std::min(rmin, v.norm());
        rmean += v.norm();
    }
    rmean /= nsv;
    m.layers = std::max(1, static_cast<int>(std::ceil(std::log(R_inf / rmin) / std::log(1.0 + h / rmean))));
    const int L = m.layers;

    m.verts.resize(static_cast<std::size_t>(L + 1) * nsv);
    for (int k = 0; k <= L; ++k)
        for (int v = 0; v < nsv; ++v) {
            const Vec3& x = s.verts[v];
            double r = x.norm();
            double rk = k == L ? R_inf : r * std::pow(R_inf / r, static_cast<double>(k) / L);
            m.verts[static_cast<std::size_t>(k) * nsv + v] = x * (rk / r);
        }
    m.tets.reserve(static_cast<std::size_t>(L) * s.tris.size() * 3);
    for (int k = 0; k < L; ++k)
        for (const auto& t : s.tris)
            split_prism(t, k * nsv, (k + 1) * nsv, m.tets);
    for (auto& t : m.tets)
        if (signed_volume(m.verts[t[0]], m.verts[t[1]], m.verts[t[2]], m.verts[t[3]]) < 0)
            std::swap(t[2], t[3]);
    for (const auto& t : s.tris)
        m.far_faces.push_back({t[0] + L * nsv, t[1] + L * nsv, t[2] + L * nsv});

    m.min_dihedral = 180.0;
    std::vector<int> slivers;
    for (std::size_t c = 0; c < m.tets.size(); ++c) {
        const auto& t = m.tets[c];
        double vol = signed_volume(m.verts[t[0]], m.verts[t[1]], m.verts[t[2]], m.verts[t[3]]);
        m.volume += vol;
        double q = tet_min_dihedral(m.verts[t[0]], m.verts[t[1]], m.verts[t[2]], m.verts[t[3]]);
        m.min_dihedral = std::min(m.min_dihedral, q);
        if (q < o.min_dihedral_deg || !(vol > 0))
            slivers.push_back(static_cast<int>(c));
    }
    if (!slivers.empty()) {
        std::ostringstream os;
        os << "build_mesh: " << slivers.size() << " cells below the dihedral threshold " << o.min_dihedral_deg
           << " deg; cells";
        for (std::size_t i = 0; i < std::min<std::size_t>(slivers.size(), 20); ++i)
            os << ' ' << slivers[i];
        throw Error(ErrorCode::geometry, os.str());
    }
    finish_p2(m);
    return m;
}

void save_mesh(const std::string& path, const ExteriorMesh& m)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw Error(ErrorCode::io, "cannot write " + path);
    os.write(kMeshMagic, 8);
    put(os, m.R_inf);
    put(os, m.h);
    put(os, m.layers);
    put(os, m.body.sphere_radius);
    put(os, m.body.gamma_tag);
    put_vec(os, m.body.surface.verts);
    put_vec(os, m.body.surface.tris);
    put_vec(os, m.body.surface.tags);
    put_vec(os, m.verts);
    put_vec(os, m.tets);
    put_vec(os, m.far_faces);
    put(os, m.min_dihedral);
    put(os, m.volume);
    if (!os)
        throw Error(ErrorCode::io, "write failed: " + path);
}

ExteriorMesh load_mesh(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw Error(ErrorCode::io, "cannot read " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMeshMagic, 8) != 0)
        throw Error(ErrorCode::io, "not a mesh file (bad header or version): " + path);
    ExteriorMesh m;
    double sphere_r = 0;
    int gtag = 1;
    get(is, m.R_inf);
    get(is, m.h);
    get(is, m.layers);
    get(is, sphere_r);
    get(is, gtag);
    SurfaceMesh s;
    get_vec(is, s.verts);
    get_vec(is, s.tris);
    get_vec(is, s.tags);
    get_vec(is, m.verts);
    get_vec(is, m.tets);
    get_vec(is, m.far_faces);
    get(is, m.min_dihedral);
    get(is, m.volume);
    m.body = make_body(std::move(s), gtag, sphere_r, false);
    finish_p2(m);
    return m;
}

std::array<double, 6> tri_p2(const std::array<double, 3>& l)
{
    return {l[0] * (2 * l[0] - 1), l[1] * (2 * l[1] - 1), l[2] * (2 * l[2] - 1),
            4 * l[0] * l[1],       4 * l[1] * l[2],       4 * l[2] * l[0]};
}

std::array<double, 10> tet_p2(const std::array<double, 4>& l)
{
    std::array<double, 10> v;
    for (int i = 0; i < 4; ++i)
        v[i] = l[i] * (2 * l[i] - 1);
    for (int e = 0; e < 6; ++e)
        v[4 + e] = 4 * l[kTetEdges[e][0]] * l[kTetEdges[e][1]];
    return v;
}

void tet_p2_dl(const std::array<double, 4>& l, double d[10][4])
{
    for (int i = 0; i < 10; ++i)
        for (int k = 0; k < 4; ++k)
            d[i][k] = 0;
    for (int i = 0; i < 4; ++i)
        d[i][i] = 4 * l[i] - 1;
    for (int e = 0; e < 6; ++e) {
        int a = kTetEdges[e][0], b = kTetEdges[e][1];
        d[4 + e][a] = 4 * l[b];
        d[4 + e][b] = 4 * l[a];
    }
}

Vec BoundarySpace::mass_apply(const Vec& v) const
{
    const int n = size();
    Vec out(3 * n);
    Eigen::Map<const Eigen::Matrix<double, 3, Eigen::Dynamic>> V(v.data(), 3, n);
    Eigen::Map<Eigen::Matrix<double, 3, Eigen::Dynamic>> O(out.data(), 3, n);
    O = (mass * V.transpose()).transpose(); // same as apply_componentwise
    return out;
}

SpMat BoundarySpace::weighted_mass(const std::function<double(int, const Vec3&)>& wf) const
{
    const auto& q = tri_rule(5);
    Triplets t;
    t.reserve(tris.size() * 36);
    for (std::size_t f = 0; f < tris.size(); ++f) {
        Eigen::Matrix<double, 6, 6> loc = Eigen::Matrix<double, 6, 6>::Zero();
        const auto& bt = tris[f];
        for (std::size_t k = 0; k < q.w.size(); ++k) {
            auto phi = tri_p2(q.bary[k]);
            Vec3 xq = q.bary[k][0] * x[bt[0]] + q.bary[k][1] * x[bt[1]] + q.bary[k][2] * x[bt[2]];
            double wk = q.w[k] * wf(static_cast<int>(f), xq);
            for (int a = 0; a < 6; ++a)
                for (int b = 0; b < 6; ++b)
                    loc(a, b) += wk * phi[a] * phi[b];
        }
        loc *= face_area[f];
        for (int a = 0; a < 6; ++a)
            for (int b = 0; b < 6; ++b)
                t.emplace_back(tris[f][a], tris[f][b], loc(a, b));
    }
    SpMat M(size(), size());
    M.setFromTriplets(t.begin(), t.end());
    return M;
}

Vec3 BoundarySpace::integral(const Vec& v) const
{
    Vec3 s = Vec3::Zero();
    for (int j = 0; j < size(); ++j)
        s += node_integral[j] * v.segment<3>(3 * j);
    return s;
}

Vec3 BoundarySpace::moment(const Vec& v) const
{
    Vec3 s = Vec3::Zero();
    for (int c = 0; c < mass.outerSize(); ++c)
        for (SpMat::InnerIterator it(mass, c); it; ++it)
            s += it.value() * x[it.row()].cross(Vec3(v.segment<3>(3 * it.col())));
    return s;
}

BoundarySpace make_boundary_space(const ExteriorMesh& m)
{
    BoundarySpace B;
    const SurfaceMesh& s = m.body.surface;
    const int nsv = static_cast<int>(s.verts.size());
    B.node_to_body.assign(m.n_nodes, -1);
    for (int v = 0; v < nsv; ++v) {
        B.nodes.push_back(v);
        B.node_to_body[v] = v;
    }
    B.tris.resize(s.tris.size());
    for (std::size_t f = 0; f < s.tris.size(); ++f) {
        const auto& t = s.tris[f];
        auto& bt = B.tris[f];
        for (int i = 0; i < 3; ++i)
            bt[i] = t[i];
        for (int e = 0; e < 3; ++e) {
            int g = m.edge_node(t[e], t[(e + 1) % 3]);
            if (B.node_to_body[g] < 0) {
                B.node_to_body[g] = static_cast<int>(B.nodes.size());
                B.nodes.push_back(g);
            }
            bt[3 + e] = B.node_to_body[g];
        }
    }
    const int n = B.size();
    B.x.resize(n);
    for (int j = 0; j < n; ++j)
        B.x[j] = m.node_x[B.nodes[j]];
    B.face_normal.resize(s.tris.size());
    B.face_area.resize(s.tris.size());
    std::vector<double> wsum(n, 0.0);
    B.nodal_normal.assign(n, Vec3::Zero());
    B.gamma_interior.assign(n, 1);
    for (std::size_t f = 0; f < s.tris.size(); ++f) {
        B.face_normal[f] = s.normal(static_cast<int>(f));
        B.face_area[f] = s.area(static_cast<int>(f));
        B.area += B.face_area[f];
        for (int a = 0; a < 6; ++a) {
            int j = B.tris[f][a];
            B.nodal_normal[j] += B.face_area[f] * B.face_normal[f];
            wsum[j] += B.face_area[f];
            if (!m.body.gamma[f])
                B.gamma_interior[j] = 0;
        }
    }
    B.unit_normal.resize(n);
    for (int j = 0; j < n; ++j) {
        B.nodal_normal[j] /= wsum[j];
        B.unit_normal[j] = B.nodal_normal[j].normalized();
    }
    B.chi.assign(n, 0.0);
    for (int v = 0; v < nsv; ++v)
        B.chi[v] = m.body.chi[v];
    for (const auto& bt : B.tris)
        for (int e = 0; e < 3; ++e)
            B.chi[bt[3 + e]] = 0.5 * (B.chi[bt[e]] + B.chi[bt[(e + 1) % 3]]);

    B.mass = B.weighted_mass([](int, const Vec3&) { return 1.0; });
    auto mf = std::make_shared<Eigen::SimplicialLDLT<SpMat>>(B.mass);
    if (mf->info() != Eigen::Success)
        throw Error(ErrorCode::geometry, "boundary mass matrix is singular");
    B.mass_factor = mf;
    B.node_integral.assign(n, 0.0);
    for (int c = 0; c < B.mass.outerSize(); ++c)
        for (SpMat::InnerIterator it(B.mass, c); it; ++it)
            B.node_integral[it.col()] += it.value();

    const auto& q = tri_rule(2);
    Triplets t;
    for (std::size_t f = 0; f < s.tris.size(); ++f) {
        const auto& bt = B.tris[f];
        Eigen::Matrix<double, 3, 2> J;
        J.col(0) = B.x[bt[1]] - B.x[bt[0]];
        J.col(1) = B.x[bt[2]] - B.x[bt[0]];
        Eigen::Matrix<double, 3, 2> G = J * (J.transpose() * J).inverse();
        std::array<Vec3, 3> gl{Vec3(-G.col(0) - G.col(1)), Vec3(G.col(0)), Vec3(G.col(1))};
        Eigen::Matrix<double, 6, 6> loc = Eigen::Matrix<double, 6, 6>::Zero();
        for (std::size_t k = 0; k < q.w.size(); ++k) {
            const auto& l = q.bary[k];
            std::array<Vec3, 6> g;
            for (int i = 0; i < 3; ++i)
                g[i] = (4 * l[i] - 1) * gl[i];
            for (int e = 0; e < 3; ++e) {
                int a = e, b = (e + 1) % 3;
                g[3 + e] = 4 * (l[a] * gl[b] + l[b] * gl[a]);
            }
            for (int a = 0; a < 6; ++a)
                for (int b = 0; b < 6; ++b)
                    loc(a, b) += q.w[k] * g[a].dot(g[b]);
        }
        loc *= B.face_area[f];
        for (int a = 0; a < 6; ++a)
            for (int b = 0; b < 6; ++b)
                t.emplace_back(bt[a], bt[b], loc(a, b));
    }
    B.stiff.resize(n, n);
    B.stiff.setFromTriplets(t.begin(), t.end());
    return B;
}

} // namespace selfprop
