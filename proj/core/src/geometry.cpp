#include "selfprop/geometry.hpp"

#include "selfprop/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <queue>
#include <sstream>

namespace selfprop {

Vec3 SurfaceMesh::normal(int f) const
{
    const auto& t = tris[f];
    Vec3 c = (verts[t[1]] - verts[t[0]]).cross(verts[t[2]] - verts[t[0]]);
    return -c.normalized();
}

double SurfaceMesh::area(int f) const
{
    const auto& t = tris[f];
    return 0.5 * (verts[t[1]] - verts[t[0]]).cross(verts[t[2]] - verts[t[0]]).norm();
}

double SurfaceMesh::max_edge() const
{
    double h = 0;
    for (const auto& t : tris)
        for (int k = 0; k < 3; ++k)
            h = std::max(h, (verts[t[k]] - verts[t[(k + 1) % 3]]).norm());
    return h;
}

double SurfaceMesh::mean_edge() const
{
    double s = 0;
    for (const auto& t : tris)
        for (int k = 0; k < 3; ++k)
            s += (verts[t[k]] - verts[t[(k + 1) % 3]]).norm();
    return tris.empty() ? 0.0 : s / (3.0 * tris.size());
}

double SurfaceMesh::circumradius() const
{
    double r = 0;
    for (const auto& v : verts)
        r = std::max(r, v.norm());
    return r;
}

void check_closed_oriented(const SurfaceMesh& s)
{
    if (s.tris.empty())
        throw Error(ErrorCode::geometry, "surface has no triangles");
    std::map<std::pair<int, int>, int> directed;
    for (std::size_t f = 0; f < s.tris.size(); ++f) {
        const auto& t = s.tris[f];
        for (int k = 0; k < 3; ++k) {
            if (t[k] < 0 || t[k] >= static_cast<int>(s.verts.size()))
                throw Error(ErrorCode::geometry, "triangle " + std::to_string(f) + " has an invalid vertex index");
            if (++directed[{t[k], t[(k + 1) % 3]}] > 1)
                throw Error(ErrorCode::geometry, "edge (" + std::to_string(t[k]) + "," + std::to_string(t[(k + 1) % 3]) +
                                                     ") used twice in the same direction (inconsistent orientation or non-manifold)");
        }
    }
    for (const auto& [e, n] : directed)
        if (!directed.count({e.second, e.first}))
            throw Error(ErrorCode::geometry, "open surface: edge (" + std::to_string(e.first) + "," + std::to_string(e.second) +
                                                 ") has no opposite half-edge");
    const BodyIntegrals bi = body_integrals(s);
    if (!(bi.mass > 0))
        throw Error(ErrorCode::geometry, "inverted surface: enclosed volume is not positive");
}

BodyIntegrals body_integrals(const SurfaceMesh& s)
{
    Vec3 apex = Vec3::Zero();
    for (const auto& v : s.verts)
        apex += v;
    if (!s.verts.empty())
        apex /= static_cast<double>(s.verts.size());
    const TetRule& q = tet_rule(2);
    BodyIntegrals r;
    Vec3 first = Vec3::Zero();
    Mat3 second = Mat3::Zero();
    for (const auto& t : s.tris) {
        const Vec3& a = s.verts[t[0]];
        const Vec3& b = s.verts[t[1]];
        const Vec3& c = s.verts[t[2]];
        const double vol = (b - a).cross(c - a).dot(a - apex) / 6.0;
        r.mass += vol;
        for (std::size_t k = 0; k < q.w.size(); ++k) {
            const auto& l = q.bary[k];
            const Vec3 x = l[0] * apex + l[1] * a + l[2] * b + l[3] * c;
            first += vol * q.w[k] * x;
            second += vol * q.w[k] * x * x.transpose();
        }
    }
    r.centroid = r.mass != 0 ? Vec3(first / r.mass) : Vec3::Zero();
    r.inertia = second.trace() * Mat3::Identity() - second;
    return r;
}

bool BodyGeometry::centroid_ok(double centroid_factor) const
{
    const double h = surface.max_edge();
    return centroid.norm() <= centroid_factor * h * h;
}

bool BodyGeometry::chi_degenerate() const
{
    return std::none_of(chi.begin(), chi.end(), [](double c) { return c > 0; });
}

std::vector<double> gamma_bump(const SurfaceMesh& s, const std::vector<char>& gamma)
{
    const int nv = static_cast<int>(s.verts.size());
    std::vector<char> in_gamma(nv, 0), on_rest(nv, 0);
    for (std::size_t f = 0; f < s.tris.size(); ++f)
        for (int v : s.tris[f])
            (gamma[f] ? in_gamma : on_rest)[v] = 1;
    std::vector<std::vector<std::pair<int, double>>> adj(nv);
    for (std::size_t f = 0; f < s.tris.size(); ++f) {
        if (!gamma[f])
            continue;
        const auto& t = s.tris[f];
        for (int k = 0; k < 3; ++k) {
            const int a = t[k], b = t[(k + 1) % 3];
            const double d = (s.verts[a] - s.verts[b]).norm();
            adj[a].push_back({b, d});
            adj[b].push_back({a, d});
        }
    }
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> dist(nv, inf);
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    for (int v = 0; v < nv; ++v)
        if (in_gamma[v] && on_rest[v]) {
            dist[v] = 0;
            pq.push({0.0, v});
        }
    std::vector<double> chi(nv, 0.0);
    if (pq.empty()) {
        for (int v = 0; v < nv; ++v)
            chi[v] = in_gamma[v] ? 1.0 : 0.0;
        return chi;
    }
    while (!pq.empty()) {
        auto [d, v] = pq.top();
        pq.pop();
        if (d > dist[v])
            continue;
        for (auto [w, l] : adj[v])
            if (d + l < dist[w]) {
                dist[w] = d + l;
                pq.push({dist[w], w});
            }
    }
    double dmax = 0;
    for (int v = 0; v < nv; ++v)
        if (in_gamma[v] && std::isfinite(dist[v]))
            dmax = std::max(dmax, dist[v]);
    if (dmax <= 0)
        return chi;
    for (int v = 0; v < nv; ++v)
        if (in_gamma[v] && !on_rest[v]) {
            const double t = std::isfinite(dist[v]) ? std::min(dist[v] / dmax, 1.0) : 1.0;
            chi[v] = 0.5 * (1.0 - std::cos(std::numbers::pi * t));
        }
    return chi;
}

BodyGeometry make_body(SurfaceMesh s, int gamma_tag, double sphere_radius, bool check_centroid)
{
    check_closed_oriented(s);
    BodyGeometry b;
    b.surface = std::move(s);
    b.gamma_tag = gamma_tag;
    b.sphere_radius = sphere_radius;
    b.gamma.resize(b.surface.tris.size());
    for (std::size_t f = 0; f < b.surface.tris.size(); ++f)
        b.gamma[f] = b.surface.tags[f] == gamma_tag;
    const BodyIntegrals bi = body_integrals(b.surface);
    b.mass = bi.mass;
    b.inertia = bi.inertia;
    b.centroid = bi.centroid;
    if (check_centroid && !b.centroid_ok()) {
        std::ostringstream os;
        os << "body centroid (" << b.centroid.transpose() << ") is not at the origin within 0.1*h^2";
        throw Error(ErrorCode::geometry, os.str());
    }
    b.chi = gamma_bump(b.surface, b.gamma);
    return b;
}

namespace {

std::string next_content_line(std::istream& in, int& lineno)
{
    std::string line;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos)
            line.erase(hash);
        if (line.find_first_not_of(" \t\r") != std::string::npos)
            return line;
    }
    return {};
}

[[noreturn]] void parse_fail(const std::string& path, int lineno, const std::string& what)
{
    throw Error(ErrorCode::geometry, path + ":" + std::to_string(lineno) + ": " + what);
}

} // namespace

BodyGeometry load_body(const std::string& path, int gamma_tag, bool check_centroid)
{
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorCode::io, "cannot open body file " + path);
    int ln = 0;
    std::string line = next_content_line(in, ln);
    {
        std::istringstream is(line);
        std::string magic;
        int version = 0;
        is >> magic >> version;
        if (magic != "selfprop-surface" || version != 1)
            parse_fail(path, ln, "expected header 'selfprop-surface 1'");
    }
    double sphere_r = 0;
    SurfaceMesh s;
    line = next_content_line(in, ln);
    {
        std::istringstream is(line);
        std::string key;
        is >> key;
        if (key == "shape") {
            std::string kind;
            is >> kind;
            if (kind == "sphere") {
                if (!(is >> sphere_r) || sphere_r <= 0)
                    parse_fail(path, ln, "shape sphere needs a positive radius");
            } else if (kind != "none") {
                parse_fail(path, ln, "unknown shape '" + kind + "'");
            }
            line = next_content_line(in, ln);
        }
    }
    std::size_t nv = 0, nt = 0;
    {
        std::istringstream is(line);
        std::string key;
        if (!(is >> key >> nv) || key != "vertices")
            parse_fail(path, ln, "expected 'vertices <count>'");
    }
    s.verts.resize(nv);
    for (std::size_t i = 0; i < nv; ++i) {
        std::istringstream is(next_content_line(in, ln));
        if (!(is >> s.verts[i][0] >> s.verts[i][1] >> s.verts[i][2]))
            parse_fail(path, ln, "bad vertex line");
    }
    {
        std::istringstream is(next_content_line(in, ln));
        std::string key;
        if (!(is >> key >> nt) || key != "triangles")
            parse_fail(path, ln, "expected 'triangles <count>'");
    }
    s.tris.resize(nt);
    s.tags.resize(nt);
    for (std::size_t i = 0; i < nt; ++i) {
        std::istringstream is(next_content_line(in, ln));
        if (!(is >> s.tris[i][0] >> s.tris[i][1] >> s.tris[i][2] >> s.tags[i]))
            parse_fail(path, ln, "bad triangle line (expected 'a b c tag')");
    }
    return make_body(std::move(s), gamma_tag, sphere_r, check_centroid);
}

void save_body(const std::string& path, const BodyGeometry& b)
{
    std::ofstream out(path);
    if (!out)
        throw Error(ErrorCode::io, "cannot write " + path);
    out.precision(17);
    out << "selfprop-surface 1\n";
    if (b.sphere_radius > 0)
        out << "shape sphere " << b.sphere_radius << "\n";
    out << "vertices " << b.surface.verts.size() << "\n";
    for (const auto& v : b.surface.verts)
        out << v[0] << " " << v[1] << " " << v[2] << "\n";
    out << "triangles " << b.surface.tris.size() << "\n";
    for (std::size_t f = 0; f < b.surface.tris.size(); ++f) {
        const auto& t = b.surface.tris[f];
        out << t[0] << " " << t[1] << " " << t[2] << " " << b.surface.tags[f] << "\n";
    }
}

namespace {

SurfaceMesh subdivide(const SurfaceMesh& s, double project_r)
{
    SurfaceMesh r;
    r.verts = s.verts;
    std::map<std::pair<int, int>, int> mid;
    auto midpoint = [&](int a, int b) {
        auto key = std::minmax(a, b);
        auto it = mid.find(key);
        if (it != mid.end())
            return it->second;
        Vec3 p = 0.5 * (s.verts[a] + s.verts[b]);
        if (project_r > 0)
            p = project_r * p.normalized();
        const int id = static_cast<int>(r.verts.size());
        r.verts.push_back(p);
        mid.emplace(key, id);
        return id;
    };
    for (std::size_t f = 0; f < s.tris.size(); ++f) {
        const auto [a, b, c] = s.tris[f];
        const int ab = midpoint(a, b), bc = midpoint(b, c), ca = midpoint(c, a);
        for (auto t : {std::array{a, ab, ca}, std::array{ab, b, bc}, std::array{ca, bc, c}, std::array{ab, bc, ca}}) {
            r.tris.push_back(t);
            r.tags.push_back(s.tags[f]);
        }
    }
    return r;
}

} // namespace

BodyGeometry refine_body(const BodyGeometry& b, int levels)
{
    if (levels <= 0)
        return b;
    SurfaceMesh s = b.surface;
    for (int l = 0; l < levels; ++l)
        s = subdivide(s, b.sphere_radius);
    return make_body(std::move(s), b.gamma_tag, b.sphere_radius, false);
}

SurfaceMesh icosphere(int level, double r, const std::function<bool(const Vec3&)>& in_gamma)
{
    const double p = (1.0 + std::sqrt(5.0)) / 2.0;
    SurfaceMesh s;
    s.verts = {{-1, p, 0}, {1, p, 0}, {-1, -p, 0}, {1, -p, 0}, {0, -1, p}, {0, 1, p},
               {0, -1, -p}, {0, 1, -p}, {p, 0, -1}, {p, 0, 1}, {-p, 0, -1}, {-p, 0, 1}};
    for (auto& v : s.verts)
        v = r * v.normalized();
    s.tris = {{0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
              {11, 10, 2}, {10, 7, 6}, {7, 1, 8}, {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8},
              {3, 8, 9}, {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1}};
    s.tags.assign(s.tris.size(), 0);
    for (int l = 0; l < level; ++l)
        s = subdivide(s, r);
    for (std::size_t f = 0; f < s.tris.size(); ++f) {
        const auto& t = s.tris[f];
        const Vec3 c = (s.verts[t[0]] + s.verts[t[1]] + s.verts[t[2]]) / 3.0;
        s.tags[f] = in_gamma && in_gamma(c) ? 1 : 0;
    }
    return s;
}

} // namespace selfprop
