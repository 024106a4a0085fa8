#include "selfprop/io.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

namespace selfprop {

namespace fs = std::filesystem;

std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorCode::io, "cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void atomic_write(const std::string& path, const std::string& content)
{
    fs::path p(path);
    if (p.has_parent_path())
        fs::create_directories(p.parent_path());
    std::string tmp = path + ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw Error(ErrorCode::io, "cannot write " + tmp);
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out)
            throw Error(ErrorCode::io, "write failed: " + tmp);
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp);
        throw Error(ErrorCode::io, "cannot rename " + tmp + ": " + ec.message());
    }
}

std::uint64_t fnv1a(const std::string& bytes, std::uint64_t h)
{
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex64(std::uint64_t h)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string content_hash(const std::string& bytes) { return hex64(fnv1a(bytes)); }

std::string file_hash(const std::string& path) { return content_hash(read_file(path)); }

std::string fmt_double(double v)
{
    if (std::isnan(v))
        return "nan";
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void CsvTable::add(const std::vector<std::string>& row)
{
    if (row.size() != header_.size())
        throw Error(ErrorCode::precondition, "csv row width does not match the header");
    rows_.push_back(row);
}

void CsvTable::add_numbers(const std::vector<double>& row)
{
    std::vector<std::string> r;
    for (double v : row)
        r.push_back(fmt_double(v));
    add(r);
}

std::string CsvTable::str() const
{
    std::ostringstream os;
    auto line = [&](const std::vector<std::string>& r) {
        for (std::size_t i = 0; i < r.size(); ++i) {
            bool quote = r[i].find_first_of(",\"\n") != std::string::npos;
            if (i)
                os << ',';
            if (quote) {
                os << '"';
                for (char c : r[i])
                    os << (c == '"' ? "\"\"" : std::string(1, c));
                os << '"';
            } else {
                os << r[i];
            }
        }
        os << '\n';
    };
    line(header_);
    for (const auto& r : rows_)
        line(r);
    return os.str();
}

std::string trace_text(const BoundarySpace& b, const TraceField& t)
{
    std::ostringstream os;
    os << "selfprop-trace 1\nkind " << kind_name(t.kind) << "\nnodes " << b.size() << "\n";
    for (int j = 0; j < b.size(); ++j) {
        const Vec3& x = b.x[j];
        os << fmt_double(x[0]) << ' ' << fmt_double(x[1]) << ' ' << fmt_double(x[2]);
        for (int c = 0; c < 3; ++c)
            os << ' ' << fmt_double(t.values[3 * j + c]);
        os << '\n';
    }
    return os.str();
}

TraceField parse_trace(const BoundarySpace& b, const std::string& text, const std::string& source)
{
    std::istringstream is(text);
    std::string magic, key, kind;
    int version = 0, n = 0;
    if (!(is >> magic >> version) || magic != "selfprop-trace" || version != 1)
        throw Error(ErrorCode::io, source + ": not a trace file (bad header or version)");
    if (!(is >> key >> kind) || key != "kind")
        throw Error(ErrorCode::io, source + ": expected 'kind'");
    if (!(is >> key >> n) || key != "nodes")
        throw Error(ErrorCode::io, source + ": expected 'nodes'");
    if (n != b.size())
        throw Error(ErrorCode::io, source + ": node count does not match the body mesh");
    TraceField t;
    t.kind = parse_kind(kind);
    t.values.resize(3 * n);
    for (int j = 0; j < n; ++j) {
        Vec3 x;
        if (!(is >> x[0] >> x[1] >> x[2] >> t.values[3 * j] >> t.values[3 * j + 1] >> t.values[3 * j + 2]))
            throw Error(ErrorCode::io, source + ": truncated at node " + std::to_string(j));
        if ((x - b.x[j]).norm() > 1e-9 * (1 + b.x[j].norm()))
            throw Error(ErrorCode::io, source + ": node " + std::to_string(j) + " does not match the body mesh");
    }
    return t;
}

std::string vtk_surface(const BoundarySpace& b, const std::vector<std::pair<std::string, Vec>>& traces)
{
    std::ostringstream os;
    os << "# vtk DataFile Version 3.0\nselfprop body traces\nASCII\nDATASET POLYDATA\n";
    os << "POINTS " << b.size() << " double\n";
    for (const Vec3& x : b.x)
        os << fmt_double(x[0]) << ' ' << fmt_double(x[1]) << ' ' << fmt_double(x[2]) << '\n';
    const std::size_t nt = 4 * b.tris.size();
    os << "POLYGONS " << nt << ' ' << 4 * nt << '\n';
    for (const auto& t : b.tris) {
        // vertices 0..2, edges (0,1)=3, (1,2)=4, (2,0)=5
        const int sub[4][3] = {{t[0], t[3], t[5]}, {t[3], t[1], t[4]}, {t[5], t[4], t[2]}, {t[3], t[4], t[5]}};
        for (const auto& s : sub)
            os << "3 " << s[0] << ' ' << s[1] << ' ' << s[2] << '\n';
    }
    if (!traces.empty()) {
        os << "POINT_DATA " << b.size() << '\n';
        for (const auto& [name, v] : traces) {
            os << "VECTORS " << name << " double\n";
            for (int j = 0; j < b.size(); ++j)
                os << fmt_double(v[3 * j]) << ' ' << fmt_double(v[3 * j + 1]) << ' ' << fmt_double(v[3 * j + 2])
                   << '\n';
        }
    }
    return os.str();
}

std::string vtk_volume(const MixedSpace& s, const Vec& u, const Vec& p)
{
    const ExteriorMesh& m = *s.mesh;
    std::ostringstream os;
    os << "# vtk DataFile Version 3.0\nselfprop flow\nASCII\nDATASET UNSTRUCTURED_GRID\n";
    os << "POINTS " << m.n_vertices() << " double\n";
    for (const Vec3& x : m.verts)
        os << fmt_double(x[0]) << ' ' << fmt_double(x[1]) << ' ' << fmt_double(x[2]) << '\n';
    os << "CELLS " << m.tets.size() << ' ' << 5 * m.tets.size() << '\n';
    for (const auto& t : m.tets)
        os << "4 " << t[0] << ' ' << t[1] << ' ' << t[2] << ' ' << t[3] << '\n';
    os << "CELL_TYPES " << m.tets.size() << '\n';
    for (std::size_t c = 0; c < m.tets.size(); ++c)
        os << "10\n";
    os << "POINT_DATA " << m.n_vertices() << "\nVECTORS velocity double\n";
    for (int v = 0; v < m.n_vertices(); ++v)
        os << fmt_double(u[3 * v]) << ' ' << fmt_double(u[3 * v + 1]) << ' ' << fmt_double(u[3 * v + 2]) << '\n';
    if (p.size()) {
        os << "SCALARS pressure double 1\nLOOKUP_TABLE default\n";
        for (int v = 0; v < m.n_vertices(); ++v)
            os << fmt_double(p[v]) << '\n';
    }
    return os.str();
}

} // namespace selfprop
