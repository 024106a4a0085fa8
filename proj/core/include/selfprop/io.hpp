#pragma once

#include "selfprop/fem.hpp"
#include "selfprop/trace.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace selfprop {

std::string read_file(const std::string& path);
// Writes to a temporary sibling and renames it over path; creates parent
// directories.
void atomic_write(const std::string& path, const std::string& content);

std::uint64_t fnv1a(const std::string& bytes, std::uint64_t h = 1469598103934665603ull);
std::string hex64(std::uint64_t h);
std::string content_hash(const std::string& bytes);
std::string file_hash(const std::string& path);

// %.17g, or "nan"/"inf".
std::string fmt_double(double v);

class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}
    void add(const std::vector<std::string>& row);
    void add_numbers(const std::vector<double>& row);
    std::string str() const;
    std::size_t rows() const { return rows_.size(); }

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

// Trace file: header, kind, node count, then x y z vx vy vz per node.
std::string trace_text(const BoundarySpace& b, const TraceField& t);
TraceField parse_trace(const BoundarySpace& b, const std::string& text, const std::string& source = "trace");

// Legacy VTK (ASCII). Body surface: each P2 face split into four linear
// triangles, named traces as point vectors.
std::string vtk_surface(const BoundarySpace& b, const std::vector<std::pair<std::string, Vec>>& traces);
// Volume: linear tets on the vertices, velocity and pressure at vertices.
std::string vtk_volume(const MixedSpace& s, const Vec& u, const Vec& p);

} // namespace selfprop
