#pragma once

#include "selfprop/types.hpp"

#include <array>
#include <functional>
#include <string>
#include <vector>

namespace selfprop {

// Closed triangulated body surface. Triangles are ordered counter-clockwise
// when seen from the fluid, so (b-a)x(c-a) points out of the body; the
// fluid-domain normal n used everywhere else is the opposite vector.
struct SurfaceMesh {
    std::vector<Vec3> verts;
    std::vector<std::array<int, 3>> tris;
    std::vector<int> tags;

    // Unit normal pointing out of the fluid domain (into the body).
    Vec3 normal(int f) const;
    double area(int f) const;
    double max_edge() const;
    double mean_edge() const;
    double circumradius() const;
};

struct BodyIntegrals {
    double mass = 0;
    Mat3 inertia = Mat3::Zero();
    Vec3 centroid = Vec3::Zero();
};

// Mass, inertia about the origin and centroid (density 1) from the cone
// tetrahedralization of the surface.
BodyIntegrals body_integrals(const SurfaceMesh& s);

// Closed and consistently oriented with positive enclosed volume.
void check_closed_oriented(const SurfaceMesh& s);

struct BodyGeometry {
    SurfaceMesh surface;
    std::vector<char> gamma;   // per face
    std::vector<double> chi;   // per vertex, raised cosine over Gamma
    double mass = 0;
    Mat3 inertia = Mat3::Zero();
    Vec3 centroid = Vec3::Zero();
    double sphere_radius = 0;  // > 0 when the surface samples a sphere
    int gamma_tag = 1;

    // Centroid within centroid_factor * h^2, h the longest surface edge.
    bool centroid_ok(double centroid_factor = 0.1) const;
    bool chi_degenerate() const;
};

// Validates, integrates and builds chi. Throws geometry errors for open,
// inverted or off-centre surfaces unless check_centroid is false.
BodyGeometry make_body(SurfaceMesh s, int gamma_tag, double sphere_radius = 0,
                       bool check_centroid = true);

BodyGeometry load_body(const std::string& path, int gamma_tag, bool check_centroid = true);
void save_body(const std::string& path, const BodyGeometry& b);

// Regular midpoint subdivision; new vertices are projected to the sphere
// when the body declares one. Tags are inherited.
BodyGeometry refine_body(const BodyGeometry& b, int levels);

// Icosahedron subdivided `level` times, projected to radius r. Faces whose
// centroid satisfies in_gamma get tag 1, others tag 0.
SurfaceMesh icosphere(int level, double r, const std::function<bool(const Vec3&)>& in_gamma);

// Piecewise-linear raised-cosine bump over the Gamma faces, max 1, zero at
// every vertex touching a non-Gamma face.
std::vector<double> gamma_bump(const SurfaceMesh& s, const std::vector<char>& gamma);

} // namespace selfprop
