#pragma once

#include "selfprop/geometry.hpp"
#include "selfprop/linsolve.hpp"

#include <Eigen/SparseCholesky>

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace selfprop {

struct MeshOptions {
    double min_dihedral_deg = 3.0;
};

// Tetrahedral mesh of the ball of radius R_inf minus the body, built by
// radial extrusion of the (refined) body surface. P1 vertices carry the
// pressure, P2 nodes (vertices then edge midpoints) carry the velocity.
struct ExteriorMesh {
    BodyGeometry body;        // refined body, its surface is the body boundary
    double R_inf = 0, h = 0;
    int layers = 0;

    std::vector<Vec3> verts;  // layer k, surface vertex v at k * nsv + v
    std::vector<std::array<int, 4>> tets;
    std::vector<std::array<int, 3>> far_faces;

    // P2 numbering. Local tet nodes: vertices 0..3, then edges (0,1), (0,2),
    // (0,3), (1,2), (1,3), (2,3).
    int n_nodes = 0;
    std::vector<std::array<int, 10>> tet_nodes;
    std::vector<Vec3> node_x;
    std::vector<char> node_tag; // 0 interior, 1 body, 2 far

    std::vector<std::uint64_t> edge_keys; // sorted, edge e is node n_vertices() + e

    double min_dihedral = 0;   // degrees
    double volume = 0;

    int n_vertices() const { return static_cast<int>(verts.size()); }
    int n_surface_vertices() const { return static_cast<int>(body.surface.verts.size()); }
    std::uint64_t hash() const;
    // P2 node of the edge (a, b); throws if absent.
    int edge_node(int a, int b) const;
};

// Local edges of the tet in P2 order.
constexpr std::array<std::array<int, 2>, 6> kTetEdges{{{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}};

// Star-shaped exterior mesh. Errors: R_inf or h not positive, R_inf not
// above twice the body circumradius, surface not star-shaped about the
// origin, or cells below the dihedral threshold (offending cells listed).
ExteriorMesh build_mesh(const BodyGeometry& body, double R_inf, double h, const MeshOptions& o = {});

double tet_min_dihedral(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d);

void save_mesh(const std::string& path, const ExteriorMesh& m);
ExteriorMesh load_mesh(const std::string& path);

// P2 function space on the body surface. Body node j is global node
// nodes[j]; the first nsv entries are the surface vertices in order.
struct BoundarySpace {
    std::vector<int> nodes;
    std::vector<int> node_to_body;            // global node -> body index or -1
    std::vector<std::array<int, 6>> tris;     // body indices: 3 vertices, edges (0,1), (1,2), (2,0)
    std::vector<Vec3> x;
    std::vector<Vec3> face_normal;            // unit, out of the fluid
    std::vector<double> face_area;
    std::vector<Vec3> nodal_normal;           // area-weighted, not normalized
    std::vector<Vec3> unit_normal;
    std::vector<double> chi;                  // P2 nodes; edge value = mean of its vertices
    std::vector<char> gamma_interior;         // every face around the node is in Gamma
    std::vector<double> node_integral;        // int phi_j
    SpMat mass;                               // scalar P2 mass
    SpMat stiff;                              // scalar surface Laplacian
    std::shared_ptr<const Eigen::SimplicialLDLT<SpMat>> mass_factor;
    double area = 0;

    int size() const { return static_cast<int>(nodes.size()); }
    int dofs() const { return 3 * size(); }

    // Vector mass applied to stacked (3 * node + c) data.
    Vec mass_apply(const Vec& v) const;
    double inner(const Vec& a, const Vec& b) const { return a.dot(mass_apply(b)); }
    // Weighted mass  int w phi_a phi_b,  w(face, x) sampled at degree-5 points.
    SpMat weighted_mass(const std::function<double(int, const Vec3&)>& w) const;
    // Integral of a vector trace.
    Vec3 integral(const Vec& v) const;
    Vec3 moment(const Vec& v) const; // int x cross v
};

BoundarySpace make_boundary_space(const ExteriorMesh& m);

// P2 shape functions on a triangle at barycentric l (vertices then edges
// (0,1), (1,2), (2,0)).
std::array<double, 6> tri_p2(const std::array<double, 3>& l);
// P2 shape functions and barycentric derivatives on a tet.
std::array<double, 10> tet_p2(const std::array<double, 4>& l);
void tet_p2_dl(const std::array<double, 4>& l, double d[10][4]);

} // namespace selfprop
