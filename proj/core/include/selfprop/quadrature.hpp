#pragma once

#include <array>
#include <vector>

namespace selfprop {

// Barycentric points, weights normalized to sum 1 (multiply by cell measure).
struct TetRule {
    std::vector<std::array<double, 4>> bary;
    std::vector<double> w;
    int degree = 0;
};

struct TriRule {
    std::vector<std::array<double, 3>> bary;
    std::vector<double> w;
    int degree = 0;
};

// degree 1, 2 or 5
const TetRule& tet_rule(int degree);
// degree 1, 2 or 5
const TriRule& tri_rule(int degree);

struct GaussRule {
    std::vector<double> x; // on [-1, 1]
    std::vector<double> w;
};

const GaussRule& gauss_legendre(int n);

} // namespace selfprop
