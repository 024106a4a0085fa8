#pragma once

#include "selfprop/fem.hpp"
#include "selfprop/geometry.hpp"

#include <cmath>
#include <random>

namespace fixtures {

using namespace selfprop;

inline BodyGeometry sphere_body(int level = 0, double cap = 0.5)
{
    auto s = icosphere(level, 1.0, [cap](const Vec3& c) { return std::abs(c[0]) > cap; });
    return make_body(s, 1, 1.0, true);
}

inline std::shared_ptr<const MixedSpace> sphere_space(double R, double h, int level = 0)
{
    return make_space(build_mesh(sphere_body(level), R, h));
}

inline Vec random_vec(int n, unsigned seed)
{
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    Vec v(n);
    for (int i = 0; i < n; ++i)
        v[i] = d(rng);
    return v;
}

// Random velocity vector with zero Dirichlet values.
inline Vec random_interior(const MixedSpace& s, unsigned seed)
{
    Vec r = random_vec(s.n_u, seed);
    Vec u = Vec::Zero(s.n_u);
    for (int d : s.interior_dofs)
        u[d] = r[d];
    return u;
}

} // namespace fixtures
