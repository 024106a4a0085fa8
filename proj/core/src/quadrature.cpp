#include "selfprop/quadrature.hpp"

#include "selfprop/types.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

namespace selfprop {

namespace {

TetRule make_tet1()
{
    TetRule r;
    r.bary.push_back({0.25, 0.25, 0.25, 0.25});
    r.w.push_back(1.0);
    r.degree = 1;
    return r;
}

TetRule make_tet2()
{
    const double a = 0.1381966011250105, b = 0.5854101966249685;
    TetRule r;
    for (int i = 0; i < 4; ++i) {
        std::array<double, 4> p{a, a, a, a};
        p[i] = b;
        r.bary.push_back(p);
        r.w.push_back(0.25);
    }
    r.degree = 2;
    return r;
}

// 15-point rule: centroid, two vertex orbits, one edge orbit.
TetRule make_tet5()
{
    const double a = 0.316270751220553, b = 0.09226665096479063, c = 0.0526155180989127;
    const double w0 = 0.08283034212907583, wa = 0.08323477659677458, wb = 0.07253180271848764,
                 wc = 0.049017223434979176;
    TetRule r;
    r.bary.push_back({0.25, 0.25, 0.25, 0.25});
    r.w.push_back(w0);
    for (auto [s, w] : {std::pair{a, wa}, std::pair{b, wb}}) {
        for (int i = 0; i < 4; ++i) {
            std::array<double, 4> p{s, s, s, s};
            p[i] = 1.0 - 3.0 * s;
            r.bary.push_back(p);
            r.w.push_back(w);
        }
    }
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j) {
            std::array<double, 4> p{c, c, c, c};
            p[i] = 0.5 - c;
            p[j] = 0.5 - c;
            r.bary.push_back(p);
            r.w.push_back(wc);
        }
    double s = 0;
    for (double w : r.w)
        s += w;
    for (double& w : r.w)
        w /= s;
    r.degree = 5;
    return r;
}

TriRule make_tri1()
{
    TriRule r;
    r.bary.push_back({1.0 / 3, 1.0 / 3, 1.0 / 3});
    r.w.push_back(1.0);
    r.degree = 1;
    return r;
}

TriRule make_tri2()
{
    TriRule r;
    for (int i = 0; i < 3; ++i) {
        std::array<double, 3> p{1.0 / 6, 1.0 / 6, 1.0 / 6};
        p[i] = 2.0 / 3;
        r.bary.push_back(p);
        r.w.push_back(1.0 / 3);
    }
    r.degree = 2;
    return r;
}

TriRule make_tri5()
{
    const double s15 = std::sqrt(15.0);
    const double a = (6.0 - s15) / 21.0, b = (6.0 + s15) / 21.0;
    const double wa = (155.0 - s15) / 1200.0, wb = (155.0 + s15) / 1200.0;
    TriRule r;
    r.bary.push_back({1.0 / 3, 1.0 / 3, 1.0 / 3});
    r.w.push_back(9.0 / 40.0);
    for (auto [s, w] : {std::pair{a, wa}, std::pair{b, wb}}) {
        for (int i = 0; i < 3; ++i) {
            std::array<double, 3> p{s, s, s};
            p[i] = 1.0 - 2.0 * s;
            r.bary.push_back(p);
            r.w.push_back(w);
        }
    }
    r.degree = 5;
    return r;
}

GaussRule make_gl(int n)
{
    GaussRule g;
    g.x.resize(n);
    g.w.resize(n);
    for (int i = 0; i < n; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            if (n == 1) {
                p1 = x;
                p0 = 1.0;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16)
                break;
        }
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= n; ++k) {
            const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        dp = n * (x * p1 - p0) / (x * x - 1.0);
        g.x[n - 1 - i] = x;
        g.w[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    return g;
}

} // namespace

const TetRule& tet_rule(int degree)
{
    static const TetRule r1 = make_tet1(), r2 = make_tet2(), r5 = make_tet5();
    switch (degree) {
    case 1: return r1;
    case 2: return r2;
    case 5: return r5;
    }
    throw Error(ErrorCode::precondition, "no tetrahedral rule of degree " + std::to_string(degree));
}

const TriRule& tri_rule(int degree)
{
    static const TriRule r1 = make_tri1(), r2 = make_tri2(), r5 = make_tri5();
    switch (degree) {
    case 1: return r1;
    case 2: return r2;
    case 5: return r5;
    }
    throw Error(ErrorCode::precondition, "no triangle rule of degree " + std::to_string(degree));
}

const GaussRule& gauss_legendre(int n)
{
    static std::mutex mu;
    static std::map<int, GaussRule> cache;
    std::lock_guard lk(mu);
    auto it = cache.find(n);
    if (it == cache.end())
        it = cache.emplace(n, make_gl(n)).first;
    return it->second;
}

} // namespace selfprop
