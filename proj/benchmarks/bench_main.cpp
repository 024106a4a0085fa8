#include "selfprop/adjoint.hpp"
#include "selfprop/spectral.hpp"

#include <benchmark/benchmark.h>

#include <cmath>

using namespace selfprop;

namespace {

std::shared_ptr<const MixedSpace> small_space()
{
    static auto sp = [] {
        auto s = icosphere(1, 1.0, [](const Vec3& c) { return std::abs(c[0]) > 0.5; });
        return make_space(build_mesh(make_body(s, 1, 1.0, true), 4.0, 0.5));
    }();
    return sp;
}

ForcingPair forcing()
{
    ForcingPair f;
    f.g.push_back({{0.3, -0.2, 0.1}, 1.0, {1, 0.5, -0.3}});
    return f;
}

void BM_OseenFourierSolve(benchmark::State& st)
{
    SpectralGrid g(8.0, static_cast<int>(st.range(0)));
    const ForcingPair f = forcing();
    SpectralField fhat(g.size());
    for (std::size_t q = 0; q < g.size(); ++q)
        fhat[q] = f.f_hat(g.zeta(q));
    for (auto _ : st)
        benchmark::DoNotOptimize(oseen_fourier_solve(g, fhat, Vec3(0.5, 0, 0)));
}
BENCHMARK(BM_OseenFourierSolve)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_RotOseenSolve(benchmark::State& st)
{
    SpectralGrid g(8.0, static_cast<int>(st.range(0)));
    const ForcingPair f = forcing();
    for (auto _ : st)
        benchmark::DoNotOptimize(rot_oseen_fourier_solve(g, f, 0.5, 1.0));
}
BENCHMARK(BM_RotOseenSolve)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_AssembleOseen(benchmark::State& st)
{
    auto sp = small_space();
    for (auto _ : st)
        benchmark::DoNotOptimize(assemble_oseen(sp, {Vec3(0.1, 0, 0), Vec3(0, 0, 0.05)}));
}
BENCHMARK(BM_AssembleOseen)->Unit(benchmark::kMillisecond);

void BM_StateAndAdjoint(benchmark::State& st)
{
    auto sp = small_space();
    auto op = std::make_shared<const OseenOperator>(assemble_oseen(sp, {Vec3(0.1, 0, 0), Vec3(0, 0, 0.05)}));
    auto b = std::make_shared<const PropulsionBasis>(build_basis(op, TraceKind::tangential));
    Vec v = sp->interpolate_trace([](const Vec3& x) { return Vec3(-x[1], x[0], 0.0); });
    TraceField c{0.05 * project_kind(sp->bnd, TraceKind::tangential, v), TraceKind::tangential};
    for (auto _ : st) {
        FlowState s = solve_state(b, c);
        benchmark::DoNotOptimize(solve_adjoint(linearize(s)));
    }
}
BENCHMARK(BM_StateAndAdjoint)->Unit(benchmark::kMillisecond);

void BM_TraceNorm(benchmark::State& st)
{
    auto sp = small_space();
    for (auto _ : st)
        benchmark::DoNotOptimize(TraceNorm(sp->bnd));
}
BENCHMARK(BM_TraceNorm)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
