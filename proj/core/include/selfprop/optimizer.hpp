#pragma once

#include "selfprop/adjoint.hpp"

#include <functional>
#include <string>
#include <vector>

namespace selfprop {

struct OptimizerOptions {
    double kappa = 0.1;
    double tol = 1e-5;          // stationarity, relative to the control scale
    int max_outer = 60;
    int max_backtracks = 30;
    double armijo = 1e-4;
    double shrink = 0.5;
    int random_probes = 8;
    unsigned seed = 1;
    int memory = 8;             // quasi-Newton pairs, 0 = projected steepest descent
    double interior_margin = 1e-3;  // relative to kappa
    StateOptions state;
};

struct Stationarity {
    double vi = 0;          // max over probes of -int G . (p - v), clipped at 0
    double riesz_norm = 0;  // surrogate norm of the Riesz gradient
};

struct OptimizationRun {
    std::vector<Vec> iterates;
    std::vector<double> J, stationarity, steps, norms;
    std::vector<int> backtracks;
    bool active = false;          // final iterate on the kappa-sphere
    bool ok = false;
    std::string termination;
    double scale = 1;
    double orthogonality = 0;     // interior optimum: Riesz gradient norm
    FlowState final_state;
    TraceField final_gradient;    // L2 density
    Vec final_functional;
};

// g with <g, d>_H = functional . d on the admissible traces.
Vec riesz_gradient(const AdmissibleSpace& space, const Vec& functional);

// Probe controls of norm kappa: +-basis fields, the negative Riesz
// gradient and random admissible fields.
std::vector<Vec> make_probes(const PropulsionBasis& b, const TraceNorm& n, const AdmissibleSpace& space,
                             const Vec& riesz, double kappa, int n_random, unsigned seed);

Stationarity stationarity_residual(const Vec& v, const Vec& functional, const TraceNorm& n, const Vec& riesz,
                                   const std::vector<Vec>& probes);

using IterationHook = std::function<void(int, const OptimizationRun&)>;

OptimizationRun optimize(std::shared_ptr<const PropulsionBasis> b, const TraceNorm& n, const AdmissibleSpace& space,
                         const OptimizerOptions& o, const Vec& start = Vec(), const IterationHook& hook = {});

} // namespace selfprop
