#pragma once

#include "selfprop/spectral.hpp"

#include <string>
#include <vector>

namespace selfprop {

struct JpmSweepRow {
    double omega = 0, R = 0;
    double plus = 0, minus = 0, full = 0;
    double bound = 0;
    double ratio = 0;       // max(plus, minus) / bound
    double ratio_full = 0;  // full / bound
};

struct JpmSweep {
    std::vector<JpmSweepRow> rows;
    double C = 0;            // fitted constant: largest ratio
    double spread = 0;       // max ratio / min ratio
    double spread_full = 0;
};

JpmSweep jpm_sweep(const std::vector<double>& omegas = {0.1, 0.5, 1.0, 4.0, 10.0},
                   const std::vector<double>& Rs = {0.0, 0.5, 2.0, 5.0});

struct L2SweepRow {
    std::string label;
    RigidMotion motion;
    L2Report report;
};

struct L2Sweep {
    std::vector<L2SweepRow> rows;
    double min_ratio = 0, max_ratio = 0;
    // transverse-mean forcing: ||v|| at the smallest over the largest |omega|
    double scaling = 0;
    double scaling_expected = 0;   // (w_max / w_min)^{1/4}
};

// Twelve forcing/motion combinations: three zero-mean forcings under three
// motions, and a transverse-mean forcing at |omega| in {0.25, 1, 4}.
L2Sweep l2_sweep(const SpectralGrid& g, const L2Options& o = {});

struct SpectralChecks {
    double oseen_residual = 0;
    double rot_residual = 0;
    double closed_form_error = 0;   // max relative mode error over the |omega| sweep
};

// Lattice residuals of both solvers for a smooth compact forcing and the
// axisymmetric closed-form comparison.
SpectralChecks spectral_checks(const SpectralGrid& g);

} // namespace selfprop
