#pragma once

#include "selfprop/types.hpp"

namespace selfprop {

// Anisotropic weight varpi for the motion (xi, omega).
class WeightFn {
public:
    explicit WeightFn(const RigidMotion& m, double omega_threshold = 1e-8);

    double operator()(const Vec3& x) const;
    // Wake function s(x) of the rotating branch (0 when omega = 0).
    double wake(const Vec3& x) const;

    const RigidMotion& motion() const { return m_; }

private:
    RigidMotion m_;
    bool rotating_;
    Vec3 shift_;
    Vec3 axis_;
    double pitch_ = 0.0;
};

inline double weight_eval(const WeightFn& w, const Vec3& x) { return w(x); }

} // namespace selfprop
