#include "selfprop/weight.hpp"

#include <cmath>

namespace selfprop {

const char* error_code_name(ErrorCode c)
{
    switch (c) {
    case ErrorCode::config: return "config";
    case ErrorCode::geometry: return "geometry";
    case ErrorCode::numerical: return "numerical";
    case ErrorCode::convergence: return "convergence";
    case ErrorCode::precondition: return "precondition";
    case ErrorCode::domain: return "domain";
    case ErrorCode::io: return "io";
    }
    return "unknown";
}

WeightFn::WeightFn(const RigidMotion& m, double omega_threshold) : m_(m)
{
    const double w = m.omega.norm();
    rotating_ = w > omega_threshold;
    if (rotating_) {
        shift_ = m.omega.cross(m.xi) / (w * w);
        axis_ = m.omega / w;
        pitch_ = m.omega.dot(m.xi) / w;
    } else {
        shift_.setZero();
        axis_.setZero();
    }
}

double WeightFn::wake(const Vec3& x) const
{
    if (!rotating_)
        return 0.0;
    const double sg = pitch_ > 0 ? 1.0 : (pitch_ < 0 ? -1.0 : 0.0);
    return (x - shift_).norm() + sg * axis_.dot(x);
}

double WeightFn::operator()(const Vec3& x) const
{
    if (rotating_) {
        const double r = (x - shift_).norm();
        return (1.0 + r) * (1.0 + 2.0 * std::abs(pitch_) * wake(x));
    }
    const double r = x.norm();
    return (1.0 + r) * (1.0 + 2.0 * (m_.xi.norm() * r + m_.xi.dot(x)));
}

} // namespace selfprop
