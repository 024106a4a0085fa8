#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace selfprop {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

enum class ErrorCode {
    config = 2,
    geometry = 3,
    numerical = 4,
    convergence = 5,
    precondition = 6,
    domain = 7,
    io = 8,
};

const char* error_code_name(ErrorCode c);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& msg)
        : std::runtime_error(msg), code_(code) {}
    ErrorCode code() const { return code_; }
    int exit_status() const { return static_cast<int>(code_); }

private:
    ErrorCode code_;
};

// Rigid velocity field V(x) = xi + omega x x.
struct RigidMotion {
    Vec3 xi = Vec3::Zero();
    Vec3 omega = Vec3::Zero();

    Vec3 operator()(const Vec3& x) const { return xi + omega.cross(x); }
    bool is_zero() const { return xi.squaredNorm() == 0.0 && omega.squaredNorm() == 0.0; }
};

inline Vec3 rigid_velocity(const RigidMotion& m, const Vec3& x) { return m(x); }

// Rigid trace field indexed 0..5: e_i for i<3, e_{i-3} x x otherwise.
inline Vec3 rigid_mode(int i, const Vec3& x)
{
    Vec3 e = Vec3::Zero();
    if (i < 3) {
        e[i] = 1.0;
        return e;
    }
    e[i - 3] = 1.0;
    return e.cross(x);
}

} // namespace selfprop
