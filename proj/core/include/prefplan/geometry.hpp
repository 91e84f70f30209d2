#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <stdexcept>
#include <string>

namespace prefplan::geom {

/// Rigid-body pose. Orientation is a unit quaternion stored with the
/// canonical sign convention w >= 0, so equal rotations serialize and
/// compare identically.
struct Pose {
    Eigen::Vector3d position{0.0, 0.0, 0.0};
    Eigen::Quaterniond orientation{1.0, 0.0, 0.0, 0.0};  // (w, x, y, z)

    static Pose identity() { return Pose{}; }
};

/// Normalize and sign-canonicalize a quaternion (w >= 0; ties broken on
/// the first nonzero component).
Eigen::Quaterniond canonicalized(const Eigen::Quaterniond& q);

Pose makePose(const Eigen::Vector3d& position, const Eigen::Quaterniond& orientation);

Pose compose(const Pose& a, const Pose& b);
Pose invert(const Pose& p);
Eigen::Vector3d transformPoint(const Pose& p, const Eigen::Vector3d& local);

/// Rotation of `angle` radians about `axis` (need not be unit).
Eigen::Quaterniond axisAngle(const Eigen::Vector3d& axis, double angle);

enum class Norm { kL1, kL2, kLinf };

struct AxisSet {
    bool x = true;
    bool y = true;
    bool z = true;

    int count() const { return int(x) + int(y) + int(z); }
    static AxisSet all() { return AxisSet{}; }
};

Norm parseNorm(const std::string& name);  // "L1" | "L2" | "Linf"

/// Norm of the componentwise position difference restricted to `axes`.
/// Throws std::invalid_argument if `axes` is empty.
double positionNorm(const Pose& a, const Pose& b, Norm norm, const AxisSet& axes);

/// 2*acos(|<q1, q2>|), the geodesic angle between two orientations, in
/// [0, pi]. Invariant to quaternion sign.
double greatCircleDistance(const Pose& a, const Pose& b);

/// Angle between `main_axis` rotated by a.orientation and the ray from
/// a.position to b.position, in [0, pi]. Throws std::invalid_argument
/// when the positions coincide (direction undefined).
double pointingInDirectionMetric(const Pose& a, const Pose& b, const Eigen::Vector3d& main_axis);

/// Twist angle about `axis` of the relative rotation a^-1 * b
/// (swing-twist decomposition in a's frame), in [0, pi].
double rotationAngle(const Pose& a, const Pose& b, const Eigen::Vector3d& axis);

/// Pose <-> JSON text, schema {"position":[x,y,z],"orientation":[w,x,y,z]}.
std::string poseToJson(const Pose& p);
Pose poseFromJson(const std::string& text);

}  // namespace prefplan::geom
