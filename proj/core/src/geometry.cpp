#include "prefplan/geometry.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

namespace prefplan::geom {

Eigen::Quaterniond canonicalized(const Eigen::Quaterniond& q) {
    Eigen::Quaterniond r = q.normalized();
    const double c[4] = {r.w(), r.x(), r.y(), r.z()};
    for (double v : c) {
        if (v > 0.0) break;
        if (v < 0.0) {
            r.coeffs() = -r.coeffs();
            break;
        }
    }
    return r;
}

Pose makePose(const Eigen::Vector3d& position, const Eigen::Quaterniond& orientation) {
    return Pose{position, canonicalized(orientation)};
}

Pose compose(const Pose& a, const Pose& b) {
    Pose out;
    out.position = a.position + a.orientation * b.position;
    out.orientation = canonicalized(a.orientation * b.orientation);
    return out;
}

Pose invert(const Pose& p) {
    Pose out;
    out.orientation = canonicalized(p.orientation.conjugate());
    out.position = -(out.orientation * p.position);
    return out;
}

Eigen::Vector3d transformPoint(const Pose& p, const Eigen::Vector3d& local) {
    return p.position + p.orientation * local;
}

Eigen::Quaterniond axisAngle(const Eigen::Vector3d& axis, double angle) {
    return canonicalized(Eigen::Quaterniond(Eigen::AngleAxisd(angle, axis.normalized())));
}

Norm parseNorm(const std::string& name) {
    if (name == "L1") return Norm::kL1;
    if (name == "L2") return Norm::kL2;
    if (name == "Linf") return Norm::kLinf;
    throw std::invalid_argument("unknown norm '" + name + "' (expected L1, L2, or Linf)");
}

double positionNorm(const Pose& a, const Pose& b, Norm norm, const AxisSet& axes) {
    if (axes.count() == 0) throw std::invalid_argument("positionNorm: empty axis set");
    const Eigen::Vector3d d = a.position - b.position;
    double comps[3] = {axes.x ? d.x() : 0.0, axes.y ? d.y() : 0.0, axes.z ? d.z() : 0.0};
    switch (norm) {
        case Norm::kL1:
            return std::abs(comps[0]) + std::abs(comps[1]) + std::abs(comps[2]);
        case Norm::kL2:
            return std::sqrt(comps[0] * comps[0] + comps[1] * comps[1] + comps[2] * comps[2]);
        case Norm::kLinf:
            return std::max({std::abs(comps[0]), std::abs(comps[1]), std::abs(comps[2])});
    }
    return 0.0;
}

double greatCircleDistance(const Pose& a, const Pose& b) {
    const double dot = std::abs(a.orientation.dot(b.orientation));
    return 2.0 * std::acos(std::clamp(dot, 0.0, 1.0));
}

double pointingInDirectionMetric(const Pose& a, const Pose& b, const Eigen::Vector3d& main_axis) {
    const Eigen::Vector3d d = b.position - a.position;
    const double len = d.norm();
    if (len < 1e-12) {
        throw std::invalid_argument("pointingInDirectionMetric: coincident positions");
    }
    const Eigen::Vector3d rotated = a.orientation * main_axis.normalized();
    const double c = rotated.dot(d / len);
    return std::acos(std::clamp(c, -1.0, 1.0));
}

double rotationAngle(const Pose& a, const Pose& b, const Eigen::Vector3d& axis) {
    const Eigen::Quaterniond rel = a.orientation.conjugate() * b.orientation;
    const Eigen::Vector3d n = axis.normalized();
    const Eigen::Vector3d v(rel.x(), rel.y(), rel.z());
    const double along = v.dot(n);
    const double w = rel.w();
    if (std::abs(along) < 1e-15 && std::abs(w) < 1e-15) return 0.0;
    // Twist magnitude of the swing-twist split about n, folded into [0, pi].
    return 2.0 * std::atan2(std::abs(along), std::abs(w));
}

std::string poseToJson(const Pose& p) {
    nlohmann::json j;
    j["position"] = {p.position.x(), p.position.y(), p.position.z()};
    j["orientation"] = {p.orientation.w(), p.orientation.x(), p.orientation.y(), p.orientation.z()};
    return j.dump();
}

Pose poseFromJson(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    const auto& pos = j.at("position");
    const auto& ori = j.at("orientation");
    if (pos.size() != 3 || ori.size() != 4) {
        throw std::invalid_argument("pose JSON: position must be [x,y,z], orientation [w,x,y,z]");
    }
    Eigen::Quaterniond q(ori[0].get<double>(), ori[1].get<double>(), ori[2].get<double>(),
                         ori[3].get<double>());
    if (std::abs(q.norm() - 1.0) > 1e-3) {
        throw std::invalid_argument("pose JSON: orientation is not a unit quaternion");
    }
    return makePose({pos[0].get<double>(), pos[1].get<double>(), pos[2].get<double>()}, q);
}

}  // namespace prefplan::geom
