#pragma once

#include <nlohmann/json.hpp>

#include "prefplan/geometry.hpp"

namespace prefplan::detail {

inline nlohmann::json vec3Json(const Eigen::Vector3d& v) {
    return nlohmann::json::array({v.x(), v.y(), v.z()});
}

inline Eigen::Vector3d vec3FromJson(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 3) {
        throw std::invalid_argument("expected a 3-element array");
    }
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline nlohmann::json poseJson(const geom::Pose& p) {
    nlohmann::json j;
    j["position"] = vec3Json(p.position);
    j["orientation"] = {p.orientation.w(), p.orientation.x(), p.orientation.y(),
                        p.orientation.z()};
    return j;
}

inline geom::Pose poseFromJsonObj(const nlohmann::json& j) {
    const auto& ori = j.at("orientation");
    if (!ori.is_array() || ori.size() != 4) {
        throw std::invalid_argument("pose orientation must be [w,x,y,z]");
    }
    Eigen::Quaterniond q(ori[0].get<double>(), ori[1].get<double>(), ori[2].get<double>(),
                         ori[3].get<double>());
    if (std::abs(q.norm() - 1.0) > 1e-3) {
        throw std::invalid_argument("pose orientation is not a unit quaternion");
    }
    return geom::makePose(vec3FromJson(j.at("position")), q);
}

}  // namespace prefplan::detail
