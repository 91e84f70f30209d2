#pragma once

#include "prefplan/shapes.hpp"

namespace prefplan::collision {

/// Signed distance from a point (in the shape's local frame) to the shape
/// surface; negative inside. Composites take the min over parts, which is
/// exact outside the union.
double signedDistance(const world::Shape& shape, const Eigen::Vector3d& point);

struct Separation {
    double distance = 0.0;   // 0 when intersecting
    bool intersecting = false;
};

/// Minimum distance between two posed shapes (GJK per convex part pair).
/// Touching counts as intersecting (closed-set convention).
Separation separation(const world::Shape& a, const geom::Pose& pose_a,
                      const world::Shape& b, const geom::Pose& pose_b);

}  // namespace prefplan::collision
