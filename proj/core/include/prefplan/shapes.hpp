#pragma once

#include <string>
#include <vector>

#include "prefplan/geometry.hpp"

namespace prefplan::world {

enum class ShapeKind { kBox, kCylinder, kComposite };

struct ShapePart;

/// Rigid shape: box (full extents), z-axis cylinder, or a union of posed
/// convex parts. Composite parts may carry an id, which the frame catalog
/// exposes as "<object>/<part>".
struct Shape {
    ShapeKind kind = ShapeKind::kBox;
    Eigen::Vector3d extents{0.0, 0.0, 0.0};  // box, full side lengths
    double radius = 0.0;                     // cylinder
    double height = 0.0;                     // cylinder, along local z
    std::vector<ShapePart> parts;            // composite

    static Shape box(const Eigen::Vector3d& extents);
    static Shape cylinder(double radius, double height);
    static Shape composite(std::vector<ShapePart> parts);
};

struct ShapePart {
    std::string id;  // may be empty
    geom::Pose pose;
    Shape shape;
};

struct Aabb {
    Eigen::Vector3d min{0.0, 0.0, 0.0};
    Eigen::Vector3d max{0.0, 0.0, 0.0};

    Eigen::Vector3d center() const { return 0.5 * (min + max); }
    Eigen::Vector3d halfExtents() const { return 0.5 * (max - min); }
};

/// Axis-aligned bounds of the shape in its local frame.
Aabb localAabb(const Shape& shape);

}  // namespace prefplan::world
