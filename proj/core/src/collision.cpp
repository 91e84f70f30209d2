#include "prefplan/collision.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace prefplan::world {

Shape Shape::box(const Eigen::Vector3d& extents) {
    Shape s;
    s.kind = ShapeKind::kBox;
    s.extents = extents;
    return s;
}

Shape Shape::cylinder(double radius, double height) {
    Shape s;
    s.kind = ShapeKind::kCylinder;
    s.radius = radius;
    s.height = height;
    return s;
}

Shape Shape::composite(std::vector<ShapePart> parts) {
    Shape s;
    s.kind = ShapeKind::kComposite;
    s.parts = std::move(parts);
    return s;
}

Aabb localAabb(const Shape& shape) {
    switch (shape.kind) {
        case ShapeKind::kBox: {
            const Eigen::Vector3d h = 0.5 * shape.extents;
            return Aabb{-h, h};
        }
        case ShapeKind::kCylinder: {
            const Eigen::Vector3d h(shape.radius, shape.radius, 0.5 * shape.height);
            return Aabb{-h, h};
        }
        case ShapeKind::kComposite: {
            Aabb out;
            out.min.setConstant(std::numeric_limits<double>::infinity());
            out.max.setConstant(-std::numeric_limits<double>::infinity());
            for (const auto& part : shape.parts) {
                const Aabb pa = localAabb(part.shape);
                // Enclose the 8 corners of the part box under its offset pose.
                for (int i = 0; i < 8; ++i) {
                    Eigen::Vector3d c((i & 1) ? pa.max.x() : pa.min.x(),
                                      (i & 2) ? pa.max.y() : pa.min.y(),
                                      (i & 4) ? pa.max.z() : pa.min.z());
                    const Eigen::Vector3d w = geom::transformPoint(part.pose, c);
                    out.min = out.min.cwiseMin(w);
                    out.max = out.max.cwiseMax(w);
                }
            }
            return out;
        }
    }
    return Aabb{};
}

}  // namespace prefplan::world

namespace prefplan::collision {

using geom::Pose;
using world::Shape;
using world::ShapeKind;
using Vec3 = Eigen::Vector3d;

namespace {

double sdfBox(const Vec3& p, const Vec3& half) {
    const Vec3 q = p.cwiseAbs() - half;
    const Vec3 qpos = q.cwiseMax(0.0);
    const double outside = qpos.norm();
    const double inside = std::min(q.maxCoeff(), 0.0);
    return outside + inside;
}

double sdfCylinder(const Vec3& p, double radius, double height) {
    const double dr = std::hypot(p.x(), p.y()) - radius;
    const double dz = std::abs(p.z()) - 0.5 * height;
    const double ox = std::max(dr, 0.0);
    const double oz = std::max(dz, 0.0);
    const double outside = std::hypot(ox, oz);
    const double inside = std::min(std::max(dr, dz), 0.0);
    return outside + inside;
}

struct ConvexRef {
    const Shape* shape;
    Pose pose;
};

void flattenConvex(const Shape& s, const Pose& pose, std::vector<ConvexRef>& out) {
    if (s.kind == ShapeKind::kComposite) {
        for (const auto& part : s.parts) {
            flattenConvex(part.shape, geom::compose(pose, part.pose), out);
        }
    } else {
        out.push_back({&s, pose});
    }
}

Vec3 supportLocal(const Shape& s, const Vec3& d) {
    if (s.kind == ShapeKind::kBox) {
        const Vec3 h = 0.5 * s.extents;
        return Vec3(d.x() >= 0 ? h.x() : -h.x(), d.y() >= 0 ? h.y() : -h.y(),
                    d.z() >= 0 ? h.z() : -h.z());
    }
    // cylinder
    const double rxy = std::hypot(d.x(), d.y());
    Vec3 out(0.0, 0.0, d.z() >= 0 ? 0.5 * s.height : -0.5 * s.height);
    if (rxy > 1e-12) {
        out.x() = s.radius * d.x() / rxy;
        out.y() = s.radius * d.y() / rxy;
    }
    return out;
}

Vec3 supportWorld(const ConvexRef& c, const Vec3& d) {
    const Vec3 dl = c.pose.orientation.conjugate() * d;
    return geom::transformPoint(c.pose, supportLocal(*c.shape, dl));
}

// Simplex of Minkowski-difference points, at most 4.
struct Simplex {
    std::array<Vec3, 4> pts;
    int n = 0;

    void set(std::initializer_list<Vec3> list) {
        n = 0;
        for (const auto& p : list) pts[n++] = p;
    }
    void push(const Vec3& p) { pts[n++] = p; }
};

Vec3 closestOnSegment(const Vec3& a, const Vec3& b, Simplex& keep) {
    const Vec3 ab = b - a;
    const double len2 = ab.squaredNorm();
    if (len2 < 1e-30) {
        keep.set({a});
        return a;
    }
    const double t = -a.dot(ab) / len2;
    if (t <= 0.0) {
        keep.set({a});
        return a;
    }
    if (t >= 1.0) {
        keep.set({b});
        return b;
    }
    keep.set({a, b});
    return a + t * ab;
}

Vec3 closestOnTriangle(const Vec3& a, const Vec3& b, const Vec3& c, Simplex& keep) {
    // Ericson, Real-Time Collision Detection, 5.1.5 with p = origin.
    const Vec3 ab = b - a, ac = c - a;
    const Vec3 ap = -a;
    const double d1 = ab.dot(ap), d2 = ac.dot(ap);
    if (d1 <= 0.0 && d2 <= 0.0) {
        keep.set({a});
        return a;
    }
    const Vec3 bp = -b;
    const double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0.0 && d4 <= d3) {
        keep.set({b});
        return b;
    }
    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
        const double v = d1 / (d1 - d3);
        keep.set({a, b});
        return a + v * ab;
    }
    const Vec3 cp = -c;
    const double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0.0 && d5 <= d6) {
        keep.set({c});
        return c;
    }
    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
        const double w = d2 / (d2 - d6);
        keep.set({a, c});
        return a + w * ac;
    }
    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
        const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        keep.set({b, c});
        return b + w * (c - b);
    }
    const double denom = 1.0 / (va + vb + vc);
    const double v = vb * denom, w = vc * denom;
    keep.set({a, b, c});
    return a + ab * v + ac * w;
}

bool originOutsidePlane(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
    const Vec3 n = (b - a).cross(c - a);
    const double signp = (-a).dot(n);
    const double signd = (d - a).dot(n);
    return signp * signd < 0.0;
}

// Closest point to origin over the simplex; reduces the simplex to the
// supporting feature. Returns true if the origin is contained.
bool simplexClosest(Simplex& s, Vec3& closest) {
    switch (s.n) {
        case 1:
            closest = s.pts[0];
            return false;
        case 2:
            closest = closestOnSegment(s.pts[0], s.pts[1], s);
            return false;
        case 3:
            closest = closestOnTriangle(s.pts[0], s.pts[1], s.pts[2], s);
            return false;
        default: {
            const Vec3 a = s.pts[0], b = s.pts[1], c = s.pts[2], d = s.pts[3];
            bool outside = false;
            double best = std::numeric_limits<double>::infinity();
            Simplex best_keep;
            Vec3 best_pt = Vec3::Zero();
            const std::array<std::array<Vec3, 3>, 4> faces = {{{a, b, c}, {a, b, d}, {a, c, d}, {b, c, d}}};
            const std::array<Vec3, 4> opposite = {d, c, b, a};
            for (int i = 0; i < 4; ++i) {
                if (!originOutsidePlane(faces[i][0], faces[i][1], faces[i][2], opposite[i])) continue;
                outside = true;
                Simplex keep;
                const Vec3 pt = closestOnTriangle(faces[i][0], faces[i][1], faces[i][2], keep);
                const double d2 = pt.squaredNorm();
                if (d2 < best) {
                    best = d2;
                    best_keep = keep;
                    best_pt = pt;
                }
            }
            if (!outside) {
                closest = Vec3::Zero();
                return true;  // origin inside tetrahedron
            }
            s = best_keep;
            closest = best_pt;
            return false;
        }
    }
}

constexpr double kTouchEps = 1e-9;  // sub-nanometer treated as contact

Separation gjkDistance(const ConvexRef& a, const ConvexRef& b) {
    auto support = [&](const Vec3& d) { return supportWorld(a, d) - supportWorld(b, -d); };

    Simplex simplex;
    Vec3 v = support(Vec3(1.0, 0.0, 0.0));
    simplex.set({v});

    for (int iter = 0; iter < 128; ++iter) {
        const double vlen2 = v.squaredNorm();
        if (vlen2 < kTouchEps * kTouchEps) return {0.0, true};

        const Vec3 w = support(-v);
        // No progress toward the origin: |v| is the distance.
        if (vlen2 - v.dot(w) <= 1e-12 * std::max(1.0, vlen2)) break;

        bool dup = false;
        for (int i = 0; i < simplex.n; ++i) {
            if ((simplex.pts[i] - w).squaredNorm() < 1e-24) dup = true;
        }
        if (dup) break;

        simplex.push(w);
        if (simplexClosest(simplex, v)) return {0.0, true};
    }
    const double dist = v.norm();
    if (dist <= kTouchEps) return {0.0, true};
    return {dist, false};
}

}  // namespace

double signedDistance(const Shape& shape, const Vec3& point) {
    switch (shape.kind) {
        case ShapeKind::kBox:
            return sdfBox(point, 0.5 * shape.extents);
        case ShapeKind::kCylinder:
            return sdfCylinder(point, shape.radius, shape.height);
        case ShapeKind::kComposite: {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& part : shape.parts) {
                const Vec3 local = geom::transformPoint(geom::invert(part.pose), point);
                best = std::min(best, signedDistance(part.shape, local));
            }
            return best;
        }
    }
    return 0.0;
}

Separation separation(const Shape& a, const Pose& pose_a, const Shape& b, const Pose& pose_b) {
    std::vector<ConvexRef> as, bs;
    flattenConvex(a, pose_a, as);
    flattenConvex(b, pose_b, bs);
    Separation out{std::numeric_limits<double>::infinity(), false};
    for (const auto& ca : as) {
        for (const auto& cb : bs) {
            const Separation s = gjkDistance(ca, cb);
            if (s.intersecting) return {0.0, true};
            out.distance = std::min(out.distance, s.distance);
        }
    }
    return out;
}

}  // namespace prefplan::collision
