#include "prefplan/world.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "prefplan/collision.hpp"
#include "json_util.hpp"

namespace prefplan::world {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Feasibility ramp widths (meters). The smooth ramps give the sampling
// optimizer structure to climb; hard success is judged at zero margin.
constexpr double kRampGrasp = 0.005;
constexpr double kRampWorkspace = 0.005;
constexpr double kRampSurface = 0.005;
constexpr double kRampClearance = 0.005;
constexpr double kRampReach = 0.02;

// Place targets may fall this far outside the surface so that the action
// space can express (and get penalized for) off-surface placements.
constexpr double kPlaceSlack = 1.0;

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

Eigen::Quaterniond rotZ(double yaw) {
    return Eigen::Quaterniond(Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()));
}

void validateAction(const PrimitiveInstance& prim, const Action& action) {
    const int dim = actionDim(prim.kind);
    if (static_cast<int>(action.params.size()) != dim) {
        throw std::invalid_argument(prim.label() + ": action has " +
                                    std::to_string(action.params.size()) + " components, expected " +
                                    std::to_string(dim));
    }
    for (double c : action.params) {
        if (!(c >= -1.0 - 1e-12 && c <= 1.0 + 1e-12)) {
            throw std::invalid_argument(prim.label() + ": action component out of [-1,1]");
        }
    }
}

const ObjectInst& objectOrThrow(const WorldState& state, const std::string& id) {
    auto it = state.objects.find(id);
    if (it == state.objects.end()) throw FrameError("unknown object '" + id + "'");
    return it->second;
}

const Surface& surfaceOrThrow(const WorldState& state, const std::string& id) {
    auto it = state.surfaces.find(id);
    if (it == state.surfaces.end()) throw FrameError("unknown surface '" + id + "'");
    return it->second;
}

struct PickParams {
    Eigen::Vector3d offset;  // grasp point, object frame
    double yaw;
};

PickParams pickParams(const ObjectInst& obj, const Action& a) {
    const Aabb bb = localAabb(obj.shape);
    const Eigen::Vector3d comp(a.params[0], a.params[1], a.params[2]);
    return {bb.center() + comp.cwiseProduct(bb.halfExtents()), a.params[3] * kPi};
}

struct PlaceParams {
    double x, y;  // absolute world coordinates
    double yaw;
};

PlaceParams placeParams(const Surface& surf, const Action& a) {
    return {surf.center.x() + a.params[0] * (0.5 * surf.size_x + kPlaceSlack),
            surf.center.y() + a.params[1] * (0.5 * surf.size_y + kPlaceSlack),
            a.params[2] * kPi};
}

struct HandoverParams {
    Eigen::Vector3d position;
    double yaw, pitch, roll;
};

HandoverParams handoverParams(const Workspace& ws, const Action& a) {
    const Eigen::Vector3d comp(a.params[0], a.params[1], a.params[2]);
    return {ws.center + comp * ws.radius, a.params[3] * kPi, a.params[4] * (0.5 * kPi),
            a.params[5] * kPi};
}

Eigen::Quaterniond yprQuat(double yaw, double pitch, double roll) {
    return rotZ(yaw) * Eigen::Quaterniond(Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitY())) *
           Eigen::Quaterniond(Eigen::AngleAxisd(roll, Eigen::Vector3d::UnitX()));
}

// Minimum separation between the moved object (at `pose`) and every other
// object in the scene.
collision::Separation sceneClearance(const WorldState& state, const std::string& moved,
                                     const geom::Pose& pose) {
    collision::Separation out{std::numeric_limits<double>::infinity(), false};
    const Shape& shape = state.objects.at(moved).shape;
    for (const auto& [id, other] : state.objects) {
        if (id == moved) continue;
        const auto s = collision::separation(shape, pose, other.shape, other.pose);
        if (s.intersecting) return {0.0, true};
        out.distance = std::min(out.distance, s.distance);
    }
    return out;
}

struct FeasParts {
    bool has_grasp = false;
    double grasp_sd = 0.0;  // signed distance of grasp point to shape
    double ws_margin = 0.0;
    bool has_surf = false;
    double surf_margin = 0.0;
    bool has_reach = false;
    double reach_margin = 0.0;
    collision::Separation clearance{std::numeric_limits<double>::infinity(), false};
};

double workspaceMargin(const WorldState& state, const Eigen::Vector3d& p) {
    return state.workspace.radius - (p - state.workspace.center).norm();
}

FeasParts feasibilityParts(const WorldState& state, const PrimitiveInstance& prim,
                           const Action& action) {
    FeasParts out;
    switch (prim.kind) {
        case PrimitiveKind::kPick: {
            const ObjectInst& obj = objectOrThrow(state, prim.object);
            const PickParams p = pickParams(obj, action);
            out.has_grasp = true;
            out.grasp_sd = collision::signedDistance(obj.shape, p.offset);
            out.ws_margin = workspaceMargin(state, geom::transformPoint(obj.pose, p.offset));
            out.clearance = sceneClearance(state, prim.object, obj.pose);
            break;
        }
        case PrimitiveKind::kPlace: {
            const ObjectInst& obj = objectOrThrow(state, prim.object);
            const Surface& surf = surfaceOrThrow(state, prim.surface);
            const PlaceParams p = placeParams(surf, action);
            const double rest_z = surf.center.z() - localAabb(obj.shape).min.z();
            const geom::Pose target = geom::makePose({p.x, p.y, rest_z}, rotZ(p.yaw));
            const geom::Pose ee_after =
                geom::compose(target, geom::invert(state.held->ee_to_object));
            out.ws_margin = workspaceMargin(state, ee_after.position);
            out.has_surf = true;
            out.surf_margin =
                std::min(0.5 * surf.size_x - std::abs(p.x - surf.center.x()),
                         0.5 * surf.size_y - std::abs(p.y - surf.center.y()));
            out.clearance = sceneClearance(state, prim.object, target);
            break;
        }
        case PrimitiveKind::kStaticHandover: {
            const HandoverParams p = handoverParams(state.workspace, action);
            const geom::Pose ee_after =
                geom::makePose(p.position, yprQuat(p.yaw, p.pitch, p.roll));
            const geom::Pose obj_pose = geom::compose(ee_after, state.held->ee_to_object);
            out.ws_margin = workspaceMargin(state, p.position);
            out.has_reach = true;
            double nearest = std::numeric_limits<double>::infinity();
            for (const auto& kp : state.human->keypoints) {
                nearest = std::min(nearest, (p.position - kp).norm());
            }
            out.reach_margin = state.human->reach_radius - nearest;
            out.clearance = sceneClearance(state, prim.object, obj_pose);
            break;
        }
    }
    return out;
}

}  // namespace

std::string primitiveName(PrimitiveKind kind) {
    switch (kind) {
        case PrimitiveKind::kPick:
            return "pick";
        case PrimitiveKind::kPlace:
            return "place";
        case PrimitiveKind::kStaticHandover:
            return "static_handover";
    }
    return "?";
}

PrimitiveKind primitiveFromName(const std::string& name) {
    if (name == "pick") return PrimitiveKind::kPick;
    if (name == "place") return PrimitiveKind::kPlace;
    if (name == "static_handover") return PrimitiveKind::kStaticHandover;
    throw std::invalid_argument("unknown primitive '" + name + "'");
}

int actionDim(PrimitiveKind kind) {
    switch (kind) {
        case PrimitiveKind::kPick:
            return 4;
        case PrimitiveKind::kPlace:
            return 3;
        case PrimitiveKind::kStaticHandover:
            return 6;
    }
    return 0;
}

std::string PrimitiveInstance::label() const {
    std::string out = primitiveName(kind) + "(" + object;
    if (kind == PrimitiveKind::kPlace) out += ", " + surface;
    return out + ")";
}

PrimitiveInstance parsePrimitiveCall(const std::string& text) {
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t");
        const auto e = s.find_last_not_of(" \t");
        return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    const auto open = text.find('(');
    const auto close = text.rfind(')');
    if (open == std::string::npos || close == std::string::npos || close < open) {
        throw std::invalid_argument("malformed primitive call '" + text + "'");
    }
    PrimitiveInstance prim;
    prim.kind = primitiveFromName(trim(text.substr(0, open)));
    std::vector<std::string> args;
    std::string inner = text.substr(open + 1, close - open - 1);
    std::stringstream ss(inner);
    std::string item;
    while (std::getline(ss, item, ',')) args.push_back(trim(item));
    if (args.size() == 1 && args[0].empty()) args.clear();

    const size_t expected = prim.kind == PrimitiveKind::kPlace ? 2 : 1;
    if (args.size() != expected) {
        throw std::invalid_argument("primitive '" + primitiveName(prim.kind) + "' expects " +
                                    std::to_string(expected) + " argument(s)");
    }
    prim.object = args[0];
    if (expected == 2) prim.surface = args[1];
    return prim;
}

void checkPreconditions(const WorldState& state, const PrimitiveInstance& prim) {
    switch (prim.kind) {
        case PrimitiveKind::kPick:
            objectOrThrow(state, prim.object);
            if (state.held) {
                throw PreconditionError("pick(" + prim.object + "): hand already holds '" +
                                        state.held->object + "'");
            }
            break;
        case PrimitiveKind::kPlace:
            objectOrThrow(state, prim.object);
            surfaceOrThrow(state, prim.surface);
            if (!state.held || state.held->object != prim.object) {
                throw PreconditionError(prim.label() + ": object is not held");
            }
            break;
        case PrimitiveKind::kStaticHandover:
            objectOrThrow(state, prim.object);
            if (!state.held || state.held->object != prim.object) {
                throw PreconditionError(prim.label() + ": object is not held");
            }
            if (!state.human) {
                throw PreconditionError(prim.label() + ": no human in scene");
            }
            break;
    }
}

WorldState transition(const WorldState& state, const PrimitiveInstance& prim,
                      const Action& action) {
    validateAction(prim, action);
    checkPreconditions(state, prim);
    WorldState next = state;
    switch (prim.kind) {
        case PrimitiveKind::kPick: {
            const ObjectInst& obj = next.objects.at(prim.object);
            const PickParams p = pickParams(obj, action);
            const geom::Pose ee = geom::makePose(geom::transformPoint(obj.pose, p.offset),
                                                 obj.pose.orientation * rotZ(p.yaw));
            next.ee_pose = ee;
            next.held = Grasp{prim.object, geom::compose(geom::invert(ee), obj.pose)};
            break;
        }
        case PrimitiveKind::kPlace: {
            ObjectInst& obj = next.objects.at(prim.object);
            const Surface& surf = next.surfaces.at(prim.surface);
            const PlaceParams p = placeParams(surf, action);
            const double rest_z = surf.center.z() - localAabb(obj.shape).min.z();
            obj.pose = geom::makePose({p.x, p.y, rest_z}, rotZ(p.yaw));
            next.ee_pose = geom::compose(obj.pose, geom::invert(next.held->ee_to_object));
            next.held.reset();
            break;
        }
        case PrimitiveKind::kStaticHandover: {
            const HandoverParams p = handoverParams(next.workspace, action);
            next.ee_pose = geom::makePose(p.position, yprQuat(p.yaw, p.pitch, p.roll));
            next.objects.at(prim.object).pose =
                geom::compose(next.ee_pose, next.held->ee_to_object);
            break;
        }
    }
    return next;
}

double feasibility(const WorldState& state, const PrimitiveInstance& prim, const Action& action) {
    validateAction(prim, action);
    checkPreconditions(state, prim);
    const FeasParts parts = feasibilityParts(state, prim, action);

    double q = clamp01(parts.ws_margin / kRampWorkspace);
    if (parts.has_grasp) q *= clamp01(1.0 - parts.grasp_sd / kRampGrasp);
    if (parts.has_surf) q *= clamp01(parts.surf_margin / kRampSurface);
    if (parts.has_reach) q *= clamp01(parts.reach_margin / kRampReach);
    if (parts.clearance.intersecting) {
        q = 0.0;
    } else if (std::isfinite(parts.clearance.distance)) {
        q *= clamp01(parts.clearance.distance / kRampClearance);
    }
    return q;
}

bool hardFeasible(const WorldState& state, const PrimitiveInstance& prim, const Action& action) {
    validateAction(prim, action);
    checkPreconditions(state, prim);
    const FeasParts parts = feasibilityParts(state, prim, action);
    if (parts.ws_margin < 0.0) return false;
    if (parts.has_grasp && parts.grasp_sd > 0.0) return false;
    if (parts.has_surf && parts.surf_margin < 0.0) return false;
    if (parts.has_reach && parts.reach_margin < 0.0) return false;
    if (parts.clearance.intersecting) return false;
    return true;
}

Action sampleAction(PrimitiveKind kind, rng::Rng& rng) {
    Action a;
    a.params.resize(actionDim(kind));
    for (double& c : a.params) c = rng.uniform(-1.0, 1.0);
    return a;
}

std::vector<std::pair<std::string, double>> physicalParams(const WorldState& state,
                                                           const PrimitiveInstance& prim,
                                                           const Action& action) {
    validateAction(prim, action);
    switch (prim.kind) {
        case PrimitiveKind::kPick: {
            const PickParams p = pickParams(objectOrThrow(state, prim.object), action);
            return {{"grasp_dx", p.offset.x()},
                    {"grasp_dy", p.offset.y()},
                    {"grasp_dz", p.offset.z()},
                    {"grasp_yaw", p.yaw}};
        }
        case PrimitiveKind::kPlace: {
            const PlaceParams p = placeParams(surfaceOrThrow(state, prim.surface), action);
            return {{"place_x", p.x}, {"place_y", p.y}, {"place_yaw", p.yaw}};
        }
        case PrimitiveKind::kStaticHandover: {
            const HandoverParams p = handoverParams(state.workspace, action);
            return {{"target_x", p.position.x()}, {"target_y", p.position.y()},
                    {"target_z", p.position.z()}, {"yaw", p.yaw},
                    {"pitch", p.pitch},           {"roll", p.roll}};
        }
    }
    return {};
}

namespace {

void collectPartFrames(const Shape& shape, const std::string& prefix,
                       std::set<std::string>& out) {
    if (shape.kind != ShapeKind::kComposite) return;
    for (const auto& part : shape.parts) {
        if (part.id.empty()) continue;
        const std::string path = prefix + "/" + part.id;
        out.insert(path);
        collectPartFrames(part.shape, path, out);
    }
}

// Walk named composite parts along a '/'-separated path.
bool findPartPose(const Shape& shape, const std::string& path, geom::Pose& acc) {
    const auto slash = path.find('/');
    const std::string head = slash == std::string::npos ? path : path.substr(0, slash);
    if (shape.kind != ShapeKind::kComposite) return false;
    for (const auto& part : shape.parts) {
        if (part.id != head) continue;
        acc = geom::compose(acc, part.pose);
        if (slash == std::string::npos) return true;
        return findPartPose(part.shape, path.substr(slash + 1), acc);
    }
    return false;
}

Eigen::Vector3d humanCentroid(const Human& h) {
    Eigen::Vector3d c = Eigen::Vector3d::Zero();
    for (const auto& kp : h.keypoints) c += kp;
    return c / static_cast<double>(h.keypoints.size());
}

}  // namespace

SceneCatalog makeCatalog(const WorldState& state) {
    SceneCatalog cat;
    cat.frames.insert("world");
    cat.frames.insert("ee");
    if (state.human) cat.frames.insert("human");
    for (const auto& [id, obj] : state.objects) {
        cat.frames.insert(id);
        collectPartFrames(obj.shape, id, cat.frames);
    }
    for (const auto& [id, surf] : state.surfaces) cat.frames.insert(id);
    return cat;
}

geom::Pose resolveFrame(const WorldState& state, const std::string& id) {
    if (id == "world") return geom::Pose::identity();
    if (id == "ee") return state.ee_pose;
    if (id == "human") {
        if (!state.human) throw FrameError("frame 'human': no human in scene");
        return geom::makePose(humanCentroid(*state.human), Eigen::Quaterniond::Identity());
    }
    const auto slash = id.find('/');
    const std::string base = slash == std::string::npos ? id : id.substr(0, slash);
    if (auto it = state.objects.find(base); it != state.objects.end()) {
        if (slash == std::string::npos) return it->second.pose;
        geom::Pose acc = it->second.pose;
        if (findPartPose(it->second.shape, id.substr(slash + 1), acc)) return acc;
        throw FrameError("unknown part frame '" + id + "'");
    }
    if (auto it = state.surfaces.find(id); it != state.surfaces.end()) {
        return geom::makePose(it->second.center, Eigen::Quaterniond::Identity());
    }
    throw FrameError("unknown frame '" + id + "'");
}

geom::Pose getPose(const WorldState& state, const std::string& obj, const std::string& frame) {
    const geom::Pose obj_pose = resolveFrame(state, obj);
    if (frame == "world") return obj_pose;
    return geom::compose(geom::invert(resolveFrame(state, frame)), obj_pose);
}

namespace {

Shape shapeFromJson(const nlohmann::json& j) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "box") {
        const Eigen::Vector3d e = detail::vec3FromJson(j.at("extents"));
        if (e.minCoeff() <= 0.0) throw ScenarioError("box extents must be positive");
        return Shape::box(e);
    }
    if (type == "cylinder") {
        const double r = j.at("radius").get<double>();
        const double h = j.at("height").get<double>();
        if (r <= 0.0 || h <= 0.0) throw ScenarioError("cylinder radius/height must be positive");
        return Shape::cylinder(r, h);
    }
    if (type == "composite") {
        std::vector<ShapePart> parts;
        std::set<std::string> ids;
        for (const auto& pj : j.at("parts")) {
            ShapePart part;
            if (pj.contains("id")) part.id = pj.at("id").get<std::string>();
            if (!part.id.empty() && !ids.insert(part.id).second) {
                throw ScenarioError("duplicate part id '" + part.id + "'");
            }
            part.pose = detail::poseFromJsonObj(pj.at("pose"));
            part.shape = shapeFromJson(pj.at("shape"));
            parts.push_back(std::move(part));
        }
        if (parts.empty()) throw ScenarioError("composite shape needs at least one part");
        return Shape::composite(std::move(parts));
    }
    throw ScenarioError("unknown shape type '" + type + "'");
}

}  // namespace

Scenario loadScenario(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ScenarioError(std::string("scenario JSON: ") + e.what());
    }
    try {
        Scenario sc;
        WorldState& st = sc.initial;

        if (j.contains("objects")) {
            for (const auto& oj : j.at("objects")) {
                const std::string id = oj.at("id").get<std::string>();
                if (id.empty() || id == "world" || id == "ee" || id == "human" ||
                    id.find('/') != std::string::npos) {
                    throw ScenarioError("invalid object id '" + id + "'");
                }
                if (st.objects.count(id)) throw ScenarioError("duplicate object id '" + id + "'");
                ObjectInst obj;
                obj.shape = shapeFromJson(oj.at("shape"));
                obj.pose = detail::poseFromJsonObj(oj.at("pose"));
                st.objects.emplace(id, std::move(obj));
                if (oj.contains("jitter")) {
                    JitterRange jit;
                    const auto& jj = oj.at("jitter");
                    if (jj.contains("position")) jit.position = detail::vec3FromJson(jj.at("position"));
                    if (jj.contains("yaw")) jit.yaw = jj.at("yaw").get<double>();
                    sc.jitter.emplace(id, jit);
                }
            }
        }

        if (j.contains("surfaces")) {
            for (const auto& sj : j.at("surfaces")) {
                const std::string id = sj.at("id").get<std::string>();
                if (st.surfaces.count(id) || st.objects.count(id)) {
                    throw ScenarioError("duplicate surface id '" + id + "'");
                }
                Surface surf;
                surf.center = detail::vec3FromJson(sj.at("center"));
                const auto& e = sj.at("extents");
                if (!e.is_array() || e.size() != 2) {
                    throw ScenarioError("surface extents must be [size_x, size_y]");
                }
                surf.size_x = e[0].get<double>();
                surf.size_y = e[1].get<double>();
                if (surf.size_x <= 0.0 || surf.size_y <= 0.0) {
                    throw ScenarioError("surface extents must be positive");
                }
                st.surfaces.emplace(id, surf);
            }
        }

        if (j.contains("human")) {
            Human h;
            for (const auto& kj : j.at("human").at("keypoints")) {
                h.keypoints.push_back(detail::vec3FromJson(kj));
            }
            if (h.keypoints.empty()) throw ScenarioError("human needs at least one keypoint");
            h.reach_radius = j.at("human").at("reach_radius").get<double>();
            if (h.reach_radius <= 0.0) throw ScenarioError("reach_radius must be positive");
            st.human = std::move(h);
        }

        const auto& rj = j.at("robot");
        st.ee_pose = detail::poseFromJsonObj(rj.at("ee_pose"));
        st.workspace.center = detail::vec3FromJson(rj.at("workspace").at("center"));
        st.workspace.radius = rj.at("workspace").at("radius").get<double>();
        if (st.workspace.radius <= 0.0) throw ScenarioError("workspace radius must be positive");
        if (rj.contains("held_object")) {
            const std::string held = rj.at("held_object").get<std::string>();
            auto it = st.objects.find(held);
            if (it == st.objects.end()) {
                throw ScenarioError("held_object references unknown object '" + held + "'");
            }
            st.held = Grasp{held, geom::compose(geom::invert(st.ee_pose), it->second.pose)};
        }

        // Reject scenes with interpenetrating objects.
        for (auto a = st.objects.begin(); a != st.objects.end(); ++a) {
            for (auto b = std::next(a); b != st.objects.end(); ++b) {
                const auto s = collision::separation(a->second.shape, a->second.pose,
                                                     b->second.shape, b->second.pose);
                if (s.intersecting) {
                    throw ScenarioError("objects '" + a->first + "' and '" + b->first +
                                        "' overlap in the initial state");
                }
            }
        }
        return sc;
    } catch (const nlohmann::json::exception& e) {
        throw ScenarioError(std::string("scenario JSON: ") + e.what());
    }
}

namespace {

std::uint64_t mix(std::uint64_t h, std::uint64_t v) { return rng::splitmix64(h ^ v); }

std::uint64_t mixDouble(std::uint64_t h, double d) { return mix(h, std::bit_cast<std::uint64_t>(d)); }

std::uint64_t mixPose(std::uint64_t h, const geom::Pose& p) {
    h = mixDouble(h, p.position.x());
    h = mixDouble(h, p.position.y());
    h = mixDouble(h, p.position.z());
    h = mixDouble(h, p.orientation.w());
    h = mixDouble(h, p.orientation.x());
    h = mixDouble(h, p.orientation.y());
    h = mixDouble(h, p.orientation.z());
    return h;
}

}  // namespace

std::uint64_t stateDigest(const WorldState& state) {
    std::uint64_t h = 0x5eed5eed5eed5eedULL;
    for (const auto& [id, obj] : state.objects) {
        h = mix(h, rng::hashBytes(id));
        h = mixPose(h, obj.pose);
    }
    h = mixPose(h, state.ee_pose);
    if (state.held) {
        h = mix(h, rng::hashBytes(state.held->object));
        h = mixPose(h, state.held->ee_to_object);
    }
    if (state.human) {
        for (const auto& kp : state.human->keypoints) {
            h = mixDouble(h, kp.x());
            h = mixDouble(h, kp.y());
            h = mixDouble(h, kp.z());
        }
    }
    return h;
}

}  // namespace prefplan::world
