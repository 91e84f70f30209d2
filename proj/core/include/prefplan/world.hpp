#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "prefplan/rng.hpp"
#include "prefplan/shapes.hpp"

namespace prefplan::world {

class WorldError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
/// A primitive's symbolic preconditions do not hold (distinct from
/// geometric infeasibility, which is a zero score, not an error).
class PreconditionError : public WorldError {
public:
    using WorldError::WorldError;
};
class FrameError : public WorldError {
public:
    using WorldError::WorldError;
};
class ScenarioError : public WorldError {
public:
    using WorldError::WorldError;
};

struct ObjectInst {
    Shape shape;
    geom::Pose pose;
};

/// Axis-aligned rectangular support region. `center` is the midpoint of
/// the top face; extents are full side lengths.
struct Surface {
    Eigen::Vector3d center{0.0, 0.0, 0.0};
    double size_x = 0.0;
    double size_y = 0.0;
};

struct Human {
    std::vector<Eigen::Vector3d> keypoints;
    double reach_radius = 0.0;
};

struct Workspace {
    Eigen::Vector3d center{0.0, 0.0, 0.0};
    double radius = 1.0;
};

struct Grasp {
    std::string object;
    geom::Pose ee_to_object;  // held pose = ee_pose * ee_to_object
};

struct WorldState {
    std::map<std::string, ObjectInst> objects;
    geom::Pose ee_pose;
    std::optional<Grasp> held;
    std::optional<Human> human;
    std::map<std::string, Surface> surfaces;
    Workspace workspace;
};

enum class PrimitiveKind { kPick, kPlace, kStaticHandover };

std::string primitiveName(PrimitiveKind kind);
PrimitiveKind primitiveFromName(const std::string& name);

/// Continuous action dimensionality: pick 4 (grasp offset xyz + yaw),
/// place 3 (x, y, yaw), static_handover 6 (position + yaw/pitch/roll).
int actionDim(PrimitiveKind kind);

struct PrimitiveInstance {
    PrimitiveKind kind = PrimitiveKind::kPick;
    std::string object;
    std::string surface;  // place only

    std::string label() const;
};

/// Parse "pick(obj)", "place(obj, surface)", "static_handover(obj)".
PrimitiveInstance parsePrimitiveCall(const std::string& text);

/// Normalized action vector; every component in [-1, 1].
struct Action {
    std::vector<double> params;
};

struct JitterRange {
    Eigen::Vector3d position{0.0, 0.0, 0.0};
    double yaw = 0.0;
};

struct Scenario {
    WorldState initial;
    std::map<std::string, JitterRange> jitter;
};

/// Frame/object ids known to a state; drives DSL name resolution.
struct SceneCatalog {
    std::set<std::string> frames;

    bool has(const std::string& id) const { return frames.count(id) != 0; }
};

Scenario loadScenario(const std::string& json_text);
SceneCatalog makeCatalog(const WorldState& state);

/// Pose of any catalog frame in world coordinates. Unknown ids are an
/// error, never a default.
geom::Pose resolveFrame(const WorldState& state, const std::string& id);

/// Pose of `obj` expressed in `frame`.
geom::Pose getPose(const WorldState& state, const std::string& obj, const std::string& frame);

void checkPreconditions(const WorldState& state, const PrimitiveInstance& prim);

/// Deterministic successor state. Throws PreconditionError when the
/// primitive's symbolic preconditions fail, and std::invalid_argument on
/// out-of-bounds actions.
WorldState transition(const WorldState& state, const PrimitiveInstance& prim, const Action& action);

/// Probability in [0, 1] that the skill is geometrically feasible:
/// product of smooth margin factors (grasp point on shape, workspace
/// containment, post-transition clearance, surface containment, human
/// reach). Exactly 0 past any ramp.
double feasibility(const WorldState& state, const PrimitiveInstance& prim, const Action& action);

/// Binary success predicate: all hard conditions hold with zero margin
/// (the smooth ramps of `feasibility` are used only for optimization).
bool hardFeasible(const WorldState& state, const PrimitiveInstance& prim, const Action& action);

Action sampleAction(PrimitiveKind kind, rng::Rng& rng);

/// De-normalized action (named physical values, meters/radians).
std::vector<std::pair<std::string, double>> physicalParams(const WorldState& state,
                                                           const PrimitiveInstance& prim,
                                                           const Action& action);

std::uint64_t stateDigest(const WorldState& state);

}  // namespace prefplan::world
