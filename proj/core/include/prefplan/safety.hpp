#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "prefplan/geometry.hpp"

namespace prefplan::safety {

enum class ControllerMode { kStop, kContact, kCompliant };

std::string modeName(ControllerMode mode);
ControllerMode modeFromName(const std::string& name);

/// Controller parameter vector (the xi of the skill tuple).
struct ControllerParams {
    double v_max = 0.5;          // m/s
    double a_max = 2.0;          // m/s^2
    double j_max = 50.0;         // m/s^3
    double stiffness = 500.0;    // N/m
    double damping = 50.0;       // N s/m
    double v_contact_max = 0.15; // m/s
};

enum class Preset { kCoexistence, kCritical, kBeginner, kIntermediate, kExpert };

std::string presetName(Preset preset);
Preset presetFromName(const std::string& name);
ControllerParams presetParams(Preset preset);

/// Verification timestep (s).
inline constexpr double kDt = 0.01;
/// Contact force bound checked in compliant mode (N).
inline constexpr double kMaxContactForce = 50.0;

struct Waypoint {
    double t = 0.0;
    geom::Pose pose;
    Eigen::Vector3d velocity{0.0, 0.0, 0.0};
};

struct TimedTrajectory {
    double dt = kDt;
    std::vector<Waypoint> points;

    double duration() const { return points.empty() ? 0.0 : points.back().t; }
};

/// Straight-line end-effector trajectory with a trapezoidal speed profile
/// respecting v_max/a_max; starts and ends at rest.
TimedTrajectory planLinearTrajectory(const geom::Pose& start, const geom::Pose& goal,
                                     const ControllerParams& params, double dt = kDt);

struct ReachParams {
    double human_speed = 2.0;   // v_h, m/s
    double disturbance = 0.0;   // robot disturbance inflation, m
    double body_radius = 0.3;   // human keypoint sphere, m
    double link_radius = 0.10;  // robot end-effector sphere, m
};

/// Sphere-swept segment; a == b degenerates to a sphere.
struct Capsule {
    Eigen::Vector3d a{0.0, 0.0, 0.0};
    Eigen::Vector3d b{0.0, 0.0, 0.0};
    double radius = 0.0;
};

struct Occupancy {
    std::vector<Capsule> bodies;
};

/// Occupancy of the robot over [t0, t1]: swept chords between trajectory
/// samples inflated by link radius + v dt + a_max dt^2 / 2 + disturbance.
Occupancy robotOccupancy(const TimedTrajectory& traj, double t0, double t1,
                         const ControllerParams& params, const ReachParams& reach);

/// Occupancy of the human over [t_now, t_end]: one sphere per keypoint
/// with radius body_radius + v_h * (t_end - t_now).
Occupancy humanOccupancy(const std::vector<Eigen::Vector3d>& keypoints, double t_now, double t_end,
                         const ReachParams& reach);

/// True iff any pair of bodies comes within the sum of radii (tangency
/// counts as intersection).
bool checkIntersection(const Occupancy& a, const Occupancy& b);

/// Human keypoints as a function of time.
using HumanStream = std::function<std::vector<Eigen::Vector3d>(double)>;

struct SafetyEvent {
    double t = 0.0;
    ControllerMode mode = ControllerMode::kStop;
    bool intersect = false;
    double v_before = 0.0;  // speed the controller wanted
    double v_after = 0.0;   // speed actually commanded
    std::optional<double> force;  // compliant mode only, N
};

struct VerifyResult {
    TimedTrajectory trajectory;
    std::vector<SafetyEvent> events;
    bool completed = true;
    bool force_ok = true;
    double max_force = 0.0;
    double min_human_clearance = std::numeric_limits<double>::infinity();  // surface-to-surface
    double max_speed_under_intersection = 0.0;
};

/// Execute `input` through the shield: per verification interval the
/// robot either follows the nominal speed or is scaled down so that a
/// fail-safe maneuver (brake to 0 in stop mode, to v_contact_max
/// otherwise) stays collision-free against the human reachable set.
VerifyResult verifyAndScale(const TimedTrajectory& input, ControllerMode mode,
                            const ControllerParams& params, const ReachParams& reach,
                            const HumanStream& human);

std::string trajectoryToJson(const TimedTrajectory& traj);
std::string eventsToJsonLines(const std::vector<SafetyEvent>& events);

}  // namespace prefplan::safety
