#include "prefplan/safety.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "json_util.hpp"

namespace prefplan::safety {

namespace {

using Vec3 = Eigen::Vector3d;

double clampd(double v, double lo, double hi) { return std::clamp(v, lo, hi); }

double segSegDistance(const Vec3& a1, const Vec3& b1, const Vec3& a2, const Vec3& b2) {
    // Ericson, Real-Time Collision Detection, 5.1.9.
    const Vec3 d1 = b1 - a1, d2 = b2 - a2, r = a1 - a2;
    const double A = d1.squaredNorm(), E = d2.squaredNorm(), F = d2.dot(r);
    constexpr double eps = 1e-18;
    double s = 0.0, t = 0.0;
    if (A <= eps && E <= eps) return r.norm();
    if (A <= eps) {
        t = clampd(F / E, 0.0, 1.0);
    } else {
        const double C = d1.dot(r);
        if (E <= eps) {
            s = clampd(-C / A, 0.0, 1.0);
        } else {
            const double B = d1.dot(d2);
            const double denom = A * E - B * B;
            s = denom > eps ? clampd((B * F - C * E) / denom, 0.0, 1.0) : 0.0;
            t = (B * s + F) / E;
            if (t < 0.0) {
                t = 0.0;
                s = clampd(-C / A, 0.0, 1.0);
            } else if (t > 1.0) {
                t = 1.0;
                s = clampd((B - C) / A, 0.0, 1.0);
            }
        }
    }
    return ((a1 + d1 * s) - (a2 + d2 * t)).norm();
}

double capsuleInflation(double speed, const ControllerParams& params, const ReachParams& reach,
                        double dt) {
    return reach.link_radius + speed * dt + 0.5 * params.a_max * dt * dt + reach.disturbance;
}

}  // namespace

std::string modeName(ControllerMode mode) {
    switch (mode) {
        case ControllerMode::kStop: return "stop";
        case ControllerMode::kContact: return "contact";
        case ControllerMode::kCompliant: return "compliant";
    }
    return "?";
}

ControllerMode modeFromName(const std::string& name) {
    if (name == "stop") return ControllerMode::kStop;
    if (name == "contact") return ControllerMode::kContact;
    if (name == "compliant") return ControllerMode::kCompliant;
    throw std::invalid_argument("unknown controller mode '" + name + "'");
}

std::string presetName(Preset preset) {
    switch (preset) {
        case Preset::kCoexistence: return "coexistence";
        case Preset::kCritical: return "critical";
        case Preset::kBeginner: return "beginner";
        case Preset::kIntermediate: return "intermediate";
        case Preset::kExpert: return "expert";
    }
    return "?";
}

Preset presetFromName(const std::string& name) {
    if (name == "coexistence") return Preset::kCoexistence;
    if (name == "critical") return Preset::kCritical;
    if (name == "beginner") return Preset::kBeginner;
    if (name == "intermediate") return Preset::kIntermediate;
    if (name == "expert") return Preset::kExpert;
    throw std::invalid_argument("unknown controller preset '" + name + "'");
}

ControllerParams presetParams(Preset preset) {
    // v_max ordered beginner < intermediate < expert; critical is the most
    // cautious overall.
    switch (preset) {
        case Preset::kCoexistence: return {0.5, 2.0, 50.0, 500.0, 50.0, 0.15};
        case Preset::kCritical: return {0.1, 0.5, 10.0, 200.0, 20.0, 0.05};
        case Preset::kBeginner: return {0.25, 1.0, 25.0, 300.0, 30.0, 0.15};
        case Preset::kIntermediate: return {0.5, 2.0, 50.0, 500.0, 50.0, 0.15};
        case Preset::kExpert: return {1.0, 4.0, 100.0, 800.0, 80.0, 0.15};
    }
    return {};
}

TimedTrajectory planLinearTrajectory(const geom::Pose& start, const geom::Pose& goal,
                                     const ControllerParams& params, double dt) {
    const Vec3 delta = goal.position - start.position;
    const double length = delta.norm();
    TimedTrajectory out;
    out.dt = dt;
    if (length < 1e-12) {
        out.points.push_back({0.0, start, Vec3::Zero()});
        out.points.push_back({dt, goal, Vec3::Zero()});
        return out;
    }
    const Vec3 dir = delta / length;
    const double a = params.a_max;
    double v_peak = std::min(params.v_max, std::sqrt(a * length));
    const double t_acc = v_peak / a;
    const double l_acc = 0.5 * v_peak * t_acc;
    const double t_cruise = std::max(0.0, (length - 2.0 * l_acc) / v_peak);
    const double total = 2.0 * t_acc + t_cruise;

    auto profile = [&](double t) -> std::pair<double, double> {  // (s, v)
        if (t <= 0.0) return {0.0, 0.0};
        if (t >= total) return {length, 0.0};
        if (t < t_acc) return {0.5 * a * t * t, a * t};
        if (t < t_acc + t_cruise) return {l_acc + v_peak * (t - t_acc), v_peak};
        const double td = total - t;
        return {length - 0.5 * a * td * td, a * td};
    };

    const int steps = static_cast<int>(std::ceil(total / dt));
    for (int k = 0; k <= steps; ++k) {
        const double t = k * dt;
        const auto [s, v] = profile(t);
        const double frac = s / length;
        Waypoint wp;
        wp.t = t;
        wp.pose = geom::makePose(start.position + dir * s,
                                 start.orientation.slerp(frac, goal.orientation));
        wp.velocity = dir * v;
        out.points.push_back(wp);
    }
    // Land exactly on the goal at rest.
    out.points.back().pose = goal;
    out.points.back().velocity = Vec3::Zero();
    return out;
}

Occupancy robotOccupancy(const TimedTrajectory& traj, double t0, double t1,
                         const ControllerParams& params, const ReachParams& reach) {
    if (traj.points.empty()) throw std::invalid_argument("robotOccupancy: empty trajectory");
    const double first = traj.points.front().t;
    const double last = traj.points.back().t;
    if (t0 > t1 || t0 < first - 1e-9 || t1 > last + 1e-9) {
        throw std::invalid_argument("robotOccupancy: interval outside trajectory support");
    }
    const double dt = traj.dt;
    auto sample = [&](double t) -> std::pair<Vec3, double> {
        const double u = clampd((t - first) / dt, 0.0, double(traj.points.size() - 1));
        const size_t i = std::min(static_cast<size_t>(u), traj.points.size() - 2);
        const double f = clampd(u - double(i), 0.0, 1.0);
        const Vec3 p = traj.points[i].pose.position +
                       f * (traj.points[i + 1].pose.position - traj.points[i].pose.position);
        const double v = (1.0 - f) * traj.points[i].velocity.norm() +
                         f * traj.points[i + 1].velocity.norm();
        return {p, v};
    };

    Occupancy occ;
    if (t1 - t0 < 1e-12) {
        const auto [p, v] = sample(t0);
        occ.bodies.push_back({p, p, capsuleInflation(v, params, reach, dt)});
        return occ;
    }
    for (double t = t0; t < t1 - 1e-12; t += dt) {
        const double te = std::min(t + dt, t1);
        const auto [p0, v0] = sample(t);
        const auto [p1, v1] = sample(te);
        occ.bodies.push_back({p0, p1, capsuleInflation(std::max(v0, v1), params, reach, dt)});
    }
    return occ;
}

Occupancy humanOccupancy(const std::vector<Vec3>& keypoints, double t_now, double t_end,
                         const ReachParams& reach) {
    if (keypoints.empty()) throw std::invalid_argument("humanOccupancy: no keypoints");
    if (t_end < t_now) throw std::invalid_argument("humanOccupancy: t_end before t_now");
    const double r = reach.body_radius + reach.human_speed * (t_end - t_now);
    Occupancy occ;
    occ.bodies.reserve(keypoints.size());
    for (const auto& kp : keypoints) occ.bodies.push_back({kp, kp, r});
    return occ;
}

bool checkIntersection(const Occupancy& a, const Occupancy& b) {
    for (const auto& ca : a.bodies) {
        for (const auto& cb : b.bodies) {
            if (segSegDistance(ca.a, ca.b, cb.a, cb.b) <= ca.radius + cb.radius) return true;
        }
    }
    return false;
}

namespace {

// Polyline path of the input trajectory, indexed by a continuous waypoint
// coordinate u in [0, n-1].
class Path {
public:
    explicit Path(const TimedTrajectory& traj) : traj_(traj) {}

    size_t waypointCount() const { return traj_.points.size(); }

    Vec3 position(double u) const {
        const size_t i = segIndex(u);
        const double f = clampd(u - double(i), 0.0, 1.0);
        return traj_.points[i].pose.position +
               f * (traj_.points[i + 1].pose.position - traj_.points[i].pose.position);
    }

    geom::Pose pose(double u) const {
        const size_t i = segIndex(u);
        const double f = clampd(u - double(i), 0.0, 1.0);
        return geom::makePose(
            position(u), traj_.points[i].pose.orientation.slerp(f, traj_.points[i + 1].pose.orientation));
    }

    Vec3 direction(double u) const {
        const size_t i = segIndex(u);
        const Vec3 d = traj_.points[i + 1].pose.position - traj_.points[i].pose.position;
        const double len = d.norm();
        return len > 1e-12 ? Vec3(d / len) : Vec3::Zero();
    }

    double nominalSpeed(double u) const {
        return traj_.points[segIndex(u)].velocity.norm();
    }

    // Advance `dist` meters along the polyline from u.
    double advance(double u, double dist) const {
        const double n = double(traj_.points.size() - 1);
        while (dist > 1e-15 && u < n - 1e-15) {
            const size_t i = segIndex(u);
            const double seg_len =
                (traj_.points[i + 1].pose.position - traj_.points[i].pose.position).norm();
            if (seg_len < 1e-12) {
                u = double(i + 1);
                continue;
            }
            const double remaining = (double(i + 1) - u) * seg_len;
            if (dist < remaining) return u + dist / seg_len;
            dist -= remaining;
            u = double(i + 1);
        }
        return std::min(u, n);
    }

private:
    size_t segIndex(double u) const {
        const auto n = traj_.points.size();
        const double c = clampd(u, 0.0, double(n - 1));
        return std::min(static_cast<size_t>(c), n - 2);
    }

    const TimedTrajectory& traj_;
};

void validateInput(const TimedTrajectory& input, const ControllerParams& params) {
    if (input.points.size() < 2) {
        throw std::invalid_argument("verifyAndScale: trajectory needs at least two waypoints");
    }
    const double dt = input.dt;
    for (size_t i = 0; i < input.points.size(); ++i) {
        const auto& wp = input.points[i];
        if (!wp.velocity.allFinite()) throw std::invalid_argument("non-finite velocity");
        if (wp.velocity.norm() > params.v_max + 1e-9) {
            throw std::invalid_argument("trajectory exceeds v_max of the controller parameters");
        }
        if (i == 0) continue;
        const auto& prev = input.points[i - 1];
        if (wp.t <= prev.t + 1e-12 * 0.0 && wp.t <= prev.t) {
            throw std::invalid_argument("trajectory times must be strictly increasing");
        }
        if (std::abs(wp.t - prev.t - dt) > 1e-6) {
            throw std::invalid_argument("trajectory timestep is not uniform");
        }
        if (std::abs(wp.velocity.norm() - prev.velocity.norm()) > params.a_max * dt + 1e-9) {
            throw std::invalid_argument("trajectory exceeds a_max of the controller parameters");
        }
        const double avg = (wp.pose.position - prev.pose.position).norm() / dt;
        if (avg > prev.velocity.norm() + params.a_max * dt + 1e-9) {
            throw std::invalid_argument("waypoint spacing inconsistent with stated velocities");
        }
    }
}

}  // namespace

VerifyResult verifyAndScale(const TimedTrajectory& input, ControllerMode mode,
                            const ControllerParams& params, const ReachParams& reach,
                            const HumanStream& human) {
    validateInput(input, params);
    const double dt = input.dt;
    const Path path(input);
    const double n_last = double(input.points.size() - 1);
    const double brake_target =
        mode == ControllerMode::kStop ? 0.0 : params.v_contact_max;
    const double cap = params.v_contact_max;

    VerifyResult result;
    result.trajectory.dt = dt;
    result.trajectory.points.push_back(input.points.front());

    const size_t max_steps = input.points.size() * 10 +
                             static_cast<size_t>(params.v_max / (params.a_max * dt)) + 200;

    double u = 0.0;
    double v_cur = input.points.front().velocity.norm();
    double t = input.points.front().t;
    bool pristine = true;  // output still bit-identical to the input

    // Hypothetical profile: one interval at v0, then braking at a_max
    // toward `target`. Safe iff no interval both intersects the human
    // reachable set and moves faster than the mode allows.
    auto profileSafe = [&](double v0, const std::vector<Vec3>& kps) {
        if (kps.empty()) return true;
        double uk = u;
        double vk = v0;
        double tk = t;
        for (int guard = 0; guard < 100000; ++guard) {
            const double u_next = path.advance(uk, vk * dt);
            const Vec3 p0 = path.position(uk);
            const Vec3 p1 = path.position(u_next);
            Occupancy rob;
            rob.bodies.push_back({p0, p1, capsuleInflation(vk, params, reach, dt)});
            const Occupancy hum = humanOccupancy(kps, t, tk + dt, reach);
            if (checkIntersection(rob, hum)) {
                if (mode == ControllerMode::kStop) {
                    if (vk > 1e-12) return false;
                } else {
                    if (vk > cap + 1e-12) return false;
                }
            }
            if (vk <= brake_target + 1e-12) return true;   // fail-safe reached
            if (u_next >= n_last - 1e-12) return true;      // path exhausted, robot holds
            uk = u_next;
            tk += dt;
            vk = std::max(brake_target, vk - params.a_max * dt);
        }
        return false;
    };

    while (u < n_last - 1e-12 && result.trajectory.points.size() < max_steps) {
        const std::vector<Vec3> kps = human ? human(t) : std::vector<Vec3>{};

        const double v_nom = path.nominalSpeed(u);
        double v_des = std::min(v_nom, v_cur + params.a_max * dt);
        const bool integral = std::abs(u - std::round(u)) < 1e-9;
        if (pristine && integral) v_des = v_nom;

        double v_out;
        if (profileSafe(v_des, kps)) {
            v_out = v_des;
        } else {
            v_out = std::max(std::min(brake_target, v_des), v_cur - params.a_max * dt);
            if (!profileSafe(v_out, kps) && mode == ControllerMode::kStop) {
                // Braking itself is the previously verified fail-safe;
                // keep decelerating.
                v_out = std::max(0.0, v_cur - params.a_max * dt);
            }
        }

        const double u_next = path.advance(u, v_out * dt);
        bool intersect_now = false;
        if (!kps.empty()) {
            Occupancy rob;
            rob.bodies.push_back(
                {path.position(u), path.position(u_next), capsuleInflation(v_out, params, reach, dt)});
            intersect_now = checkIntersection(rob, humanOccupancy(kps, t, t + dt, reach));
        }

        const bool scaled = v_out < v_des - 1e-12;
        if (scaled) pristine = false;

        std::optional<double> force;
        if (!kps.empty()) {
            double nearest = std::numeric_limits<double>::infinity();
            Vec3 nearest_kp = kps.front();
            const Vec3 p_now = path.position(u);
            for (const auto& kp : kps) {
                const double d = (p_now - kp).norm();
                if (d < nearest) {
                    nearest = d;
                    nearest_kp = kp;
                }
            }
            result.min_human_clearance = std::min(
                result.min_human_clearance, nearest - reach.link_radius - reach.body_radius);
            if (mode == ControllerMode::kCompliant) {
                const double pen = reach.link_radius + reach.body_radius - nearest;
                if (pen > 0.0) {
                    const Vec3 to_kp = nearest > 1e-12 ? Vec3((nearest_kp - p_now) / nearest)
                                                       : Vec3::UnitX();
                    const double approach = std::max(0.0, v_out * path.direction(u).dot(to_kp));
                    force = params.stiffness * pen + params.damping * approach;
                    result.max_force = std::max(result.max_force, *force);
                    if (*force > kMaxContactForce) result.force_ok = false;
                }
            }
            if (intersect_now) {
                result.max_speed_under_intersection =
                    std::max(result.max_speed_under_intersection, v_out);
            }
        }

        if (scaled || intersect_now) {
            result.events.push_back({t, mode, intersect_now, v_des, v_out, force});
        }

        t += dt;
        if (pristine && integral && v_out == v_des) {
            const size_t i = static_cast<size_t>(std::round(u)) + 1;
            u = double(i);
            result.trajectory.points.push_back(input.points[i]);
            v_cur = input.points[i].velocity.norm();
        } else {
            pristine = false;
            u = u_next;
            Waypoint wp;
            wp.t = t;
            wp.pose = path.pose(u);
            wp.velocity = path.direction(u) * v_out;
            if (u >= n_last - 1e-12) wp.velocity = Vec3::Zero();
            result.trajectory.points.push_back(wp);
            v_cur = v_out;
        }
    }

    result.completed = u >= n_last - 1e-12;
    return result;
}

std::string trajectoryToJson(const TimedTrajectory& traj) {
    nlohmann::json j;
    j["dt"] = traj.dt;
    auto& pts = j["points"] = nlohmann::json::array();
    for (const auto& wp : traj.points) {
        nlohmann::json p;
        p["t"] = wp.t;
        p["pose"] = detail::poseJson(wp.pose);
        p["velocity"] = detail::vec3Json(wp.velocity);
        pts.push_back(std::move(p));
    }
    return j.dump(2);
}

std::string eventsToJsonLines(const std::vector<SafetyEvent>& events) {
    std::ostringstream os;
    for (const auto& e : events) {
        nlohmann::json j;
        j["t"] = e.t;
        j["mode"] = modeName(e.mode);
        j["intersect"] = e.intersect;
        j["v_before"] = e.v_before;
        j["v_after"] = e.v_after;
        if (e.force) j["force"] = *e.force;
        os << j.dump() << "\n";
    }
    return os.str();
}

}  // namespace prefplan::safety
