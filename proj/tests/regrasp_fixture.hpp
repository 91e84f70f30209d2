#pragma once

// The re-grasp scenario: a screwdriver lies at the table edge with the rod
// section outside the robot workspace. Grasping the rod directly is
// impossible (workspace) and grasping the handle violates the rod-grasp
// preference exactly, so the first shooting pass scores 0. After a greedy
// handle pick, placing the tool upright brings the rod into reach and the
// 3-step re-shoot succeeds.

#include <string>

#include "prefplan/planner.hpp"

namespace prefplan::testutil {

inline std::string regraspScenario() {
    return R"({
      "objects": [
        {"id": "screwdriver",
         "shape": {"type": "composite", "parts": [
            {"id": "handle",
             "pose": {"position": [0, 0, -0.06], "orientation": [1, 0, 0, 0]},
             "shape": {"type": "cylinder", "radius": 0.015, "height": 0.12}},
            {"id": "rod",
             "pose": {"position": [0, 0, 0.075], "orientation": [1, 0, 0, 0]},
             "shape": {"type": "cylinder", "radius": 0.004, "height": 0.15}}
         ]},
         "pose": {"position": [0.445, 0.0, 0.016],
                  "orientation": [0.7071067811865476, 0, 0.7071067811865476, 0]}}
      ],
      "surfaces": [
        {"id": "table", "center": [0.0, 0.0, 0.0], "extents": [1.2, 0.8]}
      ],
      "human": {
        "keypoints": [[0.9, 0.0, 0.4], [0.9, 0.12, 0.55], [0.9, -0.12, 0.55]],
        "reach_radius": 0.8
      },
      "robot": {
        "ee_pose": {"position": [0.0, 0.0, 0.4], "orientation": [1, 0, 0, 0]},
        "workspace": {"center": [0.0, 0.0, 0.2], "radius": 0.45}
      }
    })";
}

// Direct attempt: rod grasp demanded with a hard cutoff; structurally 0
// because every rod-near grasp sits outside the workspace.
inline planner::PlanSkeleton regraspDirectSkeleton() {
    planner::PlanSkeleton skeleton;
    planner::SkeletonStep pick;
    pick.primitive = world::parsePrimitiveCall("pick(screwdriver)");
    pick.preference = dsl::parse(
        "linear(positionNorm(getPose(next_state, 'ee', 'world'), "
        "getPose(next_state, 'screwdriver/rod', 'world'), norm='L2', axis=['x', 'y', 'z']), "
        "0.03, 0.09, direction=false)");
    planner::SkeletonStep handover;
    handover.primitive = world::parsePrimitiveCall("static_handover(screwdriver)");
    handover.mode = safety::ControllerMode::kContact;
    handover.preset = "intermediate";
    handover.params = safety::presetParams(safety::Preset::kIntermediate);
    handover.preference = dsl::parse(
        "linear(pointingInDirectionMetric(getPose(next_state, 'screwdriver', 'world'), "
        "getPose(next_state, 'human', 'world'), main_axis=[0, 0, -1]), 0.4, 1.4, "
        "direction=false)");
    skeleton.steps = {pick, handover};
    return skeleton;
}

// Recovery plan requested once the tool is in hand: put it down upright
// near the table center, re-grasp by the rod, hand over handle-first.
// Smooth (never-zero) preferences give the sampler gradient everywhere.
inline planner::PlanSkeleton regraspRecoverySkeleton() {
    planner::PlanSkeleton skeleton;
    planner::SkeletonStep place;
    place.primitive = world::parsePrimitiveCall("place(screwdriver, table)");
    place.preference = dsl::parse(
        "normal(positionNorm(getPose(next_state, 'screwdriver', 'world'), "
        "getPose(next_state, 'table', 'world'), norm='L2', axis=['x', 'y']), "
        "0.0, 0.12, direction=false)");
    planner::SkeletonStep pick;
    pick.primitive = world::parsePrimitiveCall("pick(screwdriver)");
    pick.preference = dsl::parse(
        "normal(positionNorm(getPose(next_state, 'ee', 'world'), "
        "getPose(next_state, 'screwdriver/rod', 'world'), norm='L2', axis=['x', 'y', 'z']), "
        "0.05, 0.04, direction=false)");
    planner::SkeletonStep handover;
    handover.primitive = world::parsePrimitiveCall("static_handover(screwdriver)");
    handover.mode = safety::ControllerMode::kContact;
    handover.preset = "intermediate";
    handover.params = safety::presetParams(safety::Preset::kIntermediate);
    handover.preference = dsl::parse(
        "normal(pointingInDirectionMetric(getPose(next_state, 'screwdriver', 'world'), "
        "getPose(next_state, 'human', 'world'), main_axis=[0, 0, -1]), "
        "0.5, 0.35, direction=false)");
    skeleton.steps = {place, pick, handover};
    return skeleton;
}

inline planner::SkeletonSource regraspSkeletonSource() {
    return [](const world::WorldState& state) {
        return state.held ? regraspRecoverySkeleton() : regraspDirectSkeleton();
    };
}

inline planner::CandidateSource regraspCandidateSource() {
    return [](const world::WorldState&, int) {
        planner::GreedyCandidate pick;
        pick.primitive = world::parsePrimitiveCall("pick(screwdriver)");
        pick.s_task = 1.0;
        pick.mode = safety::ControllerMode::kContact;
        pick.preset = "beginner";
        pick.params = safety::presetParams(safety::Preset::kBeginner);
        return std::vector<planner::GreedyCandidate>{pick};
    };
}

}  // namespace prefplan::testutil
