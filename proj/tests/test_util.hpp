#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "prefplan/world.hpp"

namespace prefplan::testutil {

inline std::string readFile(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline std::string dataPath(const std::string& rel) {
    return std::string(PREFPLAN_DATA_DIR) + "/" + rel;
}

// One 8 cm box near the middle of a large table, huge workspace, no human.
inline std::string boxOnTableScenario() {
    return R"({
      "objects": [
        {"id": "box_red",
         "shape": {"type": "box", "extents": [0.08, 0.08, 0.08]},
         "pose": {"position": [0.1, 0.0, 0.04], "orientation": [1, 0, 0, 0]},
         "jitter": {"position": [0.05, 0.05, 0.0], "yaw": 0.5}}
      ],
      "surfaces": [
        {"id": "table", "center": [0.0, 0.0, 0.0], "extents": [1.2, 0.8]}
      ],
      "robot": {
        "ee_pose": {"position": [0.0, 0.0, 0.4], "orientation": [1, 0, 0, 0]},
        "workspace": {"center": [0.0, 0.0, 0.2], "radius": 5.0}
      }
    })";
}

// Two boxes with room to spare.
inline std::string twoBoxScenario() {
    return R"({
      "objects": [
        {"id": "box_red",
         "shape": {"type": "box", "extents": [0.08, 0.08, 0.08]},
         "pose": {"position": [0.2, 0.0, 0.04], "orientation": [1, 0, 0, 0]}},
        {"id": "box_blue",
         "shape": {"type": "box", "extents": [0.08, 0.08, 0.08]},
         "pose": {"position": [-0.2, 0.1, 0.04], "orientation": [1, 0, 0, 0]}}
      ],
      "surfaces": [
        {"id": "table", "center": [0.0, 0.0, 0.0], "extents": [1.2, 0.8]}
      ],
      "robot": {
        "ee_pose": {"position": [0.0, 0.0, 0.4], "orientation": [1, 0, 0, 0]},
        "workspace": {"center": [0.0, 0.0, 0.2], "radius": 5.0}
      }
    })";
}

// Screwdriver (handle + rod cylinders along +z) lying on a desk, human in
// front of the robot.
inline std::string screwdriverScenario() {
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
         "pose": {"position": [0.1, 0.0, 0.016],
                  "orientation": [0.7071067811865476, 0, 0.7071067811865476, 0]}}
      ],
      "surfaces": [
        {"id": "desk", "center": [0.0, 0.0, 0.0], "extents": [1.0, 0.7]}
      ],
      "human": {
        "keypoints": [[0.9, 0.0, 0.4], [0.9, 0.1, 0.6], [0.9, -0.1, 0.6]],
        "reach_radius": 0.8
      },
      "robot": {
        "ee_pose": {"position": [0.0, 0.0, 0.4], "orientation": [1, 0, 0, 0]},
        "workspace": {"center": [0.2, 0.0, 0.3], "radius": 0.9}
      }
    })";
}

inline world::Scenario loadText(const std::string& text) { return world::loadScenario(text); }

}  // namespace prefplan::testutil
