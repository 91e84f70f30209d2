#pragma once

#include <string>

#include "prefplan/world.hpp"

namespace prefplan::bench {

inline world::Scenario twoBoxScenario() {
    return world::loadScenario(R"({
      "objects": [
        {"id": "box_red", "shape": {"type": "box", "extents": [0.08, 0.08, 0.08]},
         "pose": {"position": [0.2, 0.0, 0.04], "orientation": [1, 0, 0, 0]}},
        {"id": "box_blue", "shape": {"type": "box", "extents": [0.08, 0.08, 0.08]},
         "pose": {"position": [-0.2, 0.1, 0.04], "orientation": [1, 0, 0, 0]}}
      ],
      "surfaces": [{"id": "table", "center": [0, 0, 0], "extents": [1.2, 0.8]}],
      "robot": {"ee_pose": {"position": [0, 0, 0.4], "orientation": [1, 0, 0, 0]},
                 "workspace": {"center": [0, 0, 0.2], "radius": 5.0}}
    })");
}

}  // namespace prefplan::bench
