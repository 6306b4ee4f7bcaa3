#pragma once

#include <vector>

#include "navlab/core/image.hpp"
#include "navlab/mazeworld/maze.hpp"

namespace navlab::mazeworld {

// Per-column ray hit, exposed for tests and debugging overlays.
struct ColumnHit {
    double distance = 0.0;       // ray-hit distance, meters
    double perp_distance = 0.0;  // fisheye-corrected distance used for projection
    int wall_height = 0;         // pixels
    int cell_x = 0, cell_y = 0;  // hit wall cell
    int face = 0;                // 0:+x 1:-x 2:+y 3:-y side the ray entered through
};

// Ego-view ray casting with distance shading and per-wall palette colors.
// Pure function of (maze, pose, resolution, fov); wall column height is
// monotonically non-increasing in perpendicular hit distance.
Image render_ego(const MazeSpec& maze, const Pose& pose, int resolution, double fov_deg);
Image render_ego(const MazeSpec& maze, const Pose& pose, int resolution, double fov_deg,
                 std::vector<ColumnHit>* hits);

}  // namespace navlab::mazeworld
