#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace navlab::mazeworld {

// Paper-fixed agent constants.
inline constexpr double kTurnDeg = 30.0;      // rotation unit
inline constexpr double kForwardStep = 0.25;  // meters per MOVE_FORWARD
inline constexpr double kStopRadius = 1.0;    // success radius, meters
inline constexpr double kClearance = 0.1;     // agent body radius for forward checks

struct Pose {
    double x = 0.0;        // meters
    double y = 0.0;        // meters
    double heading = 0.0;  // degrees in [0, 360), CCW, 0 = +x
};

double wrap_degrees(double deg);                       // -> [0, 360)
double signed_angle_diff(double target, double from);  // -> (-180, 180]

// Occupancy-grid world. Row-major grid, 1 = wall. Cell (cx,cy) spans
// [cx*cell_size, (cx+1)*cell_size) x [cy*cell_size, (cy+1)*cell_size).
struct MazeSpec {
    int width = 0;   // cells
    int height = 0;  // cells
    double cell_size = 0.5;
    uint64_t seed = 0;
    std::vector<uint8_t> grid;     // width*height, 1 = occupied
    std::vector<uint8_t> palette;  // per-cell wall color id

    bool occupied(int cx, int cy) const {
        if (cx < 0 || cy < 0 || cx >= width || cy >= height) return true;
        return grid[static_cast<size_t>(cy) * width + cx] != 0;
    }
    uint8_t color_id(int cx, int cy) const {
        if (cx < 0 || cy < 0 || cx >= width || cy >= height) return 0;
        return palette[static_cast<size_t>(cy) * width + cx];
    }
    int cell_x(double x) const { return static_cast<int>(std::floor(x / cell_size)); }
    int cell_y(double y) const { return static_cast<int>(std::floor(y / cell_size)); }
    bool pose_in_free_cell(const Pose& p) const { return !occupied(cell_x(p.x), cell_y(p.y)); }
    double center_x(int cx) const { return (cx + 0.5) * cell_size; }
    double center_y(int cy) const { return (cy + 0.5) * cell_size; }
    std::vector<std::pair<int, int>> free_cells() const;

    bool operator==(const MazeSpec& o) const = default;
};

// Perfect-maze carving (recursive backtracker). width/height must be odd and
// >= 5; deterministic in (seed, width, height). All free cells are mutually
// reachable and the outer boundary is fully occupied.
MazeSpec generate_maze(uint64_t seed, int width, int height);

// Versioned JSON round-trip (grid as row-major bit string).
std::string maze_to_json(const MazeSpec& maze);
MazeSpec maze_from_json(const std::string& text);

// Hop counts from a goal cell over 4-connected free cells; -1 = unreachable.
struct DistanceField {
    int width = 0, height = 0;
    double cell_size = 0.5;
    std::vector<int> hops;
    int hops_at(int cx, int cy) const {
        if (cx < 0 || cy < 0 || cx >= width || cy >= height) return -1;
        return hops[static_cast<size_t>(cy) * width + cx];
    }
    double meters_at(int cx, int cy) const;
};

DistanceField bfs_field(const MazeSpec& maze, int goal_cx, int goal_cy);

// Shortest free-cell path length in meters. Both poses must lie in free
// space; symmetric and satisfies the triangle inequality.
double geodesic_distance(const MazeSpec& maze, const Pose& a, const Pose& b);

}  // namespace navlab::mazeworld
