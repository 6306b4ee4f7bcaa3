#include "navlab/mazeworld/maze.hpp"

#include <cmath>
#include <deque>
#include <stdexcept>

#include <json.hpp>

#include "navlab/core/rng.hpp"

namespace navlab::mazeworld {

double wrap_degrees(double deg) {
    double d = std::fmod(deg, 360.0);
    if (d < 0.0) d += 360.0;
    return d;
}

double signed_angle_diff(double target, double from) {
    double d = std::fmod(target - from, 360.0);
    if (d > 180.0) d -= 360.0;
    if (d <= -180.0) d += 360.0;
    return d;
}

std::vector<std::pair<int, int>> MazeSpec::free_cells() const {
    std::vector<std::pair<int, int>> out;
    for (int cy = 0; cy < height; ++cy)
        for (int cx = 0; cx < width; ++cx)
            if (!occupied(cx, cy)) out.emplace_back(cx, cy);
    return out;
}

MazeSpec generate_maze(uint64_t seed, int width, int height) {
    if (width < 5 || height < 5) throw std::invalid_argument("generate_maze: dimensions must be >= 5");
    if (width % 2 == 0 || height % 2 == 0)
        throw std::invalid_argument("generate_maze: dimensions must be odd (perfect-maze carving)");
    MazeSpec maze;
    maze.width = width;
    maze.height = height;
    maze.seed = seed;
    maze.grid.assign(static_cast<size_t>(width) * height, 1);

    // Rooms at odd coordinates; iterative backtracker carves passages.
    Rng rng(derive_seed(seed, "maze-carve"));
    const int rw = (width - 1) / 2, rh = (height - 1) / 2;
    auto room_idx = [rw](int rx, int ry) { return static_cast<size_t>(ry) * rw + rx; };
    std::vector<uint8_t> visited(static_cast<size_t>(rw) * rh, 0);
    auto carve = [&](int cx, int cy) { maze.grid[static_cast<size_t>(cy) * width + cx] = 0; };

    std::vector<std::pair<int, int>> stack;
    stack.emplace_back(0, 0);
    visited[0] = 1;
    carve(1, 1);
    const int dx[4] = {1, 0, -1, 0};
    const int dy[4] = {0, 1, 0, -1};
    while (!stack.empty()) {
        auto [rx, ry] = stack.back();
        int options[4];
        int n_opts = 0;
        for (int d = 0; d < 4; ++d) {
            const int nx = rx + dx[d], ny = ry + dy[d];
            if (nx >= 0 && ny >= 0 && nx < rw && ny < rh && !visited[room_idx(nx, ny)])
                options[n_opts++] = d;
        }
        if (n_opts == 0) {
            stack.pop_back();
            continue;
        }
        const int d = options[rng.uniform_index(n_opts)];
        const int nx = rx + dx[d], ny = ry + dy[d];
        visited[room_idx(nx, ny)] = 1;
        carve(1 + 2 * rx + dx[d], 1 + 2 * ry + dy[d]);  // wall between rooms
        carve(1 + 2 * nx, 1 + 2 * ny);
        stack.emplace_back(nx, ny);
    }

    // Wall colors keyed by the maze seed; free cells keep id 0.
    Rng palette_rng(derive_seed(seed, "maze-palette"));
    maze.palette.assign(static_cast<size_t>(width) * height, 0);
    for (size_t i = 0; i < maze.grid.size(); ++i)
        if (maze.grid[i]) maze.palette[i] = static_cast<uint8_t>(palette_rng.uniform_int(12));
    return maze;
}

std::string maze_to_json(const MazeSpec& maze) {
    nlohmann::json j;
    j["version"] = 1;
    j["width"] = maze.width;
    j["height"] = maze.height;
    j["cell_size"] = maze.cell_size;
    j["seed"] = maze.seed;
    std::string grid;
    grid.reserve(maze.grid.size());
    for (uint8_t g : maze.grid) grid.push_back(g ? '1' : '0');
    j["grid"] = grid;
    j["palette"] = maze.palette;
    return j.dump();
}

MazeSpec maze_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    if (!j.contains("version") || j["version"].get<int>() != 1)
        throw std::runtime_error("maze_from_json: unsupported version");
    MazeSpec maze;
    maze.width = j["width"].get<int>();
    maze.height = j["height"].get<int>();
    maze.cell_size = j["cell_size"].get<double>();
    maze.seed = j["seed"].get<uint64_t>();
    const auto grid = j["grid"].get<std::string>();
    if (static_cast<int>(grid.size()) != maze.width * maze.height)
        throw std::runtime_error("maze_from_json: grid size mismatch");
    maze.grid.reserve(grid.size());
    for (char c : grid) maze.grid.push_back(c == '1' ? 1 : 0);
    maze.palette = j["palette"].get<std::vector<uint8_t>>();
    if (maze.palette.size() != maze.grid.size())
        throw std::runtime_error("maze_from_json: palette size mismatch");
    return maze;
}

double DistanceField::meters_at(int cx, int cy) const {
    const int h = hops_at(cx, cy);
    if (h < 0) throw std::runtime_error("DistanceField: cell unreachable");
    return h * cell_size;
}

DistanceField bfs_field(const MazeSpec& maze, int goal_cx, int goal_cy) {
    if (maze.occupied(goal_cx, goal_cy)) throw std::invalid_argument("bfs_field: goal cell occupied");
    DistanceField field;
    field.width = maze.width;
    field.height = maze.height;
    field.cell_size = maze.cell_size;
    field.hops.assign(static_cast<size_t>(maze.width) * maze.height, -1);
    std::deque<std::pair<int, int>> queue;
    field.hops[static_cast<size_t>(goal_cy) * maze.width + goal_cx] = 0;
    queue.emplace_back(goal_cx, goal_cy);
    const int dx[4] = {1, -1, 0, 0};
    const int dy[4] = {0, 0, 1, -1};
    while (!queue.empty()) {
        auto [cx, cy] = queue.front();
        queue.pop_front();
        const int base = field.hops[static_cast<size_t>(cy) * maze.width + cx];
        for (int d = 0; d < 4; ++d) {
            const int nx = cx + dx[d], ny = cy + dy[d];
            if (maze.occupied(nx, ny)) continue;
            auto& h = field.hops[static_cast<size_t>(ny) * maze.width + nx];
            if (h < 0) {
                h = base + 1;
                queue.emplace_back(nx, ny);
            }
        }
    }
    return field;
}

double geodesic_distance(const MazeSpec& maze, const Pose& a, const Pose& b) {
    if (!maze.pose_in_free_cell(a) || !maze.pose_in_free_cell(b))
        throw std::invalid_argument("geodesic_distance: pose in occupied space");
    const auto field = bfs_field(maze, maze.cell_x(b.x), maze.cell_y(b.y));
    return field.meters_at(maze.cell_x(a.x), maze.cell_y(a.y));
}

}  // namespace navlab::mazeworld
