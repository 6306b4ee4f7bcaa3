#pragma once

#include <deque>
#include <utility>
#include <vector>

#include "navlab/core/rng.hpp"
#include "navlab/mazeworld/maze.hpp"

namespace navlab::testing {

// All-wall grid with selected cells cleared. Palette ids deterministic.
inline mazeworld::MazeSpec custom_maze(int width, int height,
                                       const std::vector<std::pair<int, int>>& free_cells) {
    mazeworld::MazeSpec maze;
    maze.width = width;
    maze.height = height;
    maze.seed = 0;
    maze.grid.assign(static_cast<size_t>(width) * height, 1);
    maze.palette.assign(maze.grid.size(), 0);
    for (size_t i = 0; i < maze.palette.size(); ++i) maze.palette[i] = static_cast<uint8_t>(i % 12);
    for (auto [cx, cy] : free_cells) maze.grid[static_cast<size_t>(cy) * width + cx] = 0;
    return maze;
}

// Horizontal corridor along row `row`, columns [x0, x1].
inline mazeworld::MazeSpec corridor_maze(int length_cells, int row = 1) {
    std::vector<std::pair<int, int>> cells;
    for (int x = 1; x <= length_cells; ++x) cells.emplace_back(x, row);
    return custom_maze(length_cells + 2, row + 2, cells);
}

// Random occupancy with the largest connected free component kept free and
// everything else filled, so MazeSpec's reachability invariant holds.
inline mazeworld::MazeSpec random_connected_grid(int width, int height, double wall_density,
                                                 uint64_t seed) {
    Rng rng(seed);
    std::vector<uint8_t> grid(static_cast<size_t>(width) * height, 1);
    for (int y = 1; y < height - 1; ++y)
        for (int x = 1; x < width - 1; ++x)
            grid[static_cast<size_t>(y) * width + x] = rng.uniform() < wall_density ? 1 : 0;

    // largest 4-connected free component
    std::vector<int> comp(grid.size(), -1);
    int best_comp = -1, best_size = 0, n_comp = 0;
    for (size_t start = 0; start < grid.size(); ++start) {
        if (grid[start] || comp[start] >= 0) continue;
        const int id = n_comp++;
        int size = 0;
        std::deque<size_t> queue{start};
        comp[start] = id;
        while (!queue.empty()) {
            const size_t cur = queue.front();
            queue.pop_front();
            ++size;
            const int x = static_cast<int>(cur % width), y = static_cast<int>(cur / width);
            const int dx[4] = {1, -1, 0, 0}, dy[4] = {0, 0, 1, -1};
            for (int d = 0; d < 4; ++d) {
                const int nx = x + dx[d], ny = y + dy[d];
                if (nx < 0 || ny < 0 || nx >= width || ny >= height) continue;
                const size_t ni = static_cast<size_t>(ny) * width + nx;
                if (!grid[ni] && comp[ni] < 0) {
                    comp[ni] = id;
                    queue.push_back(ni);
                }
            }
        }
        if (size > best_size) {
            best_size = size;
            best_comp = id;
        }
    }
    for (size_t i = 0; i < grid.size(); ++i)
        if (!grid[i] && comp[i] != best_comp) grid[i] = 1;

    mazeworld::MazeSpec maze;
    maze.width = width;
    maze.height = height;
    maze.seed = seed;
    maze.grid = std::move(grid);
    maze.palette.assign(maze.grid.size(), 0);
    for (size_t i = 0; i < maze.palette.size(); ++i) maze.palette[i] = static_cast<uint8_t>((i * 7) % 12);
    return maze;
}

// Test-local breadth-first search, independent of mazeworld::bfs_field.
inline std::vector<int> reference_bfs(const mazeworld::MazeSpec& maze, int sx, int sy) {
    std::vector<int> dist(static_cast<size_t>(maze.width) * maze.height, -1);
    std::deque<std::pair<int, int>> queue;
    dist[static_cast<size_t>(sy) * maze.width + sx] = 0;
    queue.emplace_back(sx, sy);
    while (!queue.empty()) {
        auto [x, y] = queue.front();
        queue.pop_front();
        const int d = dist[static_cast<size_t>(y) * maze.width + x];
        const int dx[4] = {0, 0, 1, -1}, dy[4] = {1, -1, 0, 0};
        for (int k = 0; k < 4; ++k) {
            const int nx = x + dx[k], ny = y + dy[k];
            if (nx < 0 || ny < 0 || nx >= maze.width || ny >= maze.height) continue;
            auto& nd = dist[static_cast<size_t>(ny) * maze.width + nx];
            if (!maze.occupied(nx, ny) && nd < 0) {
                nd = d + 1;
                queue.emplace_back(nx, ny);
            }
        }
    }
    return dist;
}

}  // namespace navlab::testing
