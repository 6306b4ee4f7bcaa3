#include "navlab/mazeworld/render.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "navlab/core/parallel.hpp"

namespace navlab::mazeworld {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Rgb {
    double r, g, b;
};

constexpr Rgb kWallColors[12] = {
    {0.85, 0.10, 0.10}, {0.10, 0.60, 0.85}, {0.95, 0.75, 0.10}, {0.55, 0.25, 0.80},
    {0.10, 0.75, 0.30}, {0.95, 0.45, 0.10}, {0.90, 0.30, 0.60}, {0.25, 0.35, 0.90},
    {0.55, 0.70, 0.15}, {0.20, 0.80, 0.70}, {0.75, 0.55, 0.35}, {0.60, 0.60, 0.65},
};
constexpr Rgb kFloor = {0.20, 0.19, 0.17};
constexpr Rgb kCeiling = {0.50, 0.54, 0.58};
constexpr double kFaceShade[4] = {0.95, 0.80, 1.00, 0.70};

void render_column(const MazeSpec& maze, const Pose& pose, int resolution, double fov_deg, int col,
                   Image& img, ColumnHit* hit_out) {
    const double cs = maze.cell_size;
    const double rel_deg = fov_deg / 2.0 - (col + 0.5) * fov_deg / resolution;
    const double ang = (pose.heading + rel_deg) * kPi / 180.0;
    const double dirx = std::cos(ang), diry = std::sin(ang);

    // DDA in cell units
    const double pcx = pose.x / cs, pcy = pose.y / cs;
    int cx = static_cast<int>(std::floor(pcx));
    int cy = static_cast<int>(std::floor(pcy));
    const double inf = std::numeric_limits<double>::infinity();
    const double ddx = dirx == 0.0 ? inf : std::fabs(1.0 / dirx);
    const double ddy = diry == 0.0 ? inf : std::fabs(1.0 / diry);
    const int stepx = dirx < 0.0 ? -1 : 1;
    const int stepy = diry < 0.0 ? -1 : 1;
    double sdx = (dirx < 0.0 ? (pcx - cx) : (cx + 1.0 - pcx)) * ddx;
    double sdy = (diry < 0.0 ? (pcy - cy) : (cy + 1.0 - pcy)) * ddy;
    double t = 0.0;
    int side = 0;
    while (true) {
        if (sdx < sdy) {
            t = sdx;
            sdx += ddx;
            cx += stepx;
            side = 0;
        } else {
            t = sdy;
            sdy += ddy;
            cy += stepy;
            side = 1;
        }
        if (maze.occupied(cx, cy)) break;
    }

    const double dist_m = t * cs;
    const double rel_rad = rel_deg * kPi / 180.0;
    const double perp_m = std::max(dist_m * std::cos(rel_rad), 1e-6);
    const double wall_px = resolution * cs / perp_m;
    const int face = side == 0 ? (stepx > 0 ? 0 : 1) : (stepy > 0 ? 2 : 3);

    if (hit_out) {
        hit_out->distance = dist_m;
        hit_out->perp_distance = perp_m;
        hit_out->wall_height = static_cast<int>(std::min<long long>(resolution, std::llround(wall_px)));
        hit_out->cell_x = cx;
        hit_out->cell_y = cy;
        hit_out->face = face;
    }

    const double half = wall_px / 2.0;
    const double mid = resolution / 2.0;
    const int y_top = std::max(0, static_cast<int>(std::ceil(mid - half)));
    const int y_bot = std::min(resolution, static_cast<int>(std::floor(mid + half)));

    const Rgb base = kWallColors[maze.color_id(cx, cy) % 12];
    const double shade = std::clamp(1.0 / (1.0 + 0.5 * perp_m), 0.25, 1.0) * kFaceShade[face];

    for (int y = 0; y < resolution; ++y) {
        Rgb c;
        if (y < y_top) {
            const double fade = 1.0 - 0.25 * (static_cast<double>(y) / mid);
            c = {kCeiling.r * fade, kCeiling.g * fade, kCeiling.b * fade};
        } else if (y >= y_bot) {
            const double fade = 1.0 - 0.25 * (static_cast<double>(resolution - 1 - y) / mid);
            c = {kFloor.r * fade, kFloor.g * fade, kFloor.b * fade};
        } else {
            c = {base.r * shade, base.g * shade, base.b * shade};
        }
        img.at(y, col, 0) = c.r;
        img.at(y, col, 1) = c.g;
        img.at(y, col, 2) = c.b;
    }
}

}  // namespace

Image render_ego(const MazeSpec& maze, const Pose& pose, int resolution, double fov_deg,
                 std::vector<ColumnHit>* hits) {
    if (resolution < 16) throw std::invalid_argument("render_ego: resolution must be >= 16");
    if (!(fov_deg > 0.0 && fov_deg < 180.0)) throw std::invalid_argument("render_ego: fov out of (0,180)");
    if (!maze.pose_in_free_cell(pose)) throw std::invalid_argument("render_ego: pose in occupied cell");
    Image img(resolution, resolution);
    if (hits) hits->assign(resolution, ColumnHit{});
#pragma omp parallel for schedule(static) if (kernels::parallel_ok() && resolution >= 128)
    for (int col = 0; col < resolution; ++col)
        render_column(maze, pose, resolution, fov_deg, col, img, hits ? &(*hits)[col] : nullptr);
    return img;
}

Image render_ego(const MazeSpec& maze, const Pose& pose, int resolution, double fov_deg) {
    return render_ego(maze, pose, resolution, fov_deg, nullptr);
}

}  // namespace navlab::mazeworld
