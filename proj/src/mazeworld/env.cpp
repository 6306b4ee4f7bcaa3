#include "navlab/mazeworld/env.hpp"

#include <cmath>
#include <stdexcept>

#include "navlab/core/rng.hpp"

namespace navlab::mazeworld {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

const char* action_name(Action a) {
    switch (a) {
        case Action::move_forward: return "MOVE_FORWARD";
        case Action::turn_left: return "TURN_LEFT";
        case Action::turn_right: return "TURN_RIGHT";
        case Action::stop: return "STOP";
    }
    return "?";
}

Action action_from_name(const std::string& name) {
    for (int i = 0; i < kNumActions; ++i)
        if (name == action_name(static_cast<Action>(i))) return static_cast<Action>(i);
    throw std::invalid_argument("unknown action: " + name);
}

bool position_blocked(const MazeSpec& maze, double x, double y) {
    const double r = kClearance;
    const int cx0 = maze.cell_x(x - r), cx1 = maze.cell_x(x + r);
    const int cy0 = maze.cell_y(y - r), cy1 = maze.cell_y(y + r);
    for (int cy = cy0; cy <= cy1; ++cy)
        for (int cx = cx0; cx <= cx1; ++cx)
            if (maze.occupied(cx, cy)) return true;
    return false;
}

MoveOutcome apply_action(const MazeSpec& maze, const Pose& pose, Action action) {
    MoveOutcome out{pose, false};
    switch (action) {
        case Action::turn_left:
            out.pose.heading = wrap_degrees(pose.heading + kTurnDeg);
            break;
        case Action::turn_right:
            out.pose.heading = wrap_degrees(pose.heading - kTurnDeg);
            break;
        case Action::move_forward: {
            const double a = pose.heading * kPi / 180.0;
            const double nx = pose.x + kForwardStep * std::cos(a);
            const double ny = pose.y + kForwardStep * std::sin(a);
            if (position_blocked(maze, nx, ny)) {
                out.collided = true;
            } else {
                out.pose.x = nx;
                out.pose.y = ny;
            }
            break;
        }
        case Action::stop:
            break;
    }
    return out;
}

double euclidean(const Pose& a, const Pose& b) { return std::hypot(a.x - b.x, a.y - b.y); }

Env::Env(EpisodeSpec episode)
    : episode_(std::move(episode)),
      goal_field_(bfs_field(*episode_.maze, episode_.maze->cell_x(episode_.goal.x),
                            episode_.maze->cell_y(episode_.goal.y))),
      pose_(episode_.start) {
    if (!episode_.maze->pose_in_free_cell(pose_))
        throw std::invalid_argument("Env: start pose in occupied space");
}

double Env::geodesic_to_goal() const {
    return goal_field_.meters_at(episode_.maze->cell_x(pose_.x), episode_.maze->cell_y(pose_.y));
}

Image Env::observation() const {
    return render_ego(*episode_.maze, pose_, episode_.resolution, episode_.fov_deg);
}

StepResult Env::step(Action action) {
    if (done_) throw std::logic_error("Env::step: episode already done");
    StepResult res;
    const MoveOutcome out = apply_action(*episode_.maze, pose_, action);
    if (action == Action::move_forward && !out.collided) path_length_ += kForwardStep;
    pose_ = out.pose;
    res.collided = out.collided;
    ++steps_;
    if (action == Action::stop) {
        done_ = true;
        success_ = euclidean(pose_, episode_.goal) <= kStopRadius;
    } else if (steps_ >= episode_.max_steps) {
        done_ = true;  // timeout is failure even inside the radius
        success_ = false;
    }
    res.pose = pose_;
    res.done = done_;
    res.success = success_;
    res.geodesic_to_goal = geodesic_to_goal();
    res.observation = observation();
    return res;
}

EpisodeSpec make_episode(std::shared_ptr<const MazeSpec> maze, uint64_t seed, double min_geo,
                         double max_geo, int resolution, double fov_deg, int max_steps) {
    if (!maze) throw std::invalid_argument("make_episode: null maze");
    if (min_geo < 0.0 || max_geo < min_geo) throw std::invalid_argument("make_episode: bad geodesic bounds");
    const auto cells = maze->free_cells();
    if (cells.size() < 2) throw std::runtime_error("make_episode: maze has no free cell pair");
    Rng rng(derive_seed(seed, "episode"));
    constexpr int kMaxTries = 2000;
    for (int attempt = 0; attempt < kMaxTries; ++attempt) {
        const auto [sx, sy] = cells[rng.uniform_index(static_cast<int>(cells.size()))];
        const auto [gx, gy] = cells[rng.uniform_index(static_cast<int>(cells.size()))];
        if (sx == gx && sy == gy) continue;
        const auto field = bfs_field(*maze, gx, gy);
        const int hops = field.hops_at(sx, sy);
        if (hops < 0) continue;
        const double geo = hops * maze->cell_size;
        if (geo < min_geo || geo > max_geo) continue;
        EpisodeSpec ep;
        ep.maze = maze;
        ep.start = Pose{maze->center_x(sx), maze->center_y(sy),
                        kTurnDeg * static_cast<double>(rng.uniform_int(12))};
        ep.goal = Pose{maze->center_x(gx), maze->center_y(gy),
                       kTurnDeg * static_cast<double>(rng.uniform_int(12))};
        ep.shortest_length = geo;
        ep.resolution = resolution;
        ep.fov_deg = fov_deg;
        ep.max_steps = max_steps;
        ep.episode_id = "ep-" + std::to_string(seed);
        ep.goal_image = render_ego(*maze, ep.goal, resolution, fov_deg);
        return ep;
    }
    throw std::runtime_error("make_episode: no start/goal pair with geodesic in bounds after retries");
}

}  // namespace navlab::mazeworld
