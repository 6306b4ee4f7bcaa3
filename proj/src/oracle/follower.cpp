#include "navlab/oracle/follower.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace navlab::oracle {

using mazeworld::kStopRadius;
using mazeworld::kTurnDeg;
using mazeworld::signed_angle_diff;
using mazeworld::wrap_degrees;

namespace {

// Half a forward step: offsets below this are treated as centered, which
// leaves enough lateral clearance in a one-cell corridor.
constexpr double kCenteredTol = mazeworld::kForwardStep / 2.0 + 1e-9;

// Heading toward the BFS-descending neighbor, corrected for intra-cell
// position: when the agent sits off the perpendicular center line it first
// advances/returns to the cell center so the turn does not clip the corner.
double desired_heading(const MazeSpec& maze, const Pose& pose, const Pose& goal,
                       const DistanceField& field) {
    const int cx = maze.cell_x(pose.x), cy = maze.cell_y(pose.y);
    const int here = field.hops_at(cx, cy);
    if (here < 0) throw std::runtime_error("follower: goal unreachable from pose");
    if (here == 0) {
        // inside the goal cell; face the goal point
        const double raw = std::atan2(goal.y - pose.y, goal.x - pose.x) * 180.0 / 3.14159265358979323846;
        return wrap_degrees(std::round(raw / kTurnDeg) * kTurnDeg);
    }
    struct Dir {
        int dx, dy;
        double deg;
    };
    constexpr Dir dirs[4] = {{1, 0, 0.0}, {0, 1, 90.0}, {-1, 0, 180.0}, {0, -1, 270.0}};
    int best = -1;
    int best_hops = here;
    for (int d = 0; d < 4; ++d) {
        const int h = field.hops_at(cx + dirs[d].dx, cy + dirs[d].dy);
        if (h >= 0 && h < best_hops) {
            best_hops = h;
            best = d;
        }
    }
    if (best < 0) throw std::runtime_error("follower: no descending neighbor");  // cannot happen on BFS fields
    const bool horizontal = dirs[best].dx != 0;
    const double perp_offset =
        horizontal ? pose.y - maze.center_y(cy) : pose.x - maze.center_x(cx);
    if (std::fabs(perp_offset) > kCenteredTol) {
        if (horizontal)  // recenter along y first
            return perp_offset < 0.0 ? 90.0 : 270.0;
        return perp_offset < 0.0 ? 0.0 : 180.0;
    }
    return dirs[best].deg;
}

}  // namespace

Action follower_action(const MazeSpec& maze, const Pose& pose, const Pose& goal,
                       const DistanceField& field) {
    if (!maze.pose_in_free_cell(pose) || !maze.pose_in_free_cell(goal))
        throw std::invalid_argument("follower_action: pose in occupied space");
    if (mazeworld::euclidean(pose, goal) <= kStopRadius) return Action::stop;
    const double desired = desired_heading(maze, pose, goal, field);
    const double delta = signed_angle_diff(desired, pose.heading);
    if (std::fabs(delta) < 1e-9) return Action::move_forward;
    return delta > 0.0 ? Action::turn_left : Action::turn_right;
}

Action follower_action(const MazeSpec& maze, const Pose& pose, const Pose& goal) {
    const auto field = bfs_field(maze, maze.cell_x(goal.x), maze.cell_y(goal.y));
    return follower_action(maze, pose, goal, field);
}

ShortestPathFollower::ShortestPathFollower(const MazeSpec& maze, const Pose& goal)
    : maze_(&maze), goal_(goal),
      field_(bfs_field(maze, maze.cell_x(goal.x), maze.cell_y(goal.y))) {}

Action ShortestPathFollower::act(const Pose& pose) const {
    return follower_action(*maze_, pose, goal_, field_);
}

Trajectory collect_trajectory(const EpisodeSpec& episode) {
    mazeworld::Env env(episode);
    ShortestPathFollower follower(*episode.maze, episode.goal);
    Trajectory traj;
    traj.episode_id = episode.episode_id;
    traj.poses.push_back(env.pose());
    traj.frames.push_back(env.observation());
    while (!env.done()) {
        const Action a = follower.act(env.pose());
        const auto res = env.step(a);
        traj.actions.push_back(a);
        traj.poses.push_back(res.pose);
        traj.frames.push_back(res.observation);
        if (res.done && a != Action::stop)
            throw std::runtime_error("collect_trajectory: step budget exhausted before STOP (" +
                                     episode.episode_id + ")");
    }
    return traj;
}

std::vector<TrainingTuple> build_tuples(const Trajectory& traj, int k, int h, const Image& goal_image,
                                        const std::vector<int>& instruction) {
    if (k < 1 || h < 1) throw std::invalid_argument("build_tuples: k and h must be >= 1");
    if (traj.frames.empty()) throw std::invalid_argument("build_tuples: empty trajectory");
    const int last = static_cast<int>(traj.frames.size()) - 1;
    std::vector<TrainingTuple> out;
    out.reserve(traj.frames.size());
    for (int t = 0; t <= last; ++t) {
        TrainingTuple tup;
        tup.x_t = traj.frames[t];
        tup.x_tk = traj.frames[std::min(t + k, last)];
        tup.x_h.reserve(h);
        for (int i = t - h + 1; i <= t; ++i) tup.x_h.push_back(traj.frames[std::max(0, i)]);
        tup.y = instruction;
        tup.x_g = goal_image;
        out.push_back(std::move(tup));
    }
    return out;
}

const std::vector<std::string>& instruction_vocab() {
    static const std::vector<std::string> vocab = {
        "<pad>", "navigate", "to", "the", "place", "shown", "in", "goal", "image",
    };
    return vocab;
}

std::vector<int> tokenize_instruction(const std::string& text) {
    const auto& vocab = instruction_vocab();
    std::vector<int> ids;
    std::istringstream is(text);
    std::string word;
    while (is >> word) {
        int id = -1;
        for (size_t i = 0; i < vocab.size(); ++i)
            if (vocab[i] == word) {
                id = static_cast<int>(i);
                break;
            }
        if (id < 0) throw std::invalid_argument("tokenize_instruction: unknown word '" + word + "'");
        ids.push_back(id);
    }
    return ids;
}

std::string default_instruction() { return "navigate to the place shown in the goal image"; }

}  // namespace navlab::oracle
