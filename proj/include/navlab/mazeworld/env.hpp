#pragma once

#include <memory>
#include <optional>
#include <string>

#include "navlab/core/image.hpp"
#include "navlab/mazeworld/maze.hpp"
#include "navlab/mazeworld/render.hpp"

namespace navlab::mazeworld {

enum class Action { move_forward = 0, turn_left = 1, turn_right = 2, stop = 3 };
inline constexpr int kNumActions = 4;

const char* action_name(Action a);
Action action_from_name(const std::string& name);

struct StepResult {
    Pose pose;
    Image observation;
    bool collided = false;
    bool done = false;
    bool success = false;
    double geodesic_to_goal = 0.0;
};

struct EpisodeSpec {
    std::shared_ptr<const MazeSpec> maze;
    Pose start;
    Pose goal;
    Image goal_image;
    double shortest_length = 0.0;  // grid geodesic between start and goal
    int max_steps = 200;
    std::string episode_id;
    int resolution = 64;
    double fov_deg = 90.0;
};

// True when a point body with kClearance radius at (x,y) overlaps any
// occupied cell.
bool position_blocked(const MazeSpec& maze, double x, double y);

struct MoveOutcome {
    Pose pose;
    bool collided = false;
};

// Pure action kinematics: turns rotate by the 30-degree unit, MOVE_FORWARD
// translates kForwardStep along the heading unless blocked (then the pose is
// unchanged and collided is set). STOP leaves the pose untouched.
MoveOutcome apply_action(const MazeSpec& maze, const Pose& pose, Action action);

double euclidean(const Pose& a, const Pose& b);

// Episode-scoped mutable state. Instances share nothing; run as many
// concurrently as you like, but do not step a single instance from two
// threads.
class Env {
public:
    explicit Env(EpisodeSpec episode);

    StepResult step(Action action);  // throws std::logic_error once done

    const EpisodeSpec& episode() const { return episode_; }
    const Pose& pose() const { return pose_; }
    int steps() const { return steps_; }
    bool done() const { return done_; }
    bool success() const { return success_; }
    double path_length() const { return path_length_; }
    const DistanceField& goal_field() const { return goal_field_; }
    double geodesic_to_goal() const;
    Image observation() const;

private:
    EpisodeSpec episode_;
    DistanceField goal_field_;
    Pose pose_;
    int steps_ = 0;
    bool done_ = false;
    bool success_ = false;
    double path_length_ = 0.0;
};

// Samples a start/goal pair with geodesic in [min_geo, max_geo], both poses
// at free-cell centers with quantized headings. Throws std::runtime_error
// after bounded retries when the maze admits no such pair.
EpisodeSpec make_episode(std::shared_ptr<const MazeSpec> maze, uint64_t seed, double min_geo,
                         double max_geo, int resolution = 64, double fov_deg = 90.0,
                         int max_steps = 200);

}  // namespace navlab::mazeworld
