#pragma once

#include <vector>

#include "navlab/mazeworld/env.hpp"

namespace navlab::oracle {

using mazeworld::Action;
using mazeworld::DistanceField;
using mazeworld::EpisodeSpec;
using mazeworld::MazeSpec;
using mazeworld::Pose;

// Privileged expert: STOP when within the stop radius, otherwise greedily
// descend the goal's BFS field, aligning heading (tie-break MOVE_FORWARD,
// then TURN_LEFT, then TURN_RIGHT). Deterministic. Throws when the goal is
// unreachable from the pose.
Action follower_action(const MazeSpec& maze, const Pose& pose, const Pose& goal);
Action follower_action(const MazeSpec& maze, const Pose& pose, const Pose& goal,
                       const DistanceField& field);

// Caches the BFS field for repeated queries against one goal.
class ShortestPathFollower {
public:
    ShortestPathFollower(const MazeSpec& maze, const Pose& goal);
    Action act(const Pose& pose) const;
    const DistanceField& field() const { return field_; }

private:
    const MazeSpec* maze_;
    Pose goal_;
    DistanceField field_;
};

struct Trajectory {
    std::string episode_id;
    std::vector<Pose> poses;       // length = |actions| + 1
    std::vector<Action> actions;   // final action is STOP
    std::vector<Image> frames;     // one frame per pose
};

// Rolls the follower to termination, recording a frame per step. Throws when
// the step budget runs out before STOP.
Trajectory collect_trajectory(const EpisodeSpec& episode);

using Image = navlab::Image;

struct TrainingTuple {
    Image x_t;
    Image x_tk;                // frame t+k, clamped to the final frame
    std::vector<Image> x_h;    // h history frames, oldest first, front-padded
    std::vector<int> y;        // instruction token ids
    Image x_g;
};

// One tuple per frame index; sampling randomness is the training loader's
// job, which keeps datasets reproducible.
std::vector<TrainingTuple> build_tuples(const Trajectory& traj, int k, int h, const Image& goal_image,
                                        const std::vector<int>& instruction);

// Fixed instruction template & vocabulary (ImageNav has no per-episode text).
const std::vector<std::string>& instruction_vocab();
std::vector<int> tokenize_instruction(const std::string& text);
std::string default_instruction();

}  // namespace navlab::oracle
