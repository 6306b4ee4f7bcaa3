#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "navlab/oracle/follower.hpp"

namespace navlab::oracle {

// On-disk layout:
//   dataset/<split>/<episode_id>/frames/%05d.png   (trajectory frames, then the goal frame)
//   dataset/<split>/<episode_id>/manifest.json
//   dataset/index.json
struct EpisodeManifest {
    std::string episode_id;
    std::string maze_id;
    std::vector<Pose> poses;
    std::vector<Action> actions;
    int k = 5;
    int h = 4;
    std::string instruction;
    int goal_frame_index = 0;
    double shortest_length = 0.0;
    int resolution = 64;
    double fov_deg = 90.0;
};

struct LoadedEpisode {
    EpisodeManifest manifest;
    std::vector<Image> frames;  // trajectory frames followed by the goal frame
    int n_trajectory_frames() const { return manifest.goal_frame_index; }
    const Image& goal_image() const { return frames.back(); }
};

struct IndexEntry {
    std::string split;
    std::string episode_id;
    int n_frames = 0;
    int n_tuples = 0;
};

void write_episode(const std::filesystem::path& dataset_dir, const std::string& split,
                   const Trajectory& traj, const EpisodeSpec& episode, const std::string& maze_id,
                   int k, int h, const std::string& instruction);

LoadedEpisode read_episode(const std::filesystem::path& episode_dir);

void write_index(const std::filesystem::path& dataset_dir, const std::vector<IndexEntry>& entries);
std::vector<IndexEntry> read_index(const std::filesystem::path& dataset_dir);

std::vector<LoadedEpisode> load_split(const std::filesystem::path& dataset_dir, const std::string& split);

}  // namespace navlab::oracle
