#pragma once

#include <filesystem>

#include "navlab/harness/config.hpp"
#include "navlab/navloop/navloop.hpp"

namespace navlab::harness {

// runs/<run_id>/{config.resolved, dataset/, checkpoints/, eval/, plots/}
// The run root defaults to ./runs and can be overridden with NAVLAB_RUN_ROOT.
struct RunPaths {
    std::filesystem::path root;

    static RunPaths make(const std::string& run_id);

    std::filesystem::path config_resolved() const { return root / "config.resolved"; }
    std::filesystem::path dataset() const { return root / "dataset"; }
    std::filesystem::path mazes(const std::string& split) const { return dataset() / "mazes" / split; }
    std::filesystem::path checkpoints() const { return root / "checkpoints"; }
    std::filesystem::path eval() const { return root / "eval"; }
    std::filesystem::path plots() const { return root / "plots"; }
};

void write_resolved_config(const RunPaths& paths, const RunConfig& cfg);

using MazePtr = std::shared_ptr<const mazeworld::MazeSpec>;

std::vector<MazePtr> make_maze_set(const RunConfig& cfg, const std::string& split, int count);
void save_maze_set(const std::filesystem::path& dir, const std::vector<MazePtr>& mazes);
std::vector<MazePtr> load_maze_set(const std::filesystem::path& dir);

struct CollectSummary {
    int episodes = 0;
    int frames = 0;
    int tuples = 0;
};

// Expert trajectories for one split, written in the dataset layout.
CollectSummary collect_split(const RunConfig& cfg, const RunPaths& paths, const std::string& split,
                             const std::vector<MazePtr>& mazes, int episodes_per_maze);

// Per-episode evaluation dump consumed by the plot stage.
void dump_episode_artifacts(const std::filesystem::path& dir, const mazeworld::EpisodeSpec& episode,
                            const navloop::EpisodeArtifacts& artifacts,
                            const metrics::EpisodeRecord& record, int future_k);

// Top-down occupancy view with the executed path, start/end markers and the
// success radius circle around the goal.
Image draw_trajectory_overlay(const mazeworld::MazeSpec& maze, const std::vector<mazeworld::Pose>& path,
                              const mazeworld::Pose& goal, int px_per_cell = 24);

// Two-row grid: predicted future frames on top, the frames actually observed
// one refresh horizon later below.
Image draw_frame_strip(const std::vector<Image>& predicted, const std::vector<Image>& actual);

// pixel mapping used by the overlay (exposed for tests)
std::pair<int, int> world_to_pixel(const mazeworld::MazeSpec& maze, double x, double y, int px_per_cell);

// Renders plots for every dumped episode under eval_dir; skips episodes with
// missing artifacts (warning on stderr). Returns the number of episodes
// plotted and writes plots/manifest.json.
int emit_plots(const std::filesystem::path& eval_dir, const std::filesystem::path& plots_dir);

}  // namespace navlab::harness
