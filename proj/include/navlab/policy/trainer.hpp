#pragma once

#include <filesystem>

#include "navlab/navloop/navloop.hpp"
#include "navlab/policy/ppo.hpp"

namespace navlab::policy {

struct PolicyTrainConfig {
    PpoConfig ppo;

    // task distribution
    std::vector<std::shared_ptr<const mazeworld::MazeSpec>> mazes;
    double min_geo = 1.0;
    double max_geo = 4.0;
    int resolution = 64;
    double fov_deg = 90.0;
    int episode_max_steps = 80;

    // future-frame channel during rollouts
    navloop::FutureMode future_source = navloop::FutureMode::privileged_oracle;
    int future_k = 5;
    int sampler_steps = 20;
    int history_len = 4;
    const predictor::PredictorModel* predictor_model = nullptr;

    int updates = 200;
    int val_every = 20;
    int val_episodes = 16;
    double stop_at_val_sr = 2.0;  // > 1 disables early stopping

    uint64_t seed = 1;
    std::filesystem::path out_dir;
    std::string config_hash = "unhashed";
    bool verbose = false;
};

struct PolicyTrainResult {
    double final_val_sr = 0.0;
    double final_val_spl = 0.0;
    double best_val_sr = 0.0;
    int updates_run = 0;
    std::filesystem::path checkpoint;
    std::filesystem::path log_file;
};

PolicyTrainResult train_policy(PolicyNet& net, const PolicyTrainConfig& cfg);

void save_policy_checkpoint(const std::filesystem::path& path, const PolicyNet& net, int64_t updates,
                            const std::string& config_hash);
void load_policy_checkpoint(const std::filesystem::path& path, PolicyNet& net);

// Deterministic evaluation suite over a maze set (fresh episodes per index).
std::vector<mazeworld::EpisodeSpec> make_episode_suite(
    const std::vector<std::shared_ptr<const mazeworld::MazeSpec>>& mazes, int count, uint64_t seed,
    double min_geo, double max_geo, int resolution, double fov_deg, int max_steps,
    const std::string& id_prefix);

}  // namespace navlab::policy
