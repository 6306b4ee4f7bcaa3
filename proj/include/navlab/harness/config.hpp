#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "navlab/policy/trainer.hpp"
#include "navlab/predictor/trainer.hpp"

namespace navlab::harness {

// Sectioned run configuration. File format: "[section]" headers with
// "key = value" lines and '#' comments; CLI flags override file values. The
// resolved config (and its hash) is echoed into every run directory.
struct RunConfig {
    uint64_t seed = 1;

    struct Sim {
        int maze_width = 15;
        int maze_height = 15;
        int resolution = 64;
        double fov_deg = 90.0;
        double cell_size = 0.5;
        int max_steps = 200;
    } sim;

    struct Data {
        int k = 5;
        int h = 4;
        int train_mazes = 10;
        int val_mazes = 2;
        int test_mazes = 3;
        int episodes_per_maze = 40;
        double min_geo = 1.0;
        double max_geo = 6.0;
    } data;

    struct Predictor {
        int ctx_dim = 256;
        int ctx_tokens = 8;
        int ctx_base = 16;
        int ctx_layers = 2;
        int cond_dim = 256;
        int n_queries = 8;
        int hist_base = 12;
        int unet_base = 32;
        int unet_levels = 3;
        int step_embed_dim = 64;
        int schedule_steps = 1000;
        double beta_start = 1e-4;
        double beta_end = 0.02;
        int stage1_steps = 2000;
        int stage2_steps = 4000;
        int batch_size = 8;
        double lr = 2e-4;
        int heldout_every = 500;
    } predictor;

    struct Policy {
        std::string variant = "hybrid";
        std::string future_source = "oracle";
        int enc_base = 24;
        int feat_dim = 512;
        int hidden_dim = 512;
        int state_dim = 512;
        int action_embed_dim = 32;
        int updates = 200;
        int val_every = 20;
        int val_episodes = 16;
        int episode_max_steps = 80;
        double min_geo = 1.0;
        double max_geo = 4.0;
        double stop_at_val_sr = 2.0;
        // ppo
        double gamma = 0.99;
        double gae_lambda = 0.95;
        double clip = 0.2;
        int epochs_per_batch = 4;
        int n_envs = 8;
        int rollout_length = 128;
        double entropy_coef = 0.01;
        double value_coef = 0.5;
        double lr = 2.5e-4;
        int minibatch_envs = 4;
    } policy;

    struct Eval {
        int k = 5;
        int step_limit = 200;
        int sampler_steps = 20;
        int episodes = 50;
        uint64_t seed = 0;
        std::string future_source = "predictor";
        int dump_episodes = 6;
        double min_geo = 1.0;
        double max_geo = 6.0;
    } eval;

    static RunConfig from_file(const std::filesystem::path& path);
    static RunConfig from_text(const std::string& text);

    // "section.key=value" (also accepts top-level "seed=...")
    void apply_override(const std::string& assignment);

    void validate() const;

    // canonical text form; identical configs hash identically
    std::string canonical() const;
    std::string hash() const;  // fnv1a64 hex of canonical()
    nlohmann::json to_json() const;

    // derived builders
    predictor::PredictorConfig predictor_config() const;
    policy::PolicyConfig policy_config() const;
    policy::PpoConfig ppo_config() const;
};

}  // namespace navlab::harness
