#pragma once

#include <optional>
#include <vector>

#include "navlab/core/optim.hpp"
#include "navlab/policy/policy.hpp"

namespace navlab::policy {

struct PpoConfig {
    double gamma = 0.99;
    double gae_lambda = 0.95;
    double clip = 0.2;
    int epochs_per_batch = 4;
    int n_envs = 8;
    int rollout_length = 128;
    double entropy_coef = 0.01;
    double value_coef = 0.5;
    double lr = 2.5e-4;
    double grad_clip = 0.5;
    int minibatch_envs = 4;

    void validate() const;
};

// r = 2.5 * [success] + (prev_geo - new_geo) - 0.003
double compute_reward(double prev_geo, double new_geo, bool success, bool terminal);

// GAE over one environment's sequence. dones mark terminal steps; the
// bootstrap value continues truncated episodes.
void compute_gae(const std::vector<double>& rewards, const std::vector<double>& values,
                 const std::vector<uint8_t>& dones, double bootstrap_value, double gamma,
                 double lambda, std::vector<double>& advantages, std::vector<double>& returns);

// Time-major on-policy rollout storage. hidden-state snapshots are kept for
// the start of the window; recurrence is replayed from there during updates,
// resetting across done flags.
struct RolloutBatch {
    int n_envs = 0;
    int length = 0;
    std::vector<Tensor> x_t, x_fut, x_g;          // per step: [n_envs,3,R,R]
    std::vector<std::vector<int>> prev_actions;   // [t][env]
    std::vector<std::vector<int>> actions;
    std::vector<std::vector<double>> log_probs;   // behavior-policy log pi(a)
    std::vector<std::vector<double>> values;
    std::vector<std::vector<double>> rewards;
    std::vector<std::vector<uint8_t>> dones;
    Tensor initial_hidden;                        // [n_envs, hidden]
    std::vector<double> bootstrap_values;         // value of the state after the window
    std::vector<std::vector<double>> advantages, returns;

    void compute_advantages(double gamma, double lambda);
};

struct PpoStats {
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double entropy = 0.0;
    double approx_kl = 0.0;
    double clip_fraction = 0.0;
    double grad_norm = 0.0;
    int minibatches = 0;
    bool aborted = false;  // non-finite loss encountered; update skipped
};

struct PpoLossParts {
    Tensor loss;         // scalar objective (minimized)
    Tensor policy_loss;  // -E[min(ratio*A, clip(ratio)*A)]
    Tensor value_loss;   // E[(V - returns)^2]
    Tensor entropy;      // mean categorical entropy
    Tensor ratio;        // [T*mb] importance ratios
    Tensor logp_new;     // [T*mb]
};

// Clipped-surrogate objective for one contiguous env slice, replaying the
// recurrence from the stored window-start hidden state. Advantages are
// normalized with the supplied batch statistics.
PpoLossParts ppo_minibatch_loss(const PolicyNet& net, const RolloutBatch& batch, const PpoConfig& cfg,
                                int env_begin, int env_count, double adv_mean, double adv_std);

PpoStats ppo_update(PolicyNet& net, nn::Adam& opt, const RolloutBatch& batch, const PpoConfig& cfg);

// categorical helpers over a [B,4] logits tensor
std::vector<int> sample_actions(const Tensor& logits, Rng& rng);
std::vector<int> argmax_actions(const Tensor& logits);
std::vector<double> action_log_probs(const Tensor& logits, const std::vector<int>& actions);

}  // namespace navlab::policy
