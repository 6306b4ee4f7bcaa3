#include "navlab/policy/ppo.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "navlab/core/kernels.hpp"

namespace navlab::policy {

using namespace nd;

void PpoConfig::validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("ppo: gamma out of (0,1]");
    if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw std::invalid_argument("ppo: lambda out of [0,1]");
    if (!(clip > 0.0 && clip < 1.0)) throw std::invalid_argument("ppo: clip out of (0,1)");
    if (epochs_per_batch < 1 || epochs_per_batch > 16)
        throw std::invalid_argument("ppo: epochs_per_batch out of [1,16]");
    if (n_envs < 1 || rollout_length < 1) throw std::invalid_argument("ppo: empty rollout");
    if (minibatch_envs < 1 || minibatch_envs > n_envs)
        throw std::invalid_argument("ppo: minibatch_envs out of [1,n_envs]");
    if (entropy_coef < 0.0 || value_coef < 0.0 || lr <= 0.0 || grad_clip <= 0.0)
        throw std::invalid_argument("ppo: bad coefficients");
}

double compute_reward(double prev_geo, double new_geo, bool success, bool /*terminal*/) {
    if (prev_geo < 0.0 || new_geo < 0.0) throw std::invalid_argument("compute_reward: negative geodesic");
    return 2.5 * (success ? 1.0 : 0.0) + (prev_geo - new_geo) - 0.003;
}

void compute_gae(const std::vector<double>& rewards, const std::vector<double>& values,
                 const std::vector<uint8_t>& dones, double bootstrap_value, double gamma,
                 double lambda, std::vector<double>& advantages, std::vector<double>& returns) {
    const size_t n = rewards.size();
    if (values.size() != n || dones.size() != n)
        throw std::invalid_argument("compute_gae: sequence length mismatch");
    advantages.assign(n, 0.0);
    returns.assign(n, 0.0);
    double gae = 0.0;
    for (size_t i = n; i-- > 0;) {
        const double not_done = dones[i] ? 0.0 : 1.0;
        const double next_value = (i + 1 < n) ? values[i + 1] : bootstrap_value;
        const double delta = rewards[i] + gamma * next_value * not_done - values[i];
        gae = delta + gamma * lambda * not_done * gae;
        advantages[i] = gae;
        returns[i] = gae + values[i];
    }
}

void RolloutBatch::compute_advantages(double gamma, double lambda) {
    advantages.assign(static_cast<size_t>(length), std::vector<double>(static_cast<size_t>(n_envs)));
    returns.assign(static_cast<size_t>(length), std::vector<double>(static_cast<size_t>(n_envs)));
    std::vector<double> r(static_cast<size_t>(length)), v(static_cast<size_t>(length));
    std::vector<uint8_t> d(static_cast<size_t>(length));
    std::vector<double> adv, ret;
    for (int e = 0; e < n_envs; ++e) {
        for (int t = 0; t < length; ++t) {
            r[static_cast<size_t>(t)] = rewards[static_cast<size_t>(t)][static_cast<size_t>(e)];
            v[static_cast<size_t>(t)] = values[static_cast<size_t>(t)][static_cast<size_t>(e)];
            d[static_cast<size_t>(t)] = dones[static_cast<size_t>(t)][static_cast<size_t>(e)];
        }
        compute_gae(r, v, d, bootstrap_values[static_cast<size_t>(e)], gamma, lambda, adv, ret);
        for (int t = 0; t < length; ++t) {
            advantages[static_cast<size_t>(t)][static_cast<size_t>(e)] = adv[static_cast<size_t>(t)];
            returns[static_cast<size_t>(t)][static_cast<size_t>(e)] = ret[static_cast<size_t>(t)];
        }
    }
}

std::vector<int> sample_actions(const Tensor& logits, Rng& rng) {
    const int B = logits.dim(0), n = logits.dim(1);
    std::vector<double> probs(static_cast<size_t>(B) * n);
    kernels::softmax_rows(B, n, logits.data(), probs.data());
    std::vector<int> out(static_cast<size_t>(B));
    for (int i = 0; i < B; ++i) {
        const double u = rng.uniform();
        double acc = 0.0;
        int pick = n - 1;
        for (int j = 0; j < n; ++j) {
            acc += probs[static_cast<size_t>(i) * n + j];
            if (u < acc) {
                pick = j;
                break;
            }
        }
        out[static_cast<size_t>(i)] = pick;
    }
    return out;
}

std::vector<int> argmax_actions(const Tensor& logits) {
    const int B = logits.dim(0), n = logits.dim(1);
    std::vector<int> out(static_cast<size_t>(B));
    for (int i = 0; i < B; ++i) {
        const double* row = logits.data() + static_cast<int64_t>(i) * n;
        int best = 0;
        for (int j = 1; j < n; ++j)
            if (row[j] > row[best]) best = j;
        out[static_cast<size_t>(i)] = best;
    }
    return out;
}

std::vector<double> action_log_probs(const Tensor& logits, const std::vector<int>& actions) {
    Tensor logp = log_softmax_lastdim(logits);
    std::vector<double> out(actions.size());
    const int n = logits.dim(1);
    for (size_t i = 0; i < actions.size(); ++i)
        out[i] = logp.data()[static_cast<int64_t>(i) * n + actions[i]];
    return out;
}

PpoLossParts ppo_minibatch_loss(const PolicyNet& net, const RolloutBatch& batch, const PpoConfig& cfg,
                                int env_begin, int env_count, double adv_mean, double adv_std) {
    const int T = batch.length;
    const int mb = env_count, e0 = env_begin;
    if (batch.advantages.empty()) throw std::logic_error("ppo loss: advantages not computed");
    if (e0 < 0 || mb < 1 || e0 + mb > batch.n_envs) throw std::invalid_argument("ppo loss: bad env slice");

    // replay the recurrence from the stored window-start hidden state
    Tensor hidden = Tensor::zeros({mb, net.cfg.hidden_dim});
    for (int e = 0; e < mb; ++e)
        std::copy(batch.initial_hidden.data() + static_cast<int64_t>(e0 + e) * net.cfg.hidden_dim,
                  batch.initial_hidden.data() + static_cast<int64_t>(e0 + e + 1) * net.cfg.hidden_dim,
                  hidden.data() + static_cast<int64_t>(e) * net.cfg.hidden_dim);

    std::vector<Tensor> step_logps, step_values, step_entropies;
    const int R = batch.x_t.empty() ? net.cfg.resolution : batch.x_t[0].dim(2);
    for (int t = 0; t < T; ++t) {
        if (t > 0) {
            // reset the recurrent state across episode boundaries
            Tensor mask = Tensor::zeros({mb, net.cfg.hidden_dim});
            for (int e = 0; e < mb; ++e) {
                const double keep =
                    batch.dones[static_cast<size_t>(t - 1)][static_cast<size_t>(e0 + e)] ? 0.0 : 1.0;
                std::fill(mask.data() + static_cast<int64_t>(e) * net.cfg.hidden_dim,
                          mask.data() + static_cast<int64_t>(e + 1) * net.cfg.hidden_dim, keep);
            }
            hidden = mul(hidden, mask);
        }
        auto slice_envs = [&](const Tensor& full) {
            Tensor out = Tensor::zeros({mb, 3, R, R});
            const int64_t per = static_cast<int64_t>(3) * R * R;
            for (int e = 0; e < mb; ++e)
                std::copy(full.data() + (e0 + e) * per, full.data() + (e0 + e + 1) * per,
                          out.data() + e * per);
            return out;
        };
        std::vector<int> prev(static_cast<size_t>(mb));
        std::vector<int> act(static_cast<size_t>(mb));
        for (int e = 0; e < mb; ++e) {
            prev[static_cast<size_t>(e)] =
                batch.prev_actions[static_cast<size_t>(t)][static_cast<size_t>(e0 + e)];
            act[static_cast<size_t>(e)] = batch.actions[static_cast<size_t>(t)][static_cast<size_t>(e0 + e)];
        }
        PolicyOutput out = net.forward(slice_envs(batch.x_t[static_cast<size_t>(t)]),
                                       slice_envs(batch.x_fut[static_cast<size_t>(t)]),
                                       slice_envs(batch.x_g[static_cast<size_t>(t)]), prev, hidden);
        hidden = out.hidden;
        Tensor logp_all = log_softmax_lastdim(out.logits);
        step_logps.push_back(gather_cols(logp_all, act));
        step_values.push_back(out.value);
        // entropy = -sum p log p
        step_entropies.push_back(mul_scalar(sum_lastdim(mul(exp_t(logp_all), logp_all)), -1.0));
    }

    Tensor logp_new = concat(step_logps, 0);  // [T*mb], t-major env-minor
    Tensor value_new = concat(step_values, 0);
    Tensor entropy = mean_all(concat(step_entropies, 0));

    Tensor logp_old = Tensor::zeros({T * mb});
    Tensor adv = Tensor::zeros({T * mb});
    Tensor ret = Tensor::zeros({T * mb});
    for (int t = 0; t < T; ++t)
        for (int e = 0; e < mb; ++e) {
            const int64_t i = static_cast<int64_t>(t) * mb + e;
            logp_old.data()[i] = batch.log_probs[static_cast<size_t>(t)][static_cast<size_t>(e0 + e)];
            adv.data()[i] =
                (batch.advantages[static_cast<size_t>(t)][static_cast<size_t>(e0 + e)] - adv_mean) / adv_std;
            ret.data()[i] = batch.returns[static_cast<size_t>(t)][static_cast<size_t>(e0 + e)];
        }

    PpoLossParts parts;
    parts.logp_new = logp_new;
    parts.ratio = exp_t(sub(logp_new, logp_old));
    Tensor surr1 = mul(parts.ratio, adv);
    Tensor surr2 = mul(clamp(parts.ratio, 1.0 - cfg.clip, 1.0 + cfg.clip), adv);
    parts.policy_loss = mul_scalar(mean_all(minimum(surr1, surr2)), -1.0);
    parts.value_loss = mse_loss(value_new, ret);
    parts.entropy = entropy;
    parts.loss = add(add(parts.policy_loss, mul_scalar(parts.value_loss, cfg.value_coef)),
                     mul_scalar(parts.entropy, -cfg.entropy_coef));
    return parts;
}

PpoStats ppo_update(PolicyNet& net, nn::Adam& opt, const RolloutBatch& batch, const PpoConfig& cfg) {
    cfg.validate();
    PpoStats stats;
    const int T = batch.length, E = batch.n_envs;
    if (batch.advantages.empty()) throw std::logic_error("ppo_update: advantages not computed");

    // advantages normalized to mean 0, std 1 once per update
    double mean = 0.0;
    for (const auto& row : batch.advantages)
        for (double a : row) mean += a;
    const double count = static_cast<double>(T) * E;
    mean /= count;
    double var = 0.0;
    for (const auto& row : batch.advantages)
        for (double a : row) var += (a - mean) * (a - mean);
    const double std_dev = std::sqrt(var / count) + 1e-8;

    const auto params = net.parameters();
    double sum_pl = 0.0, sum_vl = 0.0, sum_ent = 0.0, sum_kl = 0.0, sum_clip = 0.0, sum_gn = 0.0;

    for (int epoch = 0; epoch < cfg.epochs_per_batch; ++epoch) {
        for (int e0 = 0; e0 < E; e0 += cfg.minibatch_envs) {
            const int mb = std::min(cfg.minibatch_envs, E - e0);
            PpoLossParts parts = ppo_minibatch_loss(net, batch, cfg, e0, mb, mean, std_dev);

            if (!std::isfinite(parts.loss.item())) {
                stats.aborted = true;
                return stats;
            }

            net.zero_grad();
            parts.loss.backward();
            sum_gn += nn::clip_grad_norm(params, cfg.grad_clip);
            opt.step();

            sum_pl += parts.policy_loss.item();
            sum_vl += parts.value_loss.item();
            sum_ent += parts.entropy.item();
            double kl = 0.0, clipped = 0.0;
            const Tensor& ratio = parts.ratio;
            for (int64_t i = 0; i < ratio.numel(); ++i) {
                kl += -std::log(ratio.data()[i]);
                if (std::fabs(ratio.data()[i] - 1.0) > cfg.clip) clipped += 1.0;
            }
            sum_kl += kl / static_cast<double>(ratio.numel());
            sum_clip += clipped / static_cast<double>(ratio.numel());
            ++stats.minibatches;
        }
    }
    if (stats.minibatches > 0) {
        stats.policy_loss = sum_pl / stats.minibatches;
        stats.value_loss = sum_vl / stats.minibatches;
        stats.entropy = sum_ent / stats.minibatches;
        stats.approx_kl = sum_kl / stats.minibatches;
        stats.clip_fraction = sum_clip / stats.minibatches;
        stats.grad_norm = sum_gn / stats.minibatches;
    }
    return stats;
}

}  // namespace navlab::policy
