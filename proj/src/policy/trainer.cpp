#include "navlab/policy/trainer.hpp"

#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "navlab/core/checkpoint.hpp"

namespace navlab::policy {

using mazeworld::Action;
using mazeworld::EpisodeSpec;
using nlohmann::json;
using namespace nd;

std::vector<EpisodeSpec> make_episode_suite(
    const std::vector<std::shared_ptr<const mazeworld::MazeSpec>>& mazes, int count, uint64_t seed,
    double min_geo, double max_geo, int resolution, double fov_deg, int max_steps,
    const std::string& id_prefix) {
    if (mazes.empty()) throw std::invalid_argument("make_episode_suite: no mazes");
    std::vector<EpisodeSpec> suite;
    suite.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
        const auto& maze = mazes[static_cast<size_t>(i) % mazes.size()];
        auto ep = mazeworld::make_episode(maze, derive_seed(seed, "suite-episode", static_cast<uint64_t>(i)),
                                          min_geo, max_geo, resolution, fov_deg, max_steps);
        ep.episode_id = id_prefix + "-" + std::to_string(i);
        suite.push_back(std::move(ep));
    }
    return suite;
}

void save_policy_checkpoint(const std::filesystem::path& path, const PolicyNet& net, int64_t updates,
                            const std::string& config_hash) {
    io::save_tensors(path, net.named_parameters());
    json side;
    side["version"] = io::kCheckpointVersion;
    side["kind"] = "policy";
    side["variant"] = variant_name(net.cfg.variant);
    side["updates"] = updates;
    side["config_hash"] = config_hash;
    side["dims"] = {{"resolution", net.cfg.resolution},
                    {"enc_base", net.cfg.enc_base},
                    {"feat_dim", net.cfg.feat_dim},
                    {"hidden_dim", net.cfg.hidden_dim},
                    {"action_embed_dim", net.cfg.action_embed_dim},
                    {"state_dim", net.cfg.state_dim}};
    io::atomic_write_file(path.string() + ".json", side.dump(2));
}

void load_policy_checkpoint(const std::filesystem::path& path, PolicyNet& net) {
    std::ifstream is(path.string() + ".json");
    if (!is) throw std::runtime_error("policy checkpoint: missing sidecar " + path.string() + ".json");
    json side;
    try {
        is >> side;
    } catch (const std::exception& e) {
        throw std::runtime_error("policy checkpoint: corrupted sidecar: " + std::string(e.what()));
    }
    if (!side.contains("version") || side["version"].get<uint32_t>() != io::kCheckpointVersion)
        throw std::runtime_error("policy checkpoint: sidecar version mismatch");
    if (side.at("kind").get<std::string>() != "policy")
        throw std::runtime_error("policy checkpoint: wrong kind");
    if (side.at("variant").get<std::string>() != variant_name(net.cfg.variant))
        throw std::runtime_error("policy checkpoint: fusion variant mismatch");
    if (side.at("dims").at("resolution").get<int>() != net.cfg.resolution ||
        side.at("dims").at("feat_dim").get<int>() != net.cfg.feat_dim ||
        side.at("dims").at("hidden_dim").get<int>() != net.cfg.hidden_dim)
        throw std::runtime_error("policy checkpoint: dimension mismatch");
    io::load_tensors_into(path, net.named_parameters());
}

namespace {

struct EnvSlot {
    std::unique_ptr<mazeworld::Env> env;
    Image x_t, x_fut;
    std::vector<Image> history;
    int prev_action = kStartAction;
    int ep_step = 0;
    uint64_t episode_seed = 0;
};

class RolloutRunner {
public:
    RolloutRunner(PolicyNet& net, const PolicyTrainConfig& cfg,
                  const navloop::FutureProvider& provider)
        : net_(net), cfg_(cfg), provider_(provider),
          action_rng_(derive_seed(cfg.seed, "actions")),
          hidden_(net.initial_hidden(cfg.ppo.n_envs)) {
        slots_.resize(static_cast<size_t>(cfg.ppo.n_envs));
        for (int e = 0; e < cfg.ppo.n_envs; ++e) reset_slot(e);
    }

    RolloutBatch collect() {
        NoGradGuard no_grad;
        const int E = cfg_.ppo.n_envs, T = cfg_.ppo.rollout_length, R = cfg_.resolution;
        RolloutBatch batch;
        batch.n_envs = E;
        batch.length = T;
        batch.initial_hidden = hidden_.detach();
        episode_returns_window_.clear();

        for (int t = 0; t < T; ++t) {
            refresh_futures();
            Tensor x_t = stack_images([](const EnvSlot& s) -> const Image& { return s.x_t; });
            Tensor x_fut = stack_images([](const EnvSlot& s) -> const Image& { return s.x_fut; });
            Tensor x_g = stack_images([](const EnvSlot& s) -> const Image& { return s.env->episode().goal_image; });
            std::vector<int> prev(static_cast<size_t>(E));
            for (int e = 0; e < E; ++e) prev[static_cast<size_t>(e)] = slots_[static_cast<size_t>(e)].prev_action;

            const PolicyOutput out = net_.forward(x_t, x_fut, x_g, prev, hidden_);
            const auto actions = sample_actions(out.logits, action_rng_);
            const auto logps = action_log_probs(out.logits, actions);
            hidden_ = out.hidden;

            batch.x_t.push_back(x_t);
            batch.x_fut.push_back(x_fut);
            batch.x_g.push_back(x_g);
            batch.prev_actions.push_back(prev);
            batch.actions.push_back(actions);
            batch.log_probs.push_back(logps);
            std::vector<double> values(static_cast<size_t>(E));
            for (int e = 0; e < E; ++e) values[static_cast<size_t>(e)] = out.value.data()[e];
            batch.values.push_back(values);

            std::vector<double> rewards(static_cast<size_t>(E));
            std::vector<uint8_t> dones(static_cast<size_t>(E));
            for (int e = 0; e < E; ++e) {
                auto& slot = slots_[static_cast<size_t>(e)];
                const double prev_geo = slot.env->geodesic_to_goal();
                const auto res = slot.env->step(static_cast<Action>(actions[static_cast<size_t>(e)]));
                rewards[static_cast<size_t>(e)] =
                    compute_reward(prev_geo, res.geodesic_to_goal, res.success, res.done);
                dones[static_cast<size_t>(e)] = res.done ? 1 : 0;
                episode_return_[static_cast<size_t>(e)] += rewards[static_cast<size_t>(e)];
                if (res.done) {
                    episode_returns_window_.push_back(episode_return_[static_cast<size_t>(e)]);
                    episode_return_[static_cast<size_t>(e)] = 0.0;
                    reset_slot(e);
                    for (int j = 0; j < net_.cfg.hidden_dim; ++j)
                        hidden_.data()[static_cast<int64_t>(e) * net_.cfg.hidden_dim + j] = 0.0;
                } else {
                    slot.x_t = res.observation;
                    slot.history.erase(slot.history.begin());
                    slot.history.push_back(slot.x_t);
                    slot.prev_action = actions[static_cast<size_t>(e)];
                    ++slot.ep_step;
                }
            }
            batch.rewards.push_back(rewards);
            batch.dones.push_back(dones);
        }

        // bootstrap values for the truncated tails
        refresh_futures();
        Tensor x_t = stack_images([](const EnvSlot& s) -> const Image& { return s.x_t; });
        Tensor x_fut = stack_images([](const EnvSlot& s) -> const Image& { return s.x_fut; });
        Tensor x_g = stack_images([](const EnvSlot& s) -> const Image& { return s.env->episode().goal_image; });
        std::vector<int> prev(static_cast<size_t>(E));
        for (int e = 0; e < E; ++e) prev[static_cast<size_t>(e)] = slots_[static_cast<size_t>(e)].prev_action;
        const PolicyOutput out = net_.forward(x_t, x_fut, x_g, prev, hidden_);
        batch.bootstrap_values.assign(static_cast<size_t>(E), 0.0);
        for (int e = 0; e < E; ++e) batch.bootstrap_values[static_cast<size_t>(e)] = out.value.data()[e];
        (void)R;
        return batch;
    }

    const std::vector<double>& finished_episode_returns() const { return episode_returns_window_; }

private:
    void reset_slot(int e) {
        auto& slot = slots_[static_cast<size_t>(e)];
        const uint64_t ep_seed = derive_seed(cfg_.seed, "train-episode", episode_counter_++);
        const auto& maze = cfg_.mazes[maze_cursor_++ % cfg_.mazes.size()];
        auto ep = mazeworld::make_episode(maze, ep_seed, cfg_.min_geo, cfg_.max_geo, cfg_.resolution,
                                          cfg_.fov_deg, cfg_.episode_max_steps);
        ep.episode_id = "train-" + std::to_string(episode_counter_);
        slot.env = std::make_unique<mazeworld::Env>(std::move(ep));
        slot.x_t = slot.env->observation();
        slot.history.assign(static_cast<size_t>(cfg_.history_len), slot.x_t);
        slot.prev_action = kStartAction;
        slot.ep_step = 0;
        slot.episode_seed = ep_seed;
    }

    void refresh_futures() {
        for (auto& slot : slots_) {
            if (slot.ep_step % cfg_.future_k != 0 && !slot.x_fut.empty()) continue;
            const navloop::RefreshContext ctx{slot.env->episode(), slot.env->pose(), slot.x_t,
                                              slot.history, slot.ep_step, slot.episode_seed};
            slot.x_fut = provider_.future(ctx);
        }
    }

    template <typename Get>
    Tensor stack_images(Get&& get) const {
        const int E = cfg_.ppo.n_envs, R = cfg_.resolution;
        Tensor out = Tensor::zeros({E, 3, R, R});
        const int64_t per = static_cast<int64_t>(3) * R * R;
        for (int e = 0; e < E; ++e) {
            const Image& img = get(slots_[static_cast<size_t>(e)]);
            Tensor t = image_to_tensor(img);
            std::copy(t.values().begin(), t.values().end(), out.values().begin() + e * per);
        }
        return out;
    }

    PolicyNet& net_;
    const PolicyTrainConfig& cfg_;
    const navloop::FutureProvider& provider_;
    Rng action_rng_;
    Tensor hidden_;
    std::vector<EnvSlot> slots_;
    std::vector<double> episode_return_ = std::vector<double>(256, 0.0);
    std::vector<double> episode_returns_window_;
    uint64_t episode_counter_ = 0;
    size_t maze_cursor_ = 0;
};

}  // namespace

PolicyTrainResult train_policy(PolicyNet& net, const PolicyTrainConfig& cfg) {
    cfg.ppo.validate();
    if (cfg.mazes.empty()) throw std::invalid_argument("train_policy: no training mazes");
    if (cfg.future_source == navloop::FutureMode::predictor && !cfg.predictor_model)
        throw std::invalid_argument("train_policy: future source 'predictor' requires a predictor model");
    if (net.cfg.resolution != cfg.resolution)
        throw std::invalid_argument("train_policy: policy/config resolution mismatch");

    std::filesystem::create_directories(cfg.out_dir);
    PolicyTrainResult result;
    result.log_file = cfg.out_dir / ("policy_train_" + std::string(variant_name(net.cfg.variant)) + ".jsonl");
    std::ofstream log(result.log_file, std::ios::trunc);

    navloop::NavLoopConfig loop_cfg;
    loop_cfg.k = cfg.future_k;
    loop_cfg.step_limit = cfg.episode_max_steps;
    loop_cfg.future_source = cfg.future_source;
    loop_cfg.sampler_steps = cfg.sampler_steps;
    loop_cfg.history_len = cfg.history_len;
    loop_cfg.seed = derive_seed(cfg.seed, "val-loop");
    const auto provider = navloop::make_future_provider(cfg.future_source, loop_cfg, cfg.predictor_model);

    const auto val_suite =
        make_episode_suite(cfg.mazes, cfg.val_episodes, derive_seed(cfg.seed, "val"), cfg.min_geo,
                           cfg.max_geo, cfg.resolution, cfg.fov_deg, cfg.episode_max_steps, "val");

    auto run_validation = [&]() {
        const auto report = navloop::evaluate(
            [&] { return std::make_unique<navloop::PolicyAgent>(net); }, *provider, val_suite, loop_cfg,
            {{"phase", "validation"}});
        return std::pair<double, double>{report.sr, report.spl};
    };

    RolloutRunner runner(net, cfg, *provider);
    nn::Adam opt(net.parameters(), {.lr = cfg.ppo.lr});
    const auto checkpoint_path = cfg.out_dir / ("policy_" + std::string(variant_name(net.cfg.variant)) + ".ckpt");
    const auto best_path = cfg.out_dir / ("policy_" + std::string(variant_name(net.cfg.variant)) + "_best.ckpt");

    for (int update = 1; update <= cfg.updates; ++update) {
        RolloutBatch batch = runner.collect();
        batch.compute_advantages(cfg.ppo.gamma, cfg.ppo.gae_lambda);
        const PpoStats stats = ppo_update(net, opt, batch, cfg.ppo);

        double mean_reward = 0.0;
        for (const auto& row : batch.rewards)
            for (double r : row) mean_reward += r;
        mean_reward /= static_cast<double>(batch.length) * batch.n_envs;

        json line;
        line["update"] = update;
        line["mean_reward"] = mean_reward;
        line["policy_loss"] = stats.policy_loss;
        line["value_loss"] = stats.value_loss;
        line["entropy"] = stats.entropy;
        line["approx_kl"] = stats.approx_kl;
        line["clip_fraction"] = stats.clip_fraction;
        if (stats.aborted) line["aborted"] = true;
        if (!runner.finished_episode_returns().empty()) {
            double er = 0.0;
            for (double v : runner.finished_episode_returns()) er += v;
            line["mean_episode_return"] = er / runner.finished_episode_returns().size();
        }

        const bool validate_now = update % cfg.val_every == 0 || update == cfg.updates;
        if (validate_now) {
            const auto [sr, spl] = run_validation();
            line["sr_val"] = sr;
            line["spl_val"] = spl;
            result.final_val_sr = sr;
            result.final_val_spl = spl;
            if (sr >= result.best_val_sr) {
                result.best_val_sr = sr;
                save_policy_checkpoint(best_path, net, update, cfg.config_hash);
            }
        }
        log << line.dump() << "\n";
        log.flush();
        if (cfg.verbose)
            std::fprintf(stderr, "[policy/%s] update %d reward %.3f%s\n", variant_name(net.cfg.variant),
                         update, mean_reward,
                         validate_now ? (" val_sr " + std::to_string(result.final_val_sr)).c_str() : "");
        result.updates_run = update;
        if (validate_now && result.final_val_sr >= cfg.stop_at_val_sr) break;
    }

    save_policy_checkpoint(checkpoint_path, net, result.updates_run, cfg.config_hash);
    result.checkpoint = checkpoint_path;
    if (!std::filesystem::exists(best_path)) save_policy_checkpoint(best_path, net, result.updates_run, cfg.config_hash);
    return result;
}

}  // namespace navlab::policy
