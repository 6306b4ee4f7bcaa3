#include "navlab/navloop/navloop.hpp"

#include <omp.h>

#include <stdexcept>

#include "navlab/core/parallel.hpp"
#include "navlab/oracle/follower.hpp"
#include "navlab/policy/ppo.hpp"

namespace navlab::navloop {

const char* future_mode_name(FutureMode m) {
    switch (m) {
        case FutureMode::predictor: return "predictor";
        case FutureMode::privileged_oracle: return "oracle";
        case FutureMode::none: return "none";
    }
    return "?";
}

FutureMode future_mode_from_name(const std::string& name) {
    if (name == "predictor") return FutureMode::predictor;
    if (name == "oracle" || name == "privileged_oracle") return FutureMode::privileged_oracle;
    if (name == "none") return FutureMode::none;
    throw std::invalid_argument("unknown future source: " + name);
}

void NavLoopConfig::validate() const {
    if (step_limit < 1) throw std::invalid_argument("navloop: step limit must be >= 1");
    if (k < 1 || k > step_limit) throw std::invalid_argument("navloop: need 1 <= k <= step limit");
    if (sampler_steps < 1) throw std::invalid_argument("navloop: sampler_steps must be >= 1");
    if (history_len < 1) throw std::invalid_argument("navloop: history_len must be >= 1");
}

Image NoneFuture::future(const RefreshContext& ctx) const { return ctx.episode.goal_image; }

Image PrivilegedOracleFuture::future(const RefreshContext& ctx) const {
    const auto& ep = ctx.episode;
    oracle::ShortestPathFollower follower(*ep.maze, ep.goal);
    Pose pose = ctx.pose;
    for (int i = 0; i < k_; ++i) {
        const Action a = follower.act(pose);
        if (a == Action::stop) return ep.goal_image;  // clamp at trajectory end
        pose = mazeworld::apply_action(*ep.maze, pose, a).pose;
    }
    return mazeworld::render_ego(*ep.maze, pose, ep.resolution, ep.fov_deg);
}

PredictorFuture::PredictorFuture(const predictor::PredictorModel& model, int sampler_steps)
    : model_(&model), sampler_steps_(sampler_steps),
      instruction_(oracle::tokenize_instruction(oracle::default_instruction())) {}

Image PredictorFuture::future(const RefreshContext& ctx) const {
    if (static_cast<int>(ctx.history.size()) != model_->cfg.history_len)
        throw std::invalid_argument("PredictorFuture: history length does not match the model");
    const uint64_t seed = derive_seed(ctx.episode_seed, "refresh", static_cast<uint64_t>(ctx.t));
    return model_->sample_future(ctx.x_t, ctx.episode.goal_image, instruction_, ctx.history,
                                 sampler_steps_, seed);
}

std::unique_ptr<FutureProvider> make_future_provider(FutureMode mode, const NavLoopConfig& cfg,
                                                     const predictor::PredictorModel* model) {
    switch (mode) {
        case FutureMode::none: return std::make_unique<NoneFuture>();
        case FutureMode::privileged_oracle: return std::make_unique<PrivilegedOracleFuture>(cfg.k);
        case FutureMode::predictor:
            if (!model) throw std::invalid_argument("future source 'predictor' requires a predictor checkpoint");
            return std::make_unique<PredictorFuture>(*model, cfg.sampler_steps);
    }
    throw std::logic_error("make_future_provider: unknown mode");
}

PolicyAgent::PolicyAgent(const policy::PolicyNet& net)
    : net_(&net), hidden_(net.initial_hidden(1)), prev_action_(policy::kStartAction) {}

void PolicyAgent::reset() {
    hidden_ = net_->initial_hidden(1);
    prev_action_ = policy::kStartAction;
}

Action PolicyAgent::act(const Image& x_t, const Image& x_fut, const Image& x_g) {
    nd::NoGradGuard no_grad;
    auto batch1 = [](const Image& img) {
        return nd::reshape(image_to_tensor(img), {1, 3, img.h, img.w});
    };
    const auto out = net_->forward(batch1(x_t), batch1(x_fut), batch1(x_g), {prev_action_}, hidden_);
    hidden_ = out.hidden;
    const int a = policy::argmax_actions(out.logits)[0];
    prev_action_ = a;
    return static_cast<Action>(a);
}

metrics::EpisodeRecord run_episode(NavAgent& agent, const FutureProvider& provider,
                                   const EpisodeSpec& episode, const NavLoopConfig& cfg,
                                   EpisodeArtifacts* artifacts) {
    cfg.validate();
    EpisodeSpec ep = episode;
    ep.max_steps = cfg.step_limit;
    mazeworld::Env env(ep);
    agent.reset();
    const uint64_t episode_seed = derive_seed(cfg.seed, ep.episode_id);

    Image x_t = env.observation();
    std::vector<Image> history(static_cast<size_t>(cfg.history_len), x_t);
    Image x_fut;
    if (artifacts) {
        artifacts->poses.push_back(env.pose());
        artifacts->observations.push_back(x_t);
    }
    int t = 0;
    while (!env.done()) {
        if (t % cfg.k == 0) {
            x_fut = provider.future({ep, env.pose(), x_t, history, t, episode_seed});
            if (artifacts) {
                artifacts->refresh_steps.push_back(t);
                artifacts->predicted_futures.push_back(x_fut);
            }
        }
        const Action a = agent.act(x_t, x_fut, ep.goal_image);
        const auto res = env.step(a);
        ++t;
        x_t = res.observation;
        history.erase(history.begin());
        history.push_back(x_t);
        if (artifacts) {
            artifacts->poses.push_back(res.pose);
            artifacts->actions.push_back(a);
            artifacts->observations.push_back(x_t);
        }
    }

    metrics::EpisodeRecord rec;
    rec.episode_id = ep.episode_id;
    rec.success = env.success();
    rec.steps = env.steps();
    rec.path_length = env.path_length();
    rec.shortest_length = ep.shortest_length;
    rec.spl = metrics::spl(rec.success, rec.shortest_length, rec.path_length);
    return rec;
}

metrics::EvalReport evaluate(const AgentFactory& make_agent, const FutureProvider& provider,
                             const std::vector<EpisodeSpec>& suite, const NavLoopConfig& cfg,
                             nlohmann::json config_snapshot) {
    if (suite.empty()) throw std::invalid_argument("evaluate: empty suite");
    cfg.validate();
    std::vector<metrics::EpisodeRecord> records(suite.size());
#pragma omp parallel if (kernels::parallel_ok())
    {
        auto agent = make_agent();
#pragma omp for schedule(dynamic)
        for (size_t i = 0; i < suite.size(); ++i)
            records[i] = run_episode(*agent, provider, suite[i], cfg);
    }
    return metrics::aggregate(std::move(records), std::move(config_snapshot));
}

}  // namespace navlab::navloop
