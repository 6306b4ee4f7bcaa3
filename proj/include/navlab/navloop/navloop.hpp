#pragma once

#include <functional>
#include <memory>

#include <json.hpp>

#include "navlab/metrics/metrics.hpp"
#include "navlab/policy/policy.hpp"
#include "navlab/predictor/model.hpp"

namespace navlab::navloop {

using mazeworld::Action;
using mazeworld::EpisodeSpec;
using mazeworld::Pose;

enum class FutureMode { predictor, privileged_oracle, none };
const char* future_mode_name(FutureMode m);
FutureMode future_mode_from_name(const std::string& name);

struct NavLoopConfig {
    int k = 5;            // future-frame refresh interval
    int step_limit = 200;
    FutureMode future_source = FutureMode::privileged_oracle;
    int sampler_steps = 20;
    int history_len = 4;
    uint64_t seed = 0;

    void validate() const;
};

struct RefreshContext {
    const EpisodeSpec& episode;
    const Pose& pose;
    const Image& x_t;
    const std::vector<Image>& history;  // oldest first, length = history_len
    int t = 0;
    uint64_t episode_seed = 0;
};

// Source of the future frame x*. Implementations are read-only and safe to
// share across evaluation workers.
class FutureProvider {
public:
    virtual ~FutureProvider() = default;
    virtual Image future(const RefreshContext& ctx) const = 0;
};

// x* := goal image (ablation)
class NoneFuture final : public FutureProvider {
public:
    Image future(const RefreshContext& ctx) const override;
};

// Renders the frame at the pose the shortest-path follower reaches k steps
// ahead; once the follower stops within the horizon, the goal-pose rendering.
class PrivilegedOracleFuture final : public FutureProvider {
public:
    explicit PrivilegedOracleFuture(int k) : k_(k) {}
    Image future(const RefreshContext& ctx) const override;

private:
    int k_;
};

// x* sampled from the trained diffusion predictor.
class PredictorFuture final : public FutureProvider {
public:
    PredictorFuture(const predictor::PredictorModel& model, int sampler_steps);
    Image future(const RefreshContext& ctx) const override;

private:
    const predictor::PredictorModel* model_;
    int sampler_steps_;
    std::vector<int> instruction_;
};

std::unique_ptr<FutureProvider> make_future_provider(FutureMode mode, const NavLoopConfig& cfg,
                                                     const predictor::PredictorModel* model);

class NavAgent {
public:
    virtual ~NavAgent() = default;
    virtual void reset() = 0;
    virtual Action act(const Image& x_t, const Image& x_fut, const Image& x_g) = 0;
};

// Greedy (argmax) wrapper around a trained policy network.
class PolicyAgent final : public NavAgent {
public:
    explicit PolicyAgent(const policy::PolicyNet& net);
    void reset() override;
    Action act(const Image& x_t, const Image& x_fut, const Image& x_g) override;

private:
    const policy::PolicyNet* net_;
    nd::Tensor hidden_;
    int prev_action_;
};

// Optional per-episode dump for plotting and debugging.
struct EpisodeArtifacts {
    std::vector<Pose> poses;                 // length steps+1
    std::vector<Action> actions;
    std::vector<int> refresh_steps;          // t values where the predictor ran
    std::vector<Image> predicted_futures;    // one per refresh
    std::vector<Image> observations;         // per pose
};

metrics::EpisodeRecord run_episode(NavAgent& agent, const FutureProvider& provider,
                                   const EpisodeSpec& episode, const NavLoopConfig& cfg,
                                   EpisodeArtifacts* artifacts = nullptr);

using AgentFactory = std::function<std::unique_ptr<NavAgent>()>;

// Runs the whole suite (parallel across episodes; per-episode seeds derive
// from the episode id, so the report does not depend on evaluation order).
metrics::EvalReport evaluate(const AgentFactory& make_agent, const FutureProvider& provider,
                             const std::vector<EpisodeSpec>& suite, const NavLoopConfig& cfg,
                             nlohmann::json config_snapshot);

}  // namespace navlab::navloop
