#include <doctest.h>

#include <atomic>
#include <memory>

#include "maze_fixtures.hpp"
#include "navlab/navloop/navloop.hpp"
#include "navlab/oracle/follower.hpp"
#include "navlab/policy/trainer.hpp"

using namespace navlab;
using namespace navlab::navloop;
using namespace navlab::mazeworld;
using navlab::testing::corridor_maze;

namespace {

// Executes a fixed action tape, then STOP forever.
class ScriptedAgent final : public NavAgent {
public:
    explicit ScriptedAgent(std::vector<Action> tape) : tape_(std::move(tape)) {}
    void reset() override { cursor_ = 0; }
    Action act(const Image&, const Image&, const Image&) override {
        if (cursor_ < tape_.size()) return tape_[cursor_++];
        return Action::stop;
    }

private:
    std::vector<Action> tape_;
    size_t cursor_ = 0;
};

class CountingProvider final : public FutureProvider {
public:
    explicit CountingProvider(const FutureProvider& inner) : inner_(&inner) {}
    Image future(const RefreshContext& ctx) const override {
        ++calls;
        return inner_->future(ctx);
    }
    mutable std::atomic<int> calls{0};

private:
    const FutureProvider* inner_;
};

EpisodeSpec corridor_episode(const std::shared_ptr<const MazeSpec>& maze, double start_x_m,
                             double goal_x_m, const std::string& id, int max_steps = 60) {
    EpisodeSpec ep;
    ep.maze = maze;
    ep.resolution = 16;
    ep.fov_deg = 90.0;
    ep.max_steps = max_steps;
    ep.episode_id = id;
    const double cy = maze->center_y(1);
    ep.start = Pose{start_x_m, cy, 0.0};
    ep.goal = Pose{goal_x_m, cy, 0.0};
    ep.goal_image = render_ego(*maze, ep.goal, ep.resolution, ep.fov_deg);
    ep.shortest_length = geodesic_distance(*maze, ep.start, ep.goal);
    return ep;
}

}  // namespace

TEST_CASE("run_episode: predictor call count is ceil(steps/k) for k in {1,5,10}") {
    auto maze = std::make_shared<const MazeSpec>(corridor_maze(16));
    const auto ep = corridor_episode(maze, 0.75, 7.75, "sched");
    NoneFuture none;

    for (int k : {1, 5, 10}) {
        for (int n_moves : {3, 11, 12, 19}) {
            // n_moves forwards then STOP: steps executed = n_moves + 1
            std::vector<Action> tape(static_cast<size_t>(n_moves), Action::move_forward);
            ScriptedAgent agent(tape);
            CountingProvider counter(none);
            NavLoopConfig cfg;
            cfg.k = k;
            cfg.step_limit = 50;
            cfg.history_len = 2;
            EpisodeArtifacts art;
            const auto rec = run_episode(agent, counter, ep, cfg, &art);
            const int steps = rec.steps;
            CHECK(steps == n_moves + 1);
            const int expected = (steps + k - 1) / k;
            CHECK(counter.calls.load() == expected);
            CHECK(static_cast<int>(art.refresh_steps.size()) == expected);
        }
    }
}

TEST_CASE("run_episode: STOP at t=3 ends immediately with one predictor call (k=5)") {
    auto maze = std::make_shared<const MazeSpec>(corridor_maze(16));
    const auto ep = corridor_episode(maze, 0.75, 7.75, "early-stop");
    NoneFuture none;
    CountingProvider counter(none);
    ScriptedAgent agent({Action::move_forward, Action::move_forward, Action::move_forward});
    NavLoopConfig cfg;
    cfg.k = 5;
    cfg.step_limit = 50;
    const auto rec = run_episode(agent, counter, ep, cfg);
    CHECK(rec.steps == 4);
    CHECK(counter.calls.load() == 1);
    CHECK_FALSE(rec.success);  // stopped far from the goal
}

TEST_CASE("run_episode: reaching the step limit without STOP is failure") {
    auto maze = std::make_shared<const MazeSpec>(corridor_maze(16));
    // start right next to the goal: proximity without STOP must not succeed
    const auto ep = corridor_episode(maze, 0.75, 1.25, "timeout");
    std::vector<Action> tape(100, Action::turn_left);
    ScriptedAgent agent(tape);
    NoneFuture none;
    NavLoopConfig cfg;
    cfg.k = 5;
    cfg.step_limit = 12;
    const auto rec = run_episode(agent, none, ep, cfg);
    CHECK(rec.steps == 12);
    CHECK_FALSE(rec.success);
    CHECK(rec.spl == 0.0);
}

TEST_CASE("future providers: none yields the goal image, oracle clamps to the goal rendering") {
    auto maze = std::make_shared<const MazeSpec>(corridor_maze(16));
    const auto ep = corridor_episode(maze, 0.75, 5.75, "providers");
    const Image x_t = render_ego(*maze, ep.start, ep.resolution, ep.fov_deg);
    std::vector<Image> history(4, x_t);
    const RefreshContext ctx{ep, ep.start, x_t, history, 0, 42};

    NoneFuture none;
    CHECK(none.future(ctx) == ep.goal_image);

    // far from the goal: the frame at the pose the follower reaches k steps ahead
    PrivilegedOracleFuture oracle(4);
    const Image far = oracle.future(ctx);
    Pose expect = ep.start;
    oracle::ShortestPathFollower follower(*maze, ep.goal);
    for (int i = 0; i < 4; ++i) {
        const Action a = follower.act(expect);
        REQUIRE(a != Action::stop);
        expect = apply_action(*maze, expect, a).pose;
    }
    CHECK(far == render_ego(*maze, expect, ep.resolution, ep.fov_deg));

    // within k steps of the goal: exactly the goal-pose rendering
    const Pose near{ep.goal.x - 0.75, ep.goal.y, 0.0};
    const Image near_obs = render_ego(*maze, near, ep.resolution, ep.fov_deg);
    const RefreshContext near_ctx{ep, near, near_obs, history, 10, 42};
    CHECK(oracle.future(near_ctx) == ep.goal_image);
}

TEST_CASE("evaluate: perfect corridor run gives sr=1 spl=1; all-failure suite gives zeros") {
    auto maze = std::make_shared<const MazeSpec>(corridor_maze(16));
    // aligned straight run: 6 forwards then stop lands exactly at the
    // geodesic-optimal cutoff, so path_length <= shortest
    std::vector<EpisodeSpec> suite = {corridor_episode(maze, 0.75, 3.25, "perfect-0")};
    NoneFuture none;
    NavLoopConfig cfg;
    cfg.k = 5;
    cfg.step_limit = 30;

    auto perfect = evaluate([] { return std::make_unique<ScriptedAgent>(std::vector<Action>(6, Action::move_forward)); },
                            none, suite, cfg, {{"suite", "perfect"}});
    CHECK(perfect.sr == 1.0);
    CHECK(perfect.spl == 1.0);

    auto failing = evaluate([] { return std::make_unique<ScriptedAgent>(std::vector<Action>{}); },
                            none, suite, cfg, {{"suite", "failing"}});
    CHECK(failing.sr == 0.0);
    CHECK(failing.spl == 0.0);
}

TEST_CASE("evaluate: byte-identical reports across runs and orderings") {
    auto maze = std::make_shared<const MazeSpec>(generate_maze(51, 11, 11));
    auto suite = policy::make_episode_suite({maze}, 6, 123, 1.0, 3.0, 16, 90.0, 40, "det");
    NavLoopConfig cfg;
    cfg.k = 3;
    cfg.step_limit = 40;
    cfg.seed = 7;
    PrivilegedOracleFuture oracle(3);

    auto factory = [] {
        return std::make_unique<ScriptedAgent>(std::vector<Action>{
            Action::move_forward, Action::turn_left, Action::move_forward, Action::move_forward,
            Action::turn_right, Action::move_forward});
    };
    const auto r1 = evaluate(factory, oracle, suite, cfg, {{"run", "suite"}});
    const auto r2 = evaluate(factory, oracle, suite, cfg, {{"run", "suite"}});
    CHECK(metrics::report_to_json(r1).dump() == metrics::report_to_json(r2).dump());

    // per-episode outcomes do not depend on evaluation order
    auto reversed = suite;
    std::reverse(reversed.begin(), reversed.end());
    const auto r3 = evaluate(factory, oracle, reversed, cfg, {{"run", "suite"}});
    CHECK(r3.sr == r1.sr);
    CHECK(r3.spl == doctest::Approx(r1.spl).epsilon(1e-12));
    for (const auto& rec : r1.records) {
        bool found = false;
        for (const auto& rec3 : r3.records)
            if (rec3.episode_id == rec.episode_id) {
                found = true;
                CHECK(rec3.steps == rec.steps);
                CHECK(rec3.spl == rec.spl);
            }
        CHECK(found);
    }
}

TEST_CASE("policy agent drives the loop and keeps its recurrent state across refreshes") {
    auto maze = std::make_shared<const MazeSpec>(corridor_maze(12));
    const auto ep = corridor_episode(maze, 0.75, 4.75, "policy-agent", 20);
    policy::PolicyConfig pc;
    pc.resolution = 16;
    pc.enc_base = 2;
    pc.feat_dim = 8;
    pc.hidden_dim = 8;
    pc.state_dim = 12;
    pc.action_embed_dim = 4;
    policy::PolicyNet net(pc, 3);
    PolicyAgent agent(net);
    NoneFuture none;
    NavLoopConfig cfg;
    cfg.k = 4;
    cfg.step_limit = 20;
    const auto rec = run_episode(agent, none, ep, cfg);
    CHECK(rec.steps <= 20);
    CHECK(rec.shortest_length == ep.shortest_length);
}
