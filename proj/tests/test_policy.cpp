#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "gradcheck.hpp"
#include "maze_fixtures.hpp"
#include "navlab/policy/ppo.hpp"
#include "navlab/policy/trainer.hpp"

using namespace navlab;
using namespace navlab::policy;
using nd::Tensor;

namespace {

PolicyConfig micro_cfg(FusionVariant v = FusionVariant::hybrid) {
    PolicyConfig c;
    c.variant = v;
    c.resolution = 16;
    c.enc_base = 2;
    c.feat_dim = 8;
    c.hidden_dim = 8;
    c.action_embed_dim = 4;
    c.state_dim = 12;
    return c;
}

Tensor random_images(int batch, int resolution, uint64_t seed) {
    Rng rng(seed);
    return nd::rand_uniform({batch, 3, resolution, resolution}, rng, 0.0, 1.0);
}

// Synthetic rollout with plausible stored statistics.
RolloutBatch fabricate_batch(const PolicyNet& net, int T, int E, uint64_t seed,
                             const std::vector<int>& done_steps = {}) {
    Rng rng(seed);
    RolloutBatch b;
    b.n_envs = E;
    b.length = T;
    b.initial_hidden = nd::randn({E, net.cfg.hidden_dim}, rng, 0.3);
    for (int t = 0; t < T; ++t) {
        b.x_t.push_back(random_images(E, net.cfg.resolution, rng.next_u64()));
        b.x_fut.push_back(random_images(E, net.cfg.resolution, rng.next_u64()));
        b.x_g.push_back(random_images(E, net.cfg.resolution, rng.next_u64()));
        std::vector<int> prev(E), act(E);
        std::vector<double> logp(E), val(E), rew(E);
        std::vector<uint8_t> done(E, 0);
        for (int e = 0; e < E; ++e) {
            prev[e] = rng.uniform_index(kStartAction + 1);
            act[e] = rng.uniform_index(mazeworld::kNumActions);
            logp[e] = -1.3 + rng.uniform(-0.05, 0.05);
            val[e] = rng.uniform(-0.5, 0.5);
            rew[e] = rng.uniform(-0.1, 0.4);
        }
        for (int ds : done_steps)
            if (ds == t) std::fill(done.begin(), done.end(), 1);
        b.prev_actions.push_back(prev);
        b.actions.push_back(act);
        b.log_probs.push_back(logp);
        b.values.push_back(val);
        b.rewards.push_back(rew);
        b.dones.push_back(done);
    }
    b.bootstrap_values.assign(E, 0.1);
    return b;
}

// stored log-probs := the current policy's own, so every ratio is exactly 1
void align_logp_old(const PolicyNet& net, RolloutBatch& b, const PpoConfig& cfg) {
    nd::NoGradGuard ng;
    const auto parts = ppo_minibatch_loss(net, b, cfg, 0, b.n_envs, 0.0, 1.0);
    for (int t = 0; t < b.length; ++t)
        for (int e = 0; e < b.n_envs; ++e)
            b.log_probs[t][e] = parts.logp_new.data()[static_cast<int64_t>(t) * b.n_envs + e];
}

}  // namespace

TEST_CASE("fusion variants: channel counts, exact hybrid equality, projections") {
    PolicyNet hybrid(micro_cfg(FusionVariant::hybrid), 1);
    PolicyNet early(micro_cfg(FusionVariant::early), 2);
    PolicyNet late(micro_cfg(FusionVariant::late), 3);

    const int R = 16;
    Tensor x_t = random_images(2, R, 10), x_f = random_images(2, R, 11), x_g = random_images(2, R, 12);

    // hybrid: exactly the two dedicated encoders, concatenated
    Tensor f_p = hybrid.encode_future_pair(x_t, x_f);
    Tensor f_o = hybrid.encode_goal_pair(x_t, x_g);
    REQUIRE(f_p.shape() == nd::Shape{2, 8});
    Tensor fused = hybrid.fusion_features(x_t, x_f, x_g);
    REQUIRE(fused.shape() == nd::Shape{2, 16});
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 8; ++j) {
            CHECK(fused.data()[i * 16 + j] == f_p.data()[i * 8 + j]);
            CHECK(fused.data()[i * 16 + 8 + j] == f_o.data()[i * 8 + j]);
        }

    // early consumes 9 channels; late shares one 3-channel encoder
    CHECK(early.mono_encoder->in_channels == 9);
    CHECK(late.mono_encoder->in_channels == 3);
    CHECK(late.mono_encoder->out_dim * 3 == late.variant_proj->in_features);
    CHECK(early.fusion_features(x_t, x_f, x_g).shape() == nd::Shape{2, 16});
    CHECK(late.fusion_features(x_t, x_f, x_g).shape() == nd::Shape{2, 16});

    // the two hybrid encoders do not share weights
    CHECK(hybrid.future_encoder->parameters()[0].values() !=
          hybrid.goal_encoder->parameters()[0].values());

    CHECK_THROWS_AS(variant_from_name("middle"), std::invalid_argument);
}

TEST_CASE("pair encoder: pooled head gives the same width at 64 and 128") {
    Rng rng(5);
    PairEncoder enc(6, 4, 32, rng);
    CHECK(enc.forward(nd::rand_uniform({1, 6, 64, 64}, rng, 0.0, 1.0)).shape() == nd::Shape{1, 32});
    CHECK(enc.forward(nd::rand_uniform({1, 6, 128, 128}, rng, 0.0, 1.0)).shape() == nd::Shape{1, 32});
    CHECK_THROWS_AS(enc.forward(nd::rand_uniform({1, 3, 64, 64}, rng, 0.0, 1.0)), std::invalid_argument);
}

TEST_CASE("pair order carries meaning: swapping (x_t, x_fut) changes f_p") {
    PolicyNet net(micro_cfg(), 4);
    Tensor a = random_images(1, 16, 20), b = random_images(1, 16, 21);
    CHECK(net.encode_future_pair(a, b).values() != net.encode_future_pair(b, a).values());
    // goal branch reacts to the goal image
    Tensor g2 = random_images(1, 16, 22);
    CHECK(net.encode_goal_pair(a, b).values() != net.encode_goal_pair(a, g2).values());
}

TEST_CASE("parameter budgets: early/late within 10% of hybrid") {
    for (auto make_cfg : {+[] {
             PolicyConfig c;
             c.resolution = 64;
             return c;
         },
                          +[] {
                              PolicyConfig c;
                              c.resolution = 32;
                              c.enc_base = 10;
                              c.feat_dim = 192;
                              c.hidden_dim = 192;
                              c.state_dim = 192;
                              return c;
                          }}) {
        PolicyConfig base = make_cfg();
        base.variant = FusionVariant::hybrid;
        PolicyNet hybrid(base, 1);
        const auto total = [](const PolicyNet& n) { return static_cast<double>(n.param_count()); };
        for (FusionVariant v : {FusionVariant::early, FusionVariant::late}) {
            PolicyConfig c = make_cfg();
            c.variant = v;
            PolicyNet net(c, 1);
            const double rel = std::fabs(total(net) - total(hybrid)) / total(hybrid);
            INFO(variant_name(v) << " params " << net.param_count() << " vs hybrid "
                                 << hybrid.param_count());
            CHECK(rel <= 0.10);
        }
    }
}

TEST_CASE("policy forward: distribution validity and logit shift invariance") {
    PolicyNet net(micro_cfg(), 6);
    Tensor x_t = random_images(3, 16, 30), x_f = random_images(3, 16, 31), x_g = random_images(3, 16, 32);
    auto out = net.forward(x_t, x_f, x_g, {0, 2, kStartAction}, net.initial_hidden(3));
    REQUIRE(out.logits.shape() == nd::Shape{3, 4});
    Tensor probs = nd::softmax_lastdim(out.logits);
    for (int i = 0; i < 3; ++i) {
        double s = 0.0;
        for (int j = 0; j < 4; ++j) {
            const double p = probs.data()[i * 4 + j];
            CHECK(p >= 0.0);
            s += p;
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }
    // adding a constant to every logit changes neither softmax nor argmax
    Tensor shifted = nd::add_scalar(out.logits, 3.7);
    Tensor probs2 = nd::softmax_lastdim(shifted);
    for (int64_t i = 0; i < probs.numel(); ++i)
        CHECK(probs.data()[i] == doctest::Approx(probs2.data()[i]).epsilon(1e-12));
    CHECK(argmax_actions(out.logits) == argmax_actions(shifted));
    Rng r1(7), r2(7);
    CHECK(sample_actions(out.logits, r1) == sample_actions(shifted, r2));

    CHECK_THROWS_AS(net.forward(x_t, x_f, x_g, {0, 1}, net.initial_hidden(3)), std::invalid_argument);
    CHECK_THROWS_AS(net.forward(x_t, x_f, x_g, {0, 1, 9}, net.initial_hidden(3)), std::invalid_argument);
}

TEST_CASE("zero recurrent weights: hidden stays zero, output reads only current inputs") {
    PolicyNet net(micro_cfg(), 8);
    for (auto& p : net.gru.parameters()) std::fill(p.values().begin(), p.values().end(), 0.0);
    Tensor xa = random_images(1, 16, 40), xb = random_images(1, 16, 41), xc = random_images(1, 16, 42);
    Tensor fut = random_images(1, 16, 43), goal = random_images(1, 16, 44);

    auto s1a = net.forward(xa, fut, goal, {kStartAction}, net.initial_hidden(1));
    auto s1b = net.forward(xb, fut, goal, {kStartAction}, net.initial_hidden(1));
    for (double v : s1a.hidden.values()) CHECK(v == 0.0);
    for (double v : s1b.hidden.values()) CHECK(v == 0.0);
    // histories differ, current input identical -> identical output
    auto s2a = net.forward(xc, fut, goal, {0}, s1a.hidden);
    auto s2b = net.forward(xc, fut, goal, {0}, s1b.hidden);
    CHECK(s2a.logits.values() == s2b.logits.values());
    CHECK(s2a.value.values() == s2b.value.values());
}

TEST_CASE("compute_reward: slack, progress, success cases") {
    CHECK(compute_reward(2.0, 2.0, false, false) == doctest::Approx(-0.003));
    CHECK(compute_reward(2.0, 1.75, false, false) == doctest::Approx(0.247));
    CHECK(compute_reward(1.0, 0.5, true, true) == doctest::Approx(2.997));
    CHECK_THROWS_AS(compute_reward(-1.0, 0.0, false, false), std::invalid_argument);
}

TEST_CASE("compute_gae: zeros, terminal base case, direct-sum oracle") {
    std::vector<double> adv, ret;
    compute_gae({0, 0, 0}, {0, 0, 0}, {0, 0, 0}, 0.0, 0.99, 0.95, adv, ret);
    for (double a : adv) CHECK(a == 0.0);

    // single terminal step: A0 = r0 - V0
    compute_gae({1.5}, {0.4}, {1}, 99.0, 0.99, 0.95, adv, ret);
    CHECK(adv[0] == doctest::Approx(1.5 - 0.4));
    CHECK(ret[0] == doctest::Approx(1.5));

    // lambda=1, gamma=1, no dones: A_t = sum_{i>=t} r_i + bootstrap - V_t
    Rng rng(9);
    std::vector<double> r(10), v(10);
    for (int i = 0; i < 10; ++i) {
        r[i] = rng.uniform(-1.0, 1.0);
        v[i] = rng.uniform(-1.0, 1.0);
    }
    const double bootstrap = 0.37;
    compute_gae(r, v, std::vector<uint8_t>(10, 0), bootstrap, 1.0, 1.0, adv, ret);
    for (int t = 0; t < 10; ++t) {
        double direct = bootstrap;
        for (int i = t; i < 10; ++i) direct += r[i];
        CHECK(adv[t] == doctest::Approx(direct - v[t]).epsilon(1e-12));
    }

    CHECK_THROWS_AS(compute_gae({1.0}, {1.0, 2.0}, {0}, 0.0, 0.99, 0.95, adv, ret),
                    std::invalid_argument);
}

TEST_CASE("ppo: at ratio 1 the surrogate gradient equals the vanilla policy gradient") {
    PolicyNet net(micro_cfg(), 10);
    PpoConfig cfg;
    cfg.n_envs = 2;
    cfg.rollout_length = 3;
    cfg.minibatch_envs = 2;
    cfg.entropy_coef = 0.0;
    cfg.value_coef = 0.0;
    auto batch = fabricate_batch(net, 3, 2, 50);
    batch.compute_advantages(cfg.gamma, cfg.gae_lambda);
    align_logp_old(net, batch, cfg);

    // surrogate gradient
    net.zero_grad();
    auto parts = ppo_minibatch_loss(net, batch, cfg, 0, 2, 0.0, 1.0);
    for (int64_t i = 0; i < parts.ratio.numel(); ++i)
        CHECK(parts.ratio.data()[i] == doctest::Approx(1.0).epsilon(1e-12));
    parts.loss.backward();
    std::vector<std::vector<double>> surrogate_grads;
    for (auto& p : net.parameters()) surrogate_grads.push_back(p.grad());

    // vanilla policy gradient of the same batch: -mean(logp * A)
    net.zero_grad();
    auto parts2 = ppo_minibatch_loss(net, batch, cfg, 0, 2, 0.0, 1.0);
    Tensor adv = Tensor::zeros({3 * 2});
    for (int t = 0; t < 3; ++t)
        for (int e = 0; e < 2; ++e)
            adv.data()[t * 2 + e] = batch.advantages[t][e];
    Tensor pg_loss = nd::mul_scalar(nd::mean_all(nd::mul(parts2.logp_new, adv)), -1.0);
    pg_loss.backward();
    auto params = net.parameters();
    for (size_t i = 0; i < params.size(); ++i) {
        const auto& got = params[i].grad();
        for (size_t j = 0; j < got.size(); ++j)
            CHECK(got[j] == doctest::Approx(surrogate_grads[i][j]).epsilon(1e-9));
    }
}

TEST_CASE("ppo: clipped branch contributes zero policy gradient") {
    PolicyNet net(micro_cfg(), 11);
    PpoConfig cfg;
    cfg.n_envs = 1;
    cfg.rollout_length = 1;
    cfg.minibatch_envs = 1;
    cfg.entropy_coef = 0.0;
    cfg.value_coef = 0.0;
    cfg.clip = 0.2;
    auto batch = fabricate_batch(net, 1, 1, 60);
    batch.compute_advantages(cfg.gamma, cfg.gae_lambda);
    align_logp_old(net, batch, cfg);
    // force ratio = e^0.5 > 1.2 and a positive advantage
    batch.log_probs[0][0] -= 0.5;
    batch.advantages[0][0] = 1.0;

    net.zero_grad();
    auto parts = ppo_minibatch_loss(net, batch, cfg, 0, 1, 0.0, 1.0);
    CHECK(parts.ratio.data()[0] > 1.0 + cfg.clip);
    parts.policy_loss.backward();
    double grad_abs = 0.0;
    for (auto& p : net.parameters())
        for (double g : p.grad()) grad_abs += std::fabs(g);
    CHECK(grad_abs == 0.0);
}

TEST_CASE("ppo objective: analytic gradients match finite differences at 1e-4") {
    PolicyNet net(micro_cfg(), 12);
    PpoConfig cfg;
    cfg.n_envs = 2;
    cfg.rollout_length = 2;
    cfg.minibatch_envs = 2;
    auto batch = fabricate_batch(net, 2, 2, 70, /*done_steps=*/{0});
    batch.compute_advantages(cfg.gamma, cfg.gae_lambda);
    auto params = net.parameters();
    const double err = navlab::testing::max_grad_rel_err(
        params, [&] { return ppo_minibatch_loss(net, batch, cfg, 0, 2, 0.05, 1.1).loss; }, 1e-5, 1e-6);
    CHECK(err < 1e-4);
}

TEST_CASE("ppo_update: non-finite loss aborts and leaves parameters untouched") {
    PolicyNet net(micro_cfg(), 13);
    PpoConfig cfg;
    cfg.n_envs = 2;
    cfg.rollout_length = 2;
    cfg.minibatch_envs = 2;
    auto batch = fabricate_batch(net, 2, 2, 80);
    batch.compute_advantages(cfg.gamma, cfg.gae_lambda);
    batch.log_probs[0][0] = std::numeric_limits<double>::quiet_NaN();

    std::vector<std::vector<double>> before;
    for (auto& p : net.parameters()) before.push_back(p.values());
    nn::Adam opt(net.parameters(), {.lr = 1e-3});
    const auto stats = ppo_update(net, opt, batch, cfg);
    CHECK(stats.aborted);
    auto params = net.parameters();
    for (size_t i = 0; i < params.size(); ++i) CHECK(params[i].values() == before[i]);
}

TEST_CASE("recurrent replay: done mask equals independent per-episode forwards") {
    PolicyNet net(micro_cfg(), 14);
    PpoConfig cfg;
    cfg.n_envs = 1;
    cfg.rollout_length = 5;
    cfg.minibatch_envs = 1;
    auto batch = fabricate_batch(net, 5, 1, 90, /*done_steps=*/{1});
    // episode boundary after t=1: replay must reset hidden before t=2
    std::fill(batch.initial_hidden.values().begin(), batch.initial_hidden.values().end(), 0.0);
    batch.compute_advantages(cfg.gamma, cfg.gae_lambda);

    nd::NoGradGuard ng;
    const auto parts = ppo_minibatch_loss(net, batch, cfg, 0, 1, 0.0, 1.0);

    // manual segment replays from zero hidden
    auto forward_segment = [&](int t0, int t1, std::vector<double>& out_logps) {
        Tensor hidden = net.initial_hidden(1);
        for (int t = t0; t < t1; ++t) {
            auto out = net.forward(batch.x_t[t], batch.x_fut[t], batch.x_g[t],
                                   {batch.prev_actions[t][0]}, hidden);
            hidden = out.hidden;
            Tensor lp = nd::log_softmax_lastdim(out.logits);
            out_logps.push_back(lp.data()[batch.actions[t][0]]);
        }
    };
    std::vector<double> manual;
    forward_segment(0, 2, manual);
    forward_segment(2, 5, manual);
    REQUIRE(manual.size() == 5);
    for (int t = 0; t < 5; ++t)
        CHECK(parts.logp_new.data()[t] == doctest::Approx(manual[t]).epsilon(1e-12));
}

TEST_CASE("train_policy: two runs with the same seed produce identical checkpoints") {
    using namespace navlab::mazeworld;
    auto maze = std::make_shared<const MazeSpec>(navlab::testing::corridor_maze(8));

    auto run_once = [&](const std::filesystem::path& dir) {
        PolicyConfig pc = micro_cfg();
        PolicyNet net(pc, 77);
        PolicyTrainConfig cfg;
        cfg.ppo.n_envs = 2;
        cfg.ppo.rollout_length = 6;
        cfg.ppo.minibatch_envs = 2;
        cfg.ppo.epochs_per_batch = 2;
        cfg.mazes = {maze};
        cfg.min_geo = 0.5;
        cfg.max_geo = 3.0;
        cfg.resolution = 16;
        cfg.episode_max_steps = 12;
        cfg.future_k = 3;
        cfg.history_len = 2;
        cfg.updates = 2;
        cfg.val_every = 2;
        cfg.val_episodes = 2;
        cfg.seed = 5;
        cfg.out_dir = dir;
        const auto result = train_policy(net, cfg);
        CHECK(result.updates_run == 2);
        CHECK(std::filesystem::exists(result.log_file));
        return result.checkpoint;
    };
    const auto base = std::filesystem::temp_directory_path() / "navlab_policy_det";
    std::filesystem::remove_all(base);
    const auto ck1 = run_once(base / "run1");
    const auto ck2 = run_once(base / "run2");

    std::ifstream f1(ck1, std::ios::binary), f2(ck2, std::ios::binary);
    std::stringstream s1, s2;
    s1 << f1.rdbuf();
    s2 << f2.rdbuf();
    CHECK(s1.str() == s2.str());
    std::filesystem::remove_all(base);
}

TEST_CASE("policy checkpoint: save/load round trip and variant mismatch refusal") {
    PolicyNet net(micro_cfg(), 15);
    const auto dir = std::filesystem::temp_directory_path() / "navlab_policy_ck";
    std::filesystem::create_directories(dir);
    save_policy_checkpoint(dir / "p.ckpt", net, 3, "hash");

    PolicyNet same(micro_cfg(), 999);
    load_policy_checkpoint(dir / "p.ckpt", same);
    Tensor x_t = random_images(1, 16, 100), x_f = random_images(1, 16, 101), x_g = random_images(1, 16, 102);
    const auto a = net.forward(x_t, x_f, x_g, {kStartAction}, net.initial_hidden(1));
    const auto b = same.forward(x_t, x_f, x_g, {kStartAction}, same.initial_hidden(1));
    CHECK(a.logits.values() == b.logits.values());

    PolicyNet other(micro_cfg(FusionVariant::early), 1);
    CHECK_THROWS(load_policy_checkpoint(dir / "p.ckpt", other));
    std::filesystem::remove_all(dir);
}
