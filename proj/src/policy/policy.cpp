#include "navlab/policy/policy.hpp"

#include <cmath>
#include <stdexcept>

namespace navlab::policy {

using namespace nd;

const char* variant_name(FusionVariant v) {
    switch (v) {
        case FusionVariant::hybrid: return "hybrid";
        case FusionVariant::early: return "early";
        case FusionVariant::late: return "late";
    }
    return "?";
}

FusionVariant variant_from_name(const std::string& name) {
    if (name == "hybrid") return FusionVariant::hybrid;
    if (name == "early") return FusionVariant::early;
    if (name == "late") return FusionVariant::late;
    throw std::invalid_argument("unknown fusion variant: " + name);
}

void PolicyConfig::validate() const {
    if (resolution < 16) throw std::invalid_argument("policy: resolution must be >= 16");
    if (enc_base < 2 || feat_dim < 8 || hidden_dim < 8 || state_dim < 8)
        throw std::invalid_argument("policy: dimensions too small");
    if (action_embed_dim < 1) throw std::invalid_argument("policy: action_embed_dim must be >= 1");
}

namespace {

}  // namespace

PairEncoder::PairEncoder(int in_ch, int base, int out_dim_, Rng& rng)
    : in_channels(in_ch), out_dim(out_dim_) {
    int cin = in_ch;
    for (int stage = 0; stage < 4; ++stage) {
        const int cout = base * (stage + 1);
        down_convs_.push_back(std::make_unique<nn::Conv2d>(cin, cout, 3, 2, 1, rng));
        down_norms_.push_back(std::make_unique<nn::GroupNorm>(nn::norm_groups(8, cout), cout));
        res_convs_.push_back(std::make_unique<nn::Conv2d>(cout, cout, 3, 1, 1, rng));
        res_norms_.push_back(std::make_unique<nn::GroupNorm>(nn::norm_groups(8, cout), cout));
        register_module("down" + std::to_string(stage), *down_convs_.back());
        register_module("down_norm" + std::to_string(stage), *down_norms_.back());
        register_module("res" + std::to_string(stage), *res_convs_.back());
        register_module("res_norm" + std::to_string(stage), *res_norms_.back());
        cin = cout;
    }
    head_ = std::make_unique<nn::Linear>(cin, out_dim_, rng);
    register_module("head", *head_);
}

Tensor PairEncoder::forward(const Tensor& x) const {
    if (x.ndim() != 4 || x.dim(1) != in_channels)
        throw std::invalid_argument("PairEncoder: expected [B," + std::to_string(in_channels) +
                                    ",R,R] input");
    Tensor h = x;
    for (size_t i = 0; i < down_convs_.size(); ++i) {
        h = silu(down_norms_[i]->forward(down_convs_[i]->forward(h)));
        h = add(h, res_convs_[i]->forward(silu(res_norms_[i]->forward(h))));
    }
    return head_->forward(spatial_mean(h));
}

namespace {

// Width search so early/late variants land near the hybrid parameter budget.
int calibrate_base(int in_ch, int head_dim, int64_t target, int hint) {
    int best = std::max(2, hint);
    int64_t best_err = std::numeric_limits<int64_t>::max();
    for (int b = std::max(2, hint / 2); b <= std::max(4, hint * 3); ++b) {
        Rng probe(0);
        PairEncoder enc(in_ch, b, head_dim, probe);
        const int64_t err = std::llabs(enc.param_count() - target);
        if (err < best_err) {
            best_err = err;
            best = b;
        }
    }
    return best;
}

}  // namespace

PolicyNet::PolicyNet(PolicyConfig cfg_arg, uint64_t init_seed)
    : cfg((cfg_arg.validate(), std::move(cfg_arg))),
      init_rng_(derive_seed(init_seed, "policy-init")),
      action_embed(kStartAction + 1, cfg.action_embed_dim, init_rng_),
      gru(2 * cfg.feat_dim + cfg.action_embed_dim, cfg.hidden_dim, init_rng_),
      state_proj(2 * cfg.feat_dim + cfg.action_embed_dim + cfg.hidden_dim, cfg.state_dim, init_rng_),
      actor(cfg.state_dim, mazeworld::kNumActions, init_rng_),
      critic(cfg.state_dim, 1, init_rng_) {
    register_module("action_embed", action_embed);
    register_module("gru", gru);
    register_module("state_proj", state_proj);
    register_module("actor", actor);
    register_module("critic", critic);

    // hybrid budget is the reference the ablation variants are matched to
    int64_t hybrid_encoder_params;
    {
        Rng probe(0);
        PairEncoder ref(6, cfg.enc_base, cfg.feat_dim, probe);
        hybrid_encoder_params = 2 * ref.param_count();
    }
    switch (cfg.variant) {
        case FusionVariant::hybrid:
            future_encoder = std::make_unique<PairEncoder>(6, cfg.enc_base, cfg.feat_dim, init_rng_);
            goal_encoder = std::make_unique<PairEncoder>(6, cfg.enc_base, cfg.feat_dim, init_rng_);
            register_module("future_encoder", *future_encoder);
            register_module("goal_encoder", *goal_encoder);
            break;
        case FusionVariant::early: {
            const int64_t proj_params =
                static_cast<int64_t>(cfg.feat_dim) * 2 * cfg.feat_dim + 2 * cfg.feat_dim;
            const int base = calibrate_base(9, cfg.feat_dim, hybrid_encoder_params - proj_params,
                                            cfg.enc_base);
            mono_encoder = std::make_unique<PairEncoder>(9, base, cfg.feat_dim, init_rng_);
            variant_proj = std::make_unique<nn::Linear>(cfg.feat_dim, 2 * cfg.feat_dim, init_rng_);
            register_module("mono_encoder", *mono_encoder);
            register_module("variant_proj", *variant_proj);
            break;
        }
        case FusionVariant::late: {
            const int per_image_dim = std::max(8, cfg.feat_dim / 3);
            const int64_t proj_params =
                static_cast<int64_t>(3 * per_image_dim) * 2 * cfg.feat_dim + 2 * cfg.feat_dim;
            const int base = calibrate_base(3, per_image_dim, hybrid_encoder_params - proj_params,
                                            cfg.enc_base);
            mono_encoder = std::make_unique<PairEncoder>(3, base, per_image_dim, init_rng_);
            variant_proj =
                std::make_unique<nn::Linear>(3 * per_image_dim, 2 * cfg.feat_dim, init_rng_);
            register_module("mono_encoder", *mono_encoder);
            register_module("variant_proj", *variant_proj);
            break;
        }
    }
}

Tensor PolicyNet::encode_future_pair(const Tensor& x_t, const Tensor& x_fut) const {
    if (!same_shape(x_t.shape(), x_fut.shape()))
        throw std::invalid_argument("encode_future_pair: resolution mismatch");
    if (!future_encoder) throw std::logic_error("encode_future_pair: not a hybrid policy");
    return future_encoder->forward(concat({x_t, x_fut}, 1));
}

Tensor PolicyNet::encode_goal_pair(const Tensor& x_t, const Tensor& x_g) const {
    if (!same_shape(x_t.shape(), x_g.shape()))
        throw std::invalid_argument("encode_goal_pair: resolution mismatch");
    if (!goal_encoder) throw std::logic_error("encode_goal_pair: not a hybrid policy");
    return goal_encoder->forward(concat({x_t, x_g}, 1));
}

Tensor PolicyNet::fusion_features(const Tensor& x_t, const Tensor& x_fut, const Tensor& x_g) const {
    if (!same_shape(x_t.shape(), x_fut.shape()) || !same_shape(x_t.shape(), x_g.shape()))
        throw std::invalid_argument("fusion_forward: resolution mismatch");
    switch (cfg.variant) {
        case FusionVariant::hybrid:
            return concat({encode_future_pair(x_t, x_fut), encode_goal_pair(x_t, x_g)}, 1);
        case FusionVariant::early:
            return variant_proj->forward(mono_encoder->forward(concat({x_t, x_fut, x_g}, 1)));
        case FusionVariant::late: {
            Tensor f_t = mono_encoder->forward(x_t);
            Tensor f_f = mono_encoder->forward(x_fut);
            Tensor f_g = mono_encoder->forward(x_g);
            return variant_proj->forward(concat({f_t, f_f, f_g}, 1));
        }
    }
    throw std::logic_error("fusion_forward: unknown variant");
}

PolicyOutput PolicyNet::forward_features(const Tensor& features, const std::vector<int>& prev_actions,
                                         const Tensor& hidden) const {
    const int B = features.dim(0);
    if (static_cast<int>(prev_actions.size()) != B)
        throw std::invalid_argument("policy_forward: prev_action batch mismatch");
    for (int a : prev_actions)
        if (a < 0 || a > kStartAction) throw std::invalid_argument("policy_forward: bad prev_action");
    Tensor a_emb = action_embed.forward(prev_actions);
    Tensor input = concat({features, a_emb}, 1);
    PolicyOutput out;
    out.hidden = gru.forward(input, hidden);
    out.state_embedding = tanh_t(state_proj.forward(concat({input, out.hidden}, 1)));
    out.logits = actor.forward(out.state_embedding);
    out.value = reshape(critic.forward(out.state_embedding), {B});
    return out;
}

PolicyOutput PolicyNet::forward(const Tensor& x_t, const Tensor& x_fut, const Tensor& x_g,
                                const std::vector<int>& prev_actions, const Tensor& hidden) const {
    return forward_features(fusion_features(x_t, x_fut, x_g), prev_actions, hidden);
}

}  // namespace navlab::policy
