#pragma once

#include <memory>
#include <string>

#include "navlab/core/image.hpp"
#include "navlab/core/nn.hpp"
#include "navlab/mazeworld/env.hpp"

namespace navlab::policy {

using nd::Tensor;

enum class FusionVariant { hybrid, early, late };

const char* variant_name(FusionVariant v);
FusionVariant variant_from_name(const std::string& name);

struct PolicyConfig {
    FusionVariant variant = FusionVariant::hybrid;
    int resolution = 64;
    int enc_base = 24;          // per-encoder base width for the hybrid branches
    int feat_dim = 512;         // per-branch feature width
    int hidden_dim = 512;       // recurrent state
    int action_embed_dim = 32;
    int state_dim = 512;        // actor/critic state embedding

    void validate() const;
};

// Residual conv feature extractor: 4 stride-2 stages (widths base..4*base),
// pooled head to out_dim. Works for any input resolution >= 16.
class PairEncoder : public nn::Module {
public:
    PairEncoder(int in_ch, int base, int out_dim, Rng& rng);
    Tensor forward(const Tensor& x) const;
    int in_channels = 0;
    int out_dim = 0;

private:
    std::vector<std::unique_ptr<nn::Conv2d>> down_convs_, res_convs_;
    std::vector<std::unique_ptr<nn::GroupNorm>> down_norms_, res_norms_;
    std::unique_ptr<nn::Linear> head_;
};

struct PolicyOutput {
    Tensor logits;           // [B, 4]
    Tensor value;            // [B]
    Tensor state_embedding;  // [B, state_dim]
    Tensor hidden;           // [B, hidden_dim]
};

// Index of the distinguished START token in the previous-action embedding.
inline constexpr int kStartAction = mazeworld::kNumActions;

// Recurrent actor-critic over fused image features. The three fusion
// variants share the recurrent core and are normalized to the same policy
// input width by a linear projection; early/late encoder widths are
// calibrated so total parameter counts stay within 10% of hybrid.
class PolicyNet : public nn::Module {
public:
    PolicyNet(PolicyConfig cfg, uint64_t init_seed);

    // channel-wise (x_t ++ x_fut) through the trainable future-pair encoder
    Tensor encode_future_pair(const Tensor& x_t, const Tensor& x_fut) const;
    // channel-wise (x_t ++ x_g) through the goal-pair encoder
    Tensor encode_goal_pair(const Tensor& x_t, const Tensor& x_g) const;

    // variant-dispatched fused features, [B, 2*feat_dim]
    Tensor fusion_features(const Tensor& x_t, const Tensor& x_fut, const Tensor& x_g) const;

    PolicyOutput forward(const Tensor& x_t, const Tensor& x_fut, const Tensor& x_g,
                         const std::vector<int>& prev_actions, const Tensor& hidden) const;
    PolicyOutput forward_features(const Tensor& features, const std::vector<int>& prev_actions,
                                  const Tensor& hidden) const;

    Tensor initial_hidden(int batch) const { return Tensor::zeros({batch, cfg.hidden_dim}); }

    PolicyConfig cfg;

private:
    Rng init_rng_;

public:
    std::unique_ptr<PairEncoder> future_encoder, goal_encoder;  // hybrid
    std::unique_ptr<PairEncoder> mono_encoder;                  // early (9ch) / late (3ch)
    std::unique_ptr<nn::Linear> variant_proj;                   // early/late width normalizer
    nn::Embedding action_embed;
    nn::GruCell gru;
    nn::Linear state_proj, actor, critic;
};

// Per-environment recurrent state.
struct PolicyState {
    Tensor hidden;  // [hidden_dim]
    int prev_action = kStartAction;
};

}  // namespace navlab::policy
