#pragma once

#include <memory>
#include <vector>

#include "navlab/core/image.hpp"
#include "navlab/core/nn.hpp"
#include "navlab/core/rng.hpp"
#include "navlab/oracle/follower.hpp"
#include "navlab/predictor/schedule.hpp"

namespace navlab::predictor {

using nd::Tensor;

struct PredictorConfig {
    int resolution = 64;

    // goal-context encoder (compact trainable stand-in for the language
    // backbone; keeps the conditioning-token interface)
    int ctx_dim = 256;    // context token width
    int ctx_tokens = 8;   // summary token count
    int ctx_base = 16;    // conv trunk base width
    int ctx_layers = 2;   // self-attention depth
    int max_instruction_len = 16;
    int vocab_size = 9;

    // conditioning tokens
    int cond_dim = 256;   // token width seen by the denoiser
    int n_queries = 8;    // learned query count
    int history_len = 4;
    int hist_base = 12;   // history trunk width

    // denoiser
    int unet_base = 32;
    std::vector<int> unet_mults = {1, 2, 3};
    int gn_groups = 8;
    int step_embed_dim = 64;

    // schedule / sampling
    int schedule_steps = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    int sampler_steps = 20;

    void validate() const;
    int patch_grid() const { return 4; }  // context trunk output is 4x4 patches
};

// Pluggable latent codec. Pixel-space diffusion keeps the identity codec;
// a compressing codec can be swapped in behind the same interface.
class Codec {
public:
    virtual ~Codec() = default;
    virtual int channels() const = 0;
    virtual Tensor encode(const Tensor& imgs) const = 0;  // [B,3,R,R] -> [B,zc,R,R]
    virtual Tensor decode(const Tensor& z) const = 0;     // clamped back to image range
};

class IdentityCodec final : public Codec {
public:
    int channels() const override { return 3; }
    Tensor encode(const Tensor& imgs) const override { return imgs; }
    Tensor decode(const Tensor& z) const override { return nd::clamp(z, 0.0, 1.0); }
};

// Shared strided conv stack: [B,in,R,R] -> [B,out_channels,R/2^n,R/2^n]
class ConvTrunk : public nn::Module {
public:
    ConvTrunk(int in_ch, int base, int n_down, Rng& rng);
    Tensor forward(const Tensor& x) const;
    int out_channels = 0;

private:
    std::vector<std::unique_ptr<nn::Conv2d>> convs_;
    std::vector<std::unique_ptr<nn::GroupNorm>> norms_;
};

// Builds the conditioning-token summary from (x_t, x_g, instruction): both
// images through a shared trunk into patch tokens, instruction tokens
// embedded alongside, self-attention over the joint sequence, then a fixed
// set of learned summary queries reads out [B, ctx_tokens, ctx_dim].
class ContextEncoder : public nn::Module {
public:
    ContextEncoder(const PredictorConfig& cfg, Rng& rng);
    Tensor forward(const Tensor& x_t, const Tensor& x_g,
                   const std::vector<std::vector<int>>& instructions) const;

private:
    const PredictorConfig& cfg_;
    ConvTrunk trunk_;
    nn::Linear patch_proj_;
    Tensor patch_pos_, seg_current_, seg_goal_, summary_queries_;
    nn::Embedding instr_embed_;
    Tensor instr_pos_;
    std::vector<std::unique_ptr<nn::TransformerBlock>> blocks_;
    nn::LayerNorm pre_readout_;
    nn::Attention readout_;
};

// Fixed learned queries cross-attending to the context tokens.
class QueryAdapter : public nn::Module {
public:
    QueryAdapter(const PredictorConfig& cfg, Rng& rng);
    Tensor forward(const Tensor& context_tokens) const;  // [B,M,ctx] -> [B,Nq,cond]
    nn::Attention attn;

private:
    Tensor queries_;
    nn::LayerNorm ln_;
};

// One token row per history frame (shared trunk) plus a learned temporal
// position offset.
class HistoryEncoder : public nn::Module {
public:
    HistoryEncoder(const PredictorConfig& cfg, Rng& rng);
    Tensor forward(const std::vector<Tensor>& frames) const;  // h x [B,3,R,R] -> [B,h,cond]

private:
    const PredictorConfig& cfg_;
    ConvTrunk trunk_;
    nn::Linear proj_;
    Tensor time_pos_;
};

// Self-attention over each stream, cross-attention (queries from the
// query-adapter stream, keys/values from history), then an MLP. Residual
// with zero-initialized output projections: identity at init.
class FusionBlock : public nn::Module {
public:
    FusionBlock(int dim, Rng& rng);
    Tensor forward(const Tensor& f_n, const Tensor& f_h) const;

    nn::LayerNorm ln_n, ln_h, ln_q, ln_kv, ln_m;
    nn::Attention self_n, self_h, cross;
    nn::Mlp mlp;
};

// Conv encoder-decoder with skip connections, sinusoidal step embedding and
// conditioning-token cross-attention at every resolution level. The pooled
// conditioning tokens also add into the step embedding.
class Denoiser : public nn::Module {
public:
    Denoiser(const PredictorConfig& cfg, int z_channels, Rng& rng);
    ~Denoiser();
    // x = [B, 2*zc, R, R] (noisy latent ++ encoded observation)
    Tensor forward(const Tensor& x, const std::vector<int>& steps, const Tensor& cond) const;

private:
    struct ResBlock;
    struct CrossAttnBlock;
    const PredictorConfig& cfg_;
    int z_channels_;
    nn::Linear step_fc1_, step_fc2_, cond_pool_;
    std::unique_ptr<nn::Conv2d> in_conv_;
    std::vector<std::unique_ptr<ResBlock>> down_res_;
    std::vector<std::unique_ptr<CrossAttnBlock>> down_attn_;
    std::vector<std::unique_ptr<nn::Conv2d>> down_convs_;
    std::unique_ptr<ResBlock> mid_res_;
    std::vector<std::unique_ptr<nn::Conv2d>> up_convs_;
    std::vector<std::unique_ptr<ResBlock>> up_res_;
    std::vector<std::unique_ptr<CrossAttnBlock>> up_attn_;
    std::unique_ptr<nn::GroupNorm> out_norm_;
    std::unique_ptr<nn::Conv2d> out_conv_;
};

// Tensorized batch of training tuples.
struct TupleBatch {
    Tensor x_t, x_tk, x_g;    // [B,3,R,R]
    std::vector<Tensor> x_h;  // history_len tensors of [B,3,R,R]
    std::vector<std::vector<int>> y;
    int batch() const { return x_t.dim(0); }
};

TupleBatch make_tuple_batch(const std::vector<oracle::TrainingTuple>& tuples);

class PredictorModel : public nn::Module {
public:
    PredictorModel(PredictorConfig cfg, uint64_t init_seed, std::shared_ptr<Codec> codec = nullptr);

    // C + fusion(query_adapter(context), history); stage 1 trains with the
    // learned constant C alone (use_context = false).
    Tensor condition_tokens(const TupleBatch& batch, bool use_context) const;

    Tensor predict_noise(const Tensor& z, const std::vector<int>& steps, const Tensor& obs_encoded,
                         const Tensor& cond) const;

    // Test seam: replaces the denoiser inside the loss (oracle / null
    // denoisers in the contract tests).
    using NoisePredictor = std::function<Tensor(const Tensor& z_s, const std::vector<int>& steps,
                                                const Tensor& obs_encoded, const Tensor& cond)>;

    // Samples per-tuple (s, eps) from the given seeds; the loss is the mean
    // squared error between the drawn and predicted noise over all elements.
    Tensor diffusion_loss_batch(const TupleBatch& batch, const std::vector<uint64_t>& tuple_seeds,
                                bool use_context, const NoisePredictor& noise_override = nullptr) const;

    Image sample_future(const Image& x_t, const Image& x_g, const std::vector<int>& y,
                        const std::vector<Image>& x_h, int n_steps, uint64_t seed) const;

    PredictorConfig cfg;
    NoiseSchedule schedule;
    std::shared_ptr<Codec> codec;

private:
    Rng init_rng_;  // consumed while constructing the submodules below

public:
    ContextEncoder context;
    QueryAdapter adapter;
    HistoryEncoder history;
    FusionBlock fusion;
    std::unique_ptr<Denoiser> denoiser;
    Tensor cond_base;  // learned constant conditioning tokens
};

// Per-tuple loss drawing (s, eps) from `rng`; reseed the rng to freeze the
// randomness (finite-difference checks rely on this).
Tensor diffusion_loss(const PredictorModel& model, const oracle::TrainingTuple& tuple, Rng& rng,
                      bool use_context = true);

}  // namespace navlab::predictor
