#include "navlab/predictor/model.hpp"

#include <cmath>
#include <stdexcept>

namespace navlab::predictor {

using namespace nd;

namespace {

// number of stride-2 stages from `resolution` down to the 4x4 patch grid
int trunk_downs(int resolution) {
    int r = resolution, n = 0;
    while (r > 4) {
        if (r % 2 != 0) throw std::invalid_argument("predictor: resolution must be 4*2^n");
        r /= 2;
        ++n;
    }
    if (r != 4) throw std::invalid_argument("predictor: resolution must be 4*2^n");
    return n;
}

Tensor rows_broadcast(const Tensor& rows, int batch) {  // [N,d] -> [B,N,d]
    return broadcast_batch(rows, batch);
}

Tensor row_to_all(const Tensor& v, int n_rows, int batch) {  // [d] -> [B,N,d]
    return broadcast_batch(broadcast_batch(v, n_rows), batch);
}

}  // namespace

void PredictorConfig::validate() const {
    if (resolution < 8) throw std::invalid_argument("predictor: resolution too small");
    trunk_downs(resolution);
    if (unet_mults.empty()) throw std::invalid_argument("predictor: need at least one unet level");
    const int down = 1 << (static_cast<int>(unet_mults.size()) - 1);
    if (resolution % down != 0 || resolution / down < 2)
        throw std::invalid_argument("predictor: resolution incompatible with unet level count");
    if (ctx_tokens < 1 || n_queries < 1 || history_len < 1)
        throw std::invalid_argument("predictor: token counts must be >= 1");
    if (schedule_steps < 1 || sampler_steps < 1)
        throw std::invalid_argument("predictor: schedule/sampler steps must be >= 1");
    if (step_embed_dim % 2 != 0) throw std::invalid_argument("predictor: step_embed_dim must be even");
}

// ---------------------------------------------------------------------------
// ConvTrunk
// ---------------------------------------------------------------------------

ConvTrunk::ConvTrunk(int in_ch, int base, int n_down, Rng& rng) {
    int cin = in_ch;
    for (int i = 0; i < n_down; ++i) {
        const int cout = base * std::min(1 << i, 4);
        convs_.push_back(std::make_unique<nn::Conv2d>(cin, cout, 3, 2, 1, rng));
        norms_.push_back(std::make_unique<nn::GroupNorm>(nn::norm_groups(8, cout), cout));
        register_module("conv" + std::to_string(i), *convs_.back());
        register_module("norm" + std::to_string(i), *norms_.back());
        cin = cout;
    }
    out_channels = cin;
}

Tensor ConvTrunk::forward(const Tensor& x) const {
    Tensor h = x;
    for (size_t i = 0; i < convs_.size(); ++i) h = silu(norms_[i]->forward(convs_[i]->forward(h)));
    return h;
}

// ---------------------------------------------------------------------------
// ContextEncoder
// ---------------------------------------------------------------------------

ContextEncoder::ContextEncoder(const PredictorConfig& cfg, Rng& rng)
    : cfg_(cfg),
      trunk_(3, cfg.ctx_base, trunk_downs(cfg.resolution), rng),
      patch_proj_(trunk_.out_channels, cfg.ctx_dim, rng),
      instr_embed_(cfg.vocab_size, cfg.ctx_dim, rng),
      pre_readout_(cfg.ctx_dim),
      readout_(cfg.ctx_dim, rng, /*zero_init_out=*/false) {
    register_module("trunk", trunk_);
    register_module("patch_proj", patch_proj_);
    register_module("instr_embed", instr_embed_);
    register_module("pre_readout", pre_readout_);
    register_module("readout", readout_);
    const int n_patches = cfg.patch_grid() * cfg.patch_grid();
    patch_pos_ = register_param("patch_pos", randn({n_patches, cfg.ctx_dim}, rng, 0.02));
    seg_current_ = register_param("seg_current", randn({cfg.ctx_dim}, rng, 0.02));
    seg_goal_ = register_param("seg_goal", randn({cfg.ctx_dim}, rng, 0.02));
    instr_pos_ = register_param("instr_pos", randn({cfg.max_instruction_len, cfg.ctx_dim}, rng, 0.02));
    summary_queries_ = register_param("summary_queries", randn({cfg.ctx_tokens, cfg.ctx_dim}, rng, 0.5));
    for (int i = 0; i < cfg.ctx_layers; ++i) {
        blocks_.push_back(std::make_unique<nn::TransformerBlock>(cfg.ctx_dim, 2 * cfg.ctx_dim, rng));
        register_module("block" + std::to_string(i), *blocks_.back());
    }
}

Tensor ContextEncoder::forward(const Tensor& x_t, const Tensor& x_g,
                               const std::vector<std::vector<int>>& instructions) const {
    if (!same_shape(x_t.shape(), x_g.shape()))
        throw std::invalid_argument("encode_goal_context: image resolution mismatch");
    if (x_t.dim(2) != cfg_.resolution || x_t.dim(3) != cfg_.resolution)
        throw std::invalid_argument("encode_goal_context: images do not match configured resolution");
    const int B = x_t.dim(0);
    if (static_cast<int>(instructions.size()) != B)
        throw std::invalid_argument("encode_goal_context: instruction batch mismatch");
    const size_t instr_len = instructions[0].size();
    if (instr_len == 0 || static_cast<int>(instr_len) > cfg_.max_instruction_len)
        throw std::invalid_argument("encode_goal_context: instruction length out of range");
    for (const auto& ids : instructions)
        if (ids.size() != instr_len)
            throw std::invalid_argument("encode_goal_context: ragged instruction batch");

    const int n_patches = cfg_.patch_grid() * cfg_.patch_grid();
    auto to_tokens = [&](const Tensor& img, const Tensor& seg) {
        Tensor f = trunk_.forward(img);  // [B,C,4,4]
        Tensor tokens = patch_proj_.forward(
            transpose_last2(reshape(f, {B, trunk_.out_channels, n_patches})));  // [B,16,ctx]
        tokens = add(tokens, rows_broadcast(patch_pos_, B));
        return add(tokens, row_to_all(seg, n_patches, B));
    };
    Tensor tok_t = to_tokens(x_t, seg_current_);
    Tensor tok_g = to_tokens(x_g, seg_goal_);

    // instruction tokens (flattened batch through the embedding, then reshaped)
    std::vector<int> flat;
    flat.reserve(B * instr_len);
    for (const auto& ids : instructions)
        for (int id : ids) flat.push_back(id);
    Tensor instr = reshape(instr_embed_.forward(flat), {B, static_cast<int>(instr_len), cfg_.ctx_dim});
    instr = add(instr, rows_broadcast(slice(instr_pos_, 0, 0, static_cast<int>(instr_len)), B));

    Tensor seq = concat({tok_t, tok_g, instr}, 1);
    for (const auto& b : blocks_) seq = b->forward(seq);
    return readout_.forward(rows_broadcast(summary_queries_, B), pre_readout_.forward(seq));
}

// ---------------------------------------------------------------------------
// QueryAdapter
// ---------------------------------------------------------------------------

QueryAdapter::QueryAdapter(const PredictorConfig& cfg, Rng& rng)
    : attn(cfg.cond_dim, rng, /*zero_init_out=*/false, cfg.ctx_dim, /*out_scale=*/0.05),
      ln_(cfg.ctx_dim) {
    register_module("attn", attn);
    register_module("ln", ln_);
    queries_ = register_param("queries", randn({cfg.n_queries, cfg.cond_dim}, rng, 0.5));
}

Tensor QueryAdapter::forward(const Tensor& context_tokens) const {
    const int B = context_tokens.dim(0);
    return attn.forward(rows_broadcast(queries_, B), ln_.forward(context_tokens));
}

// ---------------------------------------------------------------------------
// HistoryEncoder
// ---------------------------------------------------------------------------

HistoryEncoder::HistoryEncoder(const PredictorConfig& cfg, Rng& rng)
    : cfg_(cfg),
      trunk_(3, cfg.hist_base, trunk_downs(cfg.resolution), rng),
      proj_(trunk_.out_channels, cfg.cond_dim, rng) {
    register_module("trunk", trunk_);
    register_module("proj", proj_);
    time_pos_ = register_param("time_pos", randn({cfg.history_len, cfg.cond_dim}, rng, 0.05));
}

Tensor HistoryEncoder::forward(const std::vector<Tensor>& frames) const {
    if (static_cast<int>(frames.size()) != cfg_.history_len)
        throw std::invalid_argument("encode_history: expected exactly " +
                                    std::to_string(cfg_.history_len) + " frames");
    const int B = frames[0].dim(0);
    std::vector<Tensor> rows;
    rows.reserve(frames.size());
    for (const auto& f : frames) {
        if (!same_shape(f.shape(), frames[0].shape()))
            throw std::invalid_argument("encode_history: frame shape mismatch");
        Tensor feat = proj_.forward(spatial_mean(trunk_.forward(f)));  // [B,cond]
        rows.push_back(reshape(feat, {B, 1, cfg_.cond_dim}));
    }
    Tensor f_h = concat(rows, 1);  // [B,h,cond]
    return add(f_h, rows_broadcast(time_pos_, B));
}

// ---------------------------------------------------------------------------
// FusionBlock
// ---------------------------------------------------------------------------

FusionBlock::FusionBlock(int dim, Rng& rng)
    : ln_n(dim), ln_h(dim), ln_q(dim), ln_kv(dim), ln_m(dim),
      self_n(dim, rng, /*zero_init_out=*/true),
      self_h(dim, rng, /*zero_init_out=*/true),
      cross(dim, rng, /*zero_init_out=*/true),
      mlp(dim, 2 * dim, rng, /*zero_init_out=*/true) {
    register_module("ln_n", ln_n);
    register_module("ln_h", ln_h);
    register_module("ln_q", ln_q);
    register_module("ln_kv", ln_kv);
    register_module("ln_m", ln_m);
    register_module("self_n", self_n);
    register_module("self_h", self_h);
    register_module("cross", cross);
    register_module("mlp", mlp);
}

Tensor FusionBlock::forward(const Tensor& f_n, const Tensor& f_h) const {
    if (f_n.dim(2) != f_h.dim(2)) throw std::invalid_argument("fuse_features: token width mismatch");
    Tensor nrm = ln_n.forward(f_n);
    Tensor a = add(f_n, self_n.forward(nrm, nrm));
    Tensor hrm = ln_h.forward(f_h);
    Tensor b = add(f_h, self_h.forward(hrm, hrm));
    Tensor c = add(a, cross.forward(ln_q.forward(a), ln_kv.forward(b)));
    return add(c, mlp.forward(ln_m.forward(c)));
}

// ---------------------------------------------------------------------------
// Denoiser
// ---------------------------------------------------------------------------

struct Denoiser::ResBlock : nn::Module {
    nn::GroupNorm n1, n2;
    nn::Conv2d c1, c2;
    std::unique_ptr<nn::Conv2d> skip;
    nn::Linear emb;  // scale-shift conditioning: produces [scale | shift]
    int cout;

    ResBlock(int cin, int cout_, int emb_dim, int groups, Rng& rng)
        : n1(nn::norm_groups(groups, cin), cin), n2(nn::norm_groups(groups, cout_), cout_),
          c1(cin, cout_, 3, 1, 1, rng), c2(cout_, cout_, 3, 1, 1, rng, true, /*zero_init=*/true),
          emb(emb_dim, 2 * cout_, rng), cout(cout_) {
        if (cin != cout_) {
            skip = std::make_unique<nn::Conv2d>(cin, cout_, 1, 1, 0, rng);
            register_module("skip", *skip);
        }
        register_module("n1", n1);
        register_module("n2", n2);
        register_module("c1", c1);
        register_module("c2", c2);
        register_module("emb", emb);
    }

    Tensor forward(const Tensor& x, const Tensor& emb_t) const {
        Tensor h = c1.forward(silu(n1.forward(x)));
        Tensor film = emb.forward(emb_t);  // [B, 2*cout]
        Tensor scale = add_scalar(slice(film, 1, 0, cout), 1.0);
        Tensor shift = slice(film, 1, cout, cout);
        h = add_channel_bias(scale_channels(n2.forward(h), scale), shift);
        h = c2.forward(silu(h));
        return add(skip ? skip->forward(x) : x, h);
    }
};

struct Denoiser::CrossAttnBlock : nn::Module {
    nn::LayerNorm ln;
    nn::Attention attn;
    int channels;

    CrossAttnBlock(int c, int cond_dim, Rng& rng)
        : ln(c), attn(c, rng, /*zero_init_out=*/true, cond_dim), channels(c) {
        register_module("ln", ln);
        register_module("attn", attn);
    }

    Tensor forward(const Tensor& x, const Tensor& cond) const {
        const int B = x.dim(0), H = x.dim(2), W = x.dim(3);
        Tensor tokens = transpose_last2(reshape(x, {B, channels, H * W}));  // [B,HW,c]
        tokens = add(tokens, attn.forward(ln.forward(tokens), cond));
        return reshape(transpose_last2(tokens), {B, channels, H, W});
    }
};

Denoiser::Denoiser(const PredictorConfig& cfg, int z_channels, Rng& rng)
    : cfg_(cfg), z_channels_(z_channels),
      step_fc1_(cfg.step_embed_dim, 2 * cfg.step_embed_dim, rng),
      step_fc2_(2 * cfg.step_embed_dim, 2 * cfg.step_embed_dim, rng),
      cond_pool_(cfg.cond_dim, 2 * cfg.step_embed_dim, rng) {
    register_module("step_fc1", step_fc1_);
    register_module("step_fc2", step_fc2_);
    register_module("cond_pool", cond_pool_);
    const int emb_dim = 2 * cfg.step_embed_dim;
    const int levels = static_cast<int>(cfg.unet_mults.size());
    std::vector<int> chs(levels);
    for (int i = 0; i < levels; ++i) chs[i] = cfg.unet_base * cfg.unet_mults[i];

    in_conv_ = std::make_unique<nn::Conv2d>(2 * z_channels, chs[0], 3, 1, 1, rng);
    register_module("in_conv", *in_conv_);
    for (int lvl = 0; lvl < levels; ++lvl) {
        down_res_.push_back(std::make_unique<ResBlock>(chs[lvl], chs[lvl], emb_dim, cfg.gn_groups, rng));
        register_module("down_res" + std::to_string(lvl), *down_res_.back());
        down_attn_.push_back(std::make_unique<CrossAttnBlock>(chs[lvl], cfg.cond_dim, rng));
        register_module("down_attn" + std::to_string(lvl), *down_attn_.back());
        if (lvl + 1 < levels) {
            down_convs_.push_back(std::make_unique<nn::Conv2d>(chs[lvl], chs[lvl + 1], 3, 2, 1, rng));
            register_module("down_conv" + std::to_string(lvl), *down_convs_.back());
        }
    }
    mid_res_ = std::make_unique<ResBlock>(chs[levels - 1], chs[levels - 1], emb_dim, cfg.gn_groups, rng);
    register_module("mid_res", *mid_res_);
    for (int lvl = levels - 2; lvl >= 0; --lvl) {
        up_convs_.push_back(std::make_unique<nn::Conv2d>(chs[lvl + 1], chs[lvl], 3, 1, 1, rng));
        register_module("up_conv" + std::to_string(lvl), *up_convs_.back());
        up_res_.push_back(std::make_unique<ResBlock>(2 * chs[lvl], chs[lvl], emb_dim, cfg.gn_groups, rng));
        register_module("up_res" + std::to_string(lvl), *up_res_.back());
        up_attn_.push_back(std::make_unique<CrossAttnBlock>(chs[lvl], cfg.cond_dim, rng));
        register_module("up_attn" + std::to_string(lvl), *up_attn_.back());
    }
    out_norm_ = std::make_unique<nn::GroupNorm>(nn::norm_groups(cfg.gn_groups, chs[0]), chs[0]);
    register_module("out_norm", *out_norm_);
    out_conv_ = std::make_unique<nn::Conv2d>(chs[0], z_channels, 3, 1, 1, rng, true, /*zero_init=*/true);
    register_module("out_conv", *out_conv_);
}

Denoiser::~Denoiser() = default;

Tensor Denoiser::forward(const Tensor& x, const std::vector<int>& steps, const Tensor& cond) const {
    const int B = x.dim(0);
    if (static_cast<int>(steps.size()) != B) throw std::invalid_argument("denoiser: step batch mismatch");
    if (x.dim(1) != 2 * z_channels_) throw std::invalid_argument("denoiser: channel mismatch");
    if (cond.dim(0) != B) throw std::invalid_argument("denoiser: conditioning batch mismatch");

    Tensor emb = step_fc2_.forward(silu(step_fc1_.forward(
        nn::sinusoidal_embedding(steps, cfg_.step_embed_dim))));
    emb = add(emb, cond_pool_.forward(mean_axis1(cond)));

    const int levels = static_cast<int>(cfg_.unet_mults.size());
    Tensor h = in_conv_->forward(x);
    std::vector<Tensor> skips;
    for (int lvl = 0; lvl < levels; ++lvl) {
        h = down_res_[static_cast<size_t>(lvl)]->forward(h, emb);
        h = down_attn_[static_cast<size_t>(lvl)]->forward(h, cond);
        if (lvl + 1 < levels) {
            skips.push_back(h);
            h = down_convs_[static_cast<size_t>(lvl)]->forward(h);
        }
    }
    h = mid_res_->forward(h, emb);
    for (size_t i = 0; i < up_convs_.size(); ++i) {
        h = up_convs_[i]->forward(upsample_nearest2(h));
        h = up_res_[i]->forward(concat({h, skips[skips.size() - 1 - i]}, 1), emb);
        h = up_attn_[i]->forward(h, cond);
    }
    return out_conv_->forward(silu(out_norm_->forward(h)));
}

// ---------------------------------------------------------------------------
// PredictorModel
// ---------------------------------------------------------------------------

TupleBatch make_tuple_batch(const std::vector<oracle::TrainingTuple>& tuples) {
    if (tuples.empty()) throw std::invalid_argument("make_tuple_batch: empty batch");
    const int B = static_cast<int>(tuples.size());
    const int R = tuples[0].x_t.h;
    const size_t h = tuples[0].x_h.size();
    auto stack = [&](auto&& get) {
        Tensor out = Tensor::zeros({B, 3, R, R});
        const int64_t per = out.numel() / B;
        for (int i = 0; i < B; ++i) {
            const Image& img = get(tuples[static_cast<size_t>(i)]);
            if (img.h != R || img.w != R) throw std::invalid_argument("make_tuple_batch: resolution mismatch");
            Tensor t = image_to_tensor(img);
            std::copy(t.values().begin(), t.values().end(), out.values().begin() + i * per);
        }
        return out;
    };
    TupleBatch batch;
    batch.x_t = stack([](const oracle::TrainingTuple& t) -> const Image& { return t.x_t; });
    batch.x_tk = stack([](const oracle::TrainingTuple& t) -> const Image& { return t.x_tk; });
    batch.x_g = stack([](const oracle::TrainingTuple& t) -> const Image& { return t.x_g; });
    for (size_t j = 0; j < h; ++j) {
        batch.x_h.push_back(stack([&](const oracle::TrainingTuple& t) -> const Image& {
            if (t.x_h.size() != h) throw std::invalid_argument("make_tuple_batch: history length mismatch");
            return t.x_h[j];
        }));
    }
    for (const auto& t : tuples) batch.y.push_back(t.y);
    return batch;
}

PredictorModel::PredictorModel(PredictorConfig cfg_arg, uint64_t init_seed, std::shared_ptr<Codec> codec_arg)
    : cfg((cfg_arg.validate(), std::move(cfg_arg))),
      schedule(NoiseSchedule::linear(cfg.schedule_steps, cfg.beta_start, cfg.beta_end)),
      codec(codec_arg ? std::move(codec_arg) : std::make_shared<IdentityCodec>()),
      init_rng_(derive_seed(init_seed, "predictor-init")),
      context(cfg, init_rng_),
      adapter(cfg, init_rng_),
      history(cfg, init_rng_),
      fusion(cfg.cond_dim, init_rng_) {
    denoiser = std::make_unique<Denoiser>(cfg, codec->channels(), init_rng_);
    register_module("context", context);
    register_module("adapter", adapter);
    register_module("history", history);
    register_module("fusion", fusion);
    register_module("denoiser", *denoiser);
    cond_base = register_param("cond_base", randn({cfg.n_queries, cfg.cond_dim}, init_rng_, 0.1));
}

Tensor PredictorModel::condition_tokens(const TupleBatch& batch, bool use_context) const {
    const int B = batch.batch();
    Tensor base = rows_broadcast(cond_base, B);
    if (!use_context) return base;
    Tensor ctx = context.forward(batch.x_t, batch.x_g, batch.y);
    Tensor f_n = adapter.forward(ctx);
    Tensor f_star = fusion.forward(f_n, history.forward(batch.x_h));
    return add(base, f_star);
}

Tensor PredictorModel::predict_noise(const Tensor& z, const std::vector<int>& steps,
                                     const Tensor& obs_encoded, const Tensor& cond) const {
    return denoiser->forward(concat({z, obs_encoded}, 1), steps, cond);
}

Tensor PredictorModel::diffusion_loss_batch(const TupleBatch& batch,
                                            const std::vector<uint64_t>& tuple_seeds,
                                            bool use_context,
                                            const NoisePredictor& noise_override) const {
    const int B = batch.batch();
    if (static_cast<int>(tuple_seeds.size()) != B)
        throw std::invalid_argument("diffusion_loss_batch: seed count mismatch");
    Tensor z0 = codec->encode(batch.x_tk);
    Tensor obs = codec->encode(batch.x_t);
    Tensor eps = Tensor::zeros(z0.shape());
    Tensor z_s = Tensor::zeros(z0.shape());
    std::vector<int> steps(static_cast<size_t>(B));
    const int64_t per = z0.numel() / B;
    for (int i = 0; i < B; ++i) {
        Rng r(tuple_seeds[static_cast<size_t>(i)]);
        const int s = 1 + static_cast<int>(r.uniform_int(static_cast<uint64_t>(schedule.steps)));
        steps[static_cast<size_t>(i)] = s;
        const double ab = schedule.alpha_bar(s);
        const double c0 = std::sqrt(ab), c1 = std::sqrt(1.0 - ab);
        for (int64_t j = 0; j < per; ++j) {
            const double e = r.normal();
            eps.data()[i * per + j] = e;
            z_s.data()[i * per + j] = c0 * z0.data()[i * per + j] + c1 * e;
        }
    }
    Tensor cond = condition_tokens(batch, use_context);
    Tensor eps_hat = noise_override ? noise_override(z_s, steps, obs, cond)
                                    : predict_noise(z_s, steps, obs, cond);
    return mse_loss(eps_hat, eps);
}

Image PredictorModel::sample_future(const Image& x_t, const Image& x_g, const std::vector<int>& y,
                                    const std::vector<Image>& x_h, int n_steps, uint64_t seed) const {
    if (n_steps < 1) throw std::invalid_argument("sample_future: n_steps must be >= 1");
    NoGradGuard no_grad;
    oracle::TrainingTuple tuple;
    tuple.x_t = x_t;
    tuple.x_tk = x_t;  // unused by conditioning
    tuple.x_g = x_g;
    tuple.x_h = x_h;
    tuple.y = y;
    const TupleBatch batch = make_tuple_batch({tuple});
    Tensor cond = condition_tokens(batch, /*use_context=*/true);
    Tensor obs = codec->encode(batch.x_t);
    Rng rng(derive_seed(seed, "future-sample"));
    auto fn = [&](const Tensor& z, int s) {
        return predict_noise(z, std::vector<int>(1, s), obs, cond);
    };
    Tensor z = ddim_sample(fn, {1, codec->channels(), cfg.resolution, cfg.resolution}, schedule,
                           n_steps, rng);
    Tensor decoded = codec->decode(z);
    return tensor_to_image(reshape(decoded, {codec->channels(), cfg.resolution, cfg.resolution}));
}

Tensor diffusion_loss(const PredictorModel& model, const oracle::TrainingTuple& tuple, Rng& rng,
                      bool use_context) {
    const TupleBatch batch = make_tuple_batch({tuple});
    return model.diffusion_loss_batch(batch, {rng.next_u64()}, use_context);
}

}  // namespace navlab::predictor
