#include "navlab/predictor/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "navlab/core/checkpoint.hpp"
#include "navlab/core/optim.hpp"

namespace navlab::predictor {

using nlohmann::json;

TupleDataset TupleDataset::from_episodes(std::vector<oracle::LoadedEpisode> episodes, int k, int h) {
    if (k < 1 || h < 1) throw std::invalid_argument("TupleDataset: k and h must be >= 1");
    TupleDataset ds;
    ds.episodes_ = std::move(episodes);
    ds.k_ = k;
    ds.h_ = h;
    for (size_t e = 0; e < ds.episodes_.size(); ++e) {
        const int n = ds.episodes_[e].n_trajectory_frames();
        for (int t = 0; t < n; ++t) ds.refs_.emplace_back(static_cast<int>(e), t);
    }
    return ds;
}

oracle::TrainingTuple TupleDataset::materialize(size_t idx) const {
    const auto [e, t] = refs_.at(idx);
    const auto& ep = episodes_[static_cast<size_t>(e)];
    const int last = ep.n_trajectory_frames() - 1;
    oracle::TrainingTuple tup;
    tup.x_t = ep.frames[static_cast<size_t>(t)];
    tup.x_tk = ep.frames[static_cast<size_t>(std::min(t + k_, last))];
    tup.x_h.reserve(static_cast<size_t>(h_));
    for (int i = t - h_ + 1; i <= t; ++i) tup.x_h.push_back(ep.frames[static_cast<size_t>(std::max(0, i))]);
    tup.x_g = ep.goal_image();
    tup.y = oracle::tokenize_instruction(ep.manifest.instruction);
    return tup;
}

namespace {

TupleBatch gather_batch(const TupleDataset& ds, const std::vector<size_t>& idx) {
    std::vector<oracle::TrainingTuple> tuples;
    tuples.reserve(idx.size());
    for (size_t i : idx) tuples.push_back(ds.materialize(i));
    return make_tuple_batch(tuples);
}

double heldout_loss(const PredictorModel& model, const TupleDataset& heldout,
                    const PredictorTrainConfig& cfg, bool use_context) {
    if (heldout.size() == 0) return 0.0;
    nd::NoGradGuard no_grad;
    double total = 0.0;
    int count = 0;
    const size_t bs = static_cast<size_t>(cfg.batch_size);
    for (int b = 0; b < cfg.heldout_batches; ++b) {
        std::vector<size_t> idx;
        std::vector<uint64_t> seeds;
        for (size_t j = 0; j < bs; ++j) {
            const size_t i = (static_cast<size_t>(b) * bs + j) % heldout.size();
            idx.push_back(i);
            seeds.push_back(derive_seed(cfg.seed, "heldout-noise", i));
        }
        total += model.diffusion_loss_batch(gather_batch(heldout, idx), seeds, use_context).item();
        ++count;
    }
    return total / count;
}

}  // namespace

void save_predictor_checkpoint(const std::filesystem::path& path, const PredictorModel& model,
                               int64_t steps, const std::string& config_hash) {
    io::save_tensors(path, model.named_parameters());
    json side;
    side["version"] = io::kCheckpointVersion;
    side["kind"] = "predictor";
    side["steps"] = steps;
    side["config_hash"] = config_hash;
    side["resolution"] = model.cfg.resolution;
    side["schedule"] = {{"steps", model.cfg.schedule_steps},
                        {"beta_start", model.cfg.beta_start},
                        {"beta_end", model.cfg.beta_end}};
    io::atomic_write_file(path.string() + ".json", side.dump(2));
}

void load_predictor_checkpoint(const std::filesystem::path& path, PredictorModel& model) {
    std::ifstream is(path.string() + ".json");
    if (!is) throw std::runtime_error("predictor checkpoint: missing sidecar " + path.string() + ".json");
    json side;
    try {
        is >> side;
    } catch (const std::exception& e) {
        throw std::runtime_error("predictor checkpoint: corrupted sidecar: " + std::string(e.what()));
    }
    if (!side.contains("version") || side["version"].get<uint32_t>() != io::kCheckpointVersion)
        throw std::runtime_error("predictor checkpoint: sidecar version mismatch");
    if (side.at("kind").get<std::string>() != "predictor")
        throw std::runtime_error("predictor checkpoint: wrong kind");
    if (side.at("resolution").get<int>() != model.cfg.resolution)
        throw std::runtime_error("predictor checkpoint: resolution mismatch");
    io::load_tensors_into(path, model.named_parameters());
}

PredictorTrainStats train_predictor(PredictorModel& model, const TupleDataset& train,
                                    const TupleDataset& heldout, const PredictorTrainConfig& cfg) {
    if (train.size() == 0) throw std::invalid_argument("train_predictor: empty dataset");
    std::filesystem::create_directories(cfg.out_dir);
    PredictorTrainStats stats;
    stats.log_file = cfg.out_dir / "predictor_train.jsonl";
    std::ofstream log(stats.log_file, std::ios::trunc);

    auto log_line = [&](int64_t step, double loss, const char* split, int stage) {
        json j;
        j["step"] = step;
        j["loss"] = loss;
        j["split"] = split;
        j["stage"] = stage;
        log << j.dump() << "\n";
        log.flush();
    };

    nn::Adam opt(model.parameters(), {.lr = cfg.lr});
    const size_t n = train.size();
    const size_t bs = std::min<size_t>(static_cast<size_t>(cfg.batch_size), n);
    const int64_t total_steps = cfg.stage1_steps + cfg.stage2_steps;
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    size_t cursor = n;  // force an initial shuffle
    int64_t epoch = -1;

    for (int64_t step = 1; step <= total_steps; ++step) {
        const bool stage2 = step > cfg.stage1_steps;
        if (cursor + bs > n) {
            ++epoch;
            Rng shuffle_rng(derive_seed(cfg.seed, "order", static_cast<uint64_t>(epoch)));
            for (size_t i = n - 1; i > 0; --i) {
                const size_t j = shuffle_rng.uniform_int(i + 1);
                std::swap(order[i], order[j]);
            }
            cursor = 0;
        }
        std::vector<size_t> idx(order.begin() + static_cast<long>(cursor),
                                order.begin() + static_cast<long>(cursor + bs));
        cursor += bs;
        std::vector<uint64_t> seeds;
        seeds.reserve(idx.size());
        for (size_t i : idx)
            seeds.push_back(derive_seed(cfg.seed, "noise", static_cast<uint64_t>(epoch) * n + i));

        opt.zero_grad();
        nd::Tensor loss = model.diffusion_loss_batch(gather_batch(train, idx), seeds, stage2);
        loss.backward();
        nn::clip_grad_norm(model.parameters(), cfg.grad_clip);
        opt.step();
        log_line(step, loss.item(), "train", stage2 ? 2 : 1);
        if (cfg.verbose && step % 50 == 0)
            std::fprintf(stderr, "[predictor] step %lld/%lld stage %d loss %.4f\n",
                         static_cast<long long>(step), static_cast<long long>(total_steps), stage2 ? 2 : 1,
                         loss.item());

        const bool stage_boundary = step == cfg.stage1_steps;
        if (step % cfg.heldout_every == 0 || stage_boundary || step == total_steps) {
            const double hl = heldout_loss(model, heldout, cfg, stage2);
            log_line(step, hl, "heldout", stage2 ? 2 : 1);
            if (step == total_steps) stats.final_heldout = hl;
        }
        if (stage_boundary) {
            stats.stage1_final_heldout = heldout_loss(model, heldout, cfg, /*use_context=*/false);
            stats.stage2_initial_heldout = heldout_loss(model, heldout, cfg, /*use_context=*/true);
            log_line(step, stats.stage1_final_heldout, "heldout_stage1_final", 1);
            log_line(step, stats.stage2_initial_heldout, "heldout_stage2_initial", 2);
            save_predictor_checkpoint(cfg.out_dir / "predictor_stage1.ckpt", model, step, cfg.config_hash);
        }
    }
    stats.checkpoint = cfg.out_dir / "predictor.ckpt";
    save_predictor_checkpoint(stats.checkpoint, model, total_steps, cfg.config_hash);
    return stats;
}

}  // namespace navlab::predictor
