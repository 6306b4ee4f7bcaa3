#pragma once

#include <filesystem>
#include <optional>

#include "navlab/oracle/dataset.hpp"
#include "navlab/predictor/model.hpp"

namespace navlab::predictor {

// View over loaded dataset episodes exposing one tuple per frame index.
class TupleDataset {
public:
    static TupleDataset from_episodes(std::vector<oracle::LoadedEpisode> episodes, int k, int h);

    size_t size() const { return refs_.size(); }
    oracle::TrainingTuple materialize(size_t idx) const;
    int k() const { return k_; }
    int h() const { return h_; }
    const std::vector<oracle::LoadedEpisode>& episodes() const { return episodes_; }

private:
    std::vector<oracle::LoadedEpisode> episodes_;
    std::vector<std::pair<int, int>> refs_;  // (episode, frame t)
    int k_ = 5, h_ = 4;
};

struct PredictorTrainConfig {
    int stage1_steps = 2000;  // denoiser with the learned-constant conditioning
    int stage2_steps = 4000;  // end-to-end with the full fused conditioning
    int batch_size = 8;
    double lr = 2e-4;
    double grad_clip = 1.0;
    int heldout_every = 500;
    int heldout_batches = 4;
    uint64_t seed = 1;
    std::filesystem::path out_dir;
    std::string config_hash = "unhashed";
    bool verbose = false;
};

struct PredictorTrainStats {
    double stage1_final_heldout = 0.0;
    double stage2_initial_heldout = 0.0;
    double final_heldout = 0.0;
    std::filesystem::path checkpoint;
    std::filesystem::path log_file;
};

PredictorTrainStats train_predictor(PredictorModel& model, const TupleDataset& train,
                                    const TupleDataset& heldout, const PredictorTrainConfig& cfg);

// Checkpoint blob + JSON sidecar (config hash, step count, schedule).
void save_predictor_checkpoint(const std::filesystem::path& path, const PredictorModel& model,
                               int64_t steps, const std::string& config_hash);
void load_predictor_checkpoint(const std::filesystem::path& path, PredictorModel& model);

}  // namespace navlab::predictor
