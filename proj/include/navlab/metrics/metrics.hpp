#pragma once

#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "navlab/core/image.hpp"

namespace navlab::metrics {

// Success weighted by path length: S * l / max(p, l).
double spl(bool success, double shortest_m, double actual_m);

// Peak signal-to-noise ratio for [0,1] images, capped at 100 dB so identical
// images stay finite in reports.
double psnr(const Image& a, const Image& b);

// Frechet distance between Gaussian fits of two feature sets (rows are
// d-vectors; each set must have more rows than d). Covariances are
// regularized with 1e-6*I.
double frechet_feature_distance(const std::vector<std::vector<double>>& features_a,
                                const std::vector<std::vector<double>>& features_b);

using FeatureExtractor = std::function<std::vector<double>(const Image&)>;

// L2 distance between unit-normalized extractor features; zero iff the
// features match.
double perceptual_distance(const FeatureExtractor& extractor, const Image& a, const Image& b);

struct EpisodeRecord {
    std::string episode_id;
    bool success = false;
    int steps = 0;
    double path_length = 0.0;
    double shortest_length = 0.0;
    double spl = 0.0;
};

struct EvalReport {
    double sr = 0.0;
    double spl = 0.0;
    std::vector<EpisodeRecord> records;
    nlohmann::json config;  // snapshot of the evaluation configuration
};

EvalReport aggregate(std::vector<EpisodeRecord> records, nlohmann::json config);

nlohmann::json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);

}  // namespace navlab::metrics
