#include "navlab/metrics/metrics.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace navlab::metrics {

double spl(bool success, double shortest_m, double actual_m) {
    if (shortest_m <= 0.0) throw std::invalid_argument("spl: shortest length must be > 0");
    if (actual_m < 0.0) throw std::invalid_argument("spl: actual length must be >= 0");
    if (!success) return 0.0;
    return shortest_m / std::max(actual_m, shortest_m);
}

double psnr(const Image& a, const Image& b) {
    const double m = mse(a, b);  // throws on shape mismatch
    if (m <= 0.0) return 100.0;
    return std::min(100.0, 10.0 * std::log10(1.0 / m));
}

namespace {

constexpr double kCovEps = 1e-6;

// Symmetric PSD square root via eigendecomposition; negative eigenvalues
// from roundoff are clamped to zero.
Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& a) {
    const Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    Eigen::VectorXd lam = es.eigenvalues();
    for (int i = 0; i < lam.size(); ++i) lam[i] = lam[i] > 0.0 ? std::sqrt(lam[i]) : 0.0;
    return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

void fit_gaussian(const std::vector<std::vector<double>>& rows, Eigen::VectorXd& mu,
                  Eigen::MatrixXd& cov) {
    const int n = static_cast<int>(rows.size());
    const int d = static_cast<int>(rows[0].size());
    Eigen::MatrixXd x(n, d);
    for (int i = 0; i < n; ++i) {
        if (static_cast<int>(rows[i].size()) != d)
            throw std::invalid_argument("frechet_feature_distance: ragged feature set");
        for (int j = 0; j < d; ++j) x(i, j) = rows[i][j];
    }
    mu = x.colwise().mean();
    const Eigen::MatrixXd centered = x.rowwise() - mu.transpose();
    cov = centered.transpose() * centered / static_cast<double>(n - 1);
    cov += kCovEps * Eigen::MatrixXd::Identity(d, d);
}

}  // namespace

double frechet_feature_distance(const std::vector<std::vector<double>>& features_a,
                                const std::vector<std::vector<double>>& features_b) {
    if (features_a.empty() || features_b.empty())
        throw std::invalid_argument("frechet_feature_distance: empty feature set");
    const int d = static_cast<int>(features_a[0].size());
    if (static_cast<int>(features_b[0].size()) != d)
        throw std::invalid_argument("frechet_feature_distance: dimension mismatch");
    if (static_cast<int>(features_a.size()) <= d || static_cast<int>(features_b.size()) <= d)
        throw std::invalid_argument("frechet_feature_distance: need more samples than dimensions");
    Eigen::VectorXd mu_a, mu_b;
    Eigen::MatrixXd cov_a, cov_b;
    fit_gaussian(features_a, mu_a, cov_a);
    fit_gaussian(features_b, mu_b, cov_b);

    const Eigen::MatrixXd root_a = sqrtm_psd(cov_a);
    const Eigen::MatrixXd inner = sqrtm_psd(root_a * cov_b * root_a);
    const double mean_term = (mu_a - mu_b).squaredNorm();
    const double trace_term = cov_a.trace() + cov_b.trace() - 2.0 * inner.trace();
    return mean_term + trace_term;
}

double perceptual_distance(const FeatureExtractor& extractor, const Image& a, const Image& b) {
    std::vector<double> fa = extractor(a);
    std::vector<double> fb = extractor(b);
    if (fa.size() != fb.size()) throw std::invalid_argument("perceptual_distance: feature size mismatch");
    auto normalize = [](std::vector<double>& f) {
        double sq = 0.0;
        for (double v : f) sq += v * v;
        const double norm = std::sqrt(sq);
        if (norm > 0.0)
            for (double& v : f) v /= norm;
    };
    normalize(fa);
    normalize(fb);
    double sq = 0.0;
    for (size_t i = 0; i < fa.size(); ++i) {
        const double dv = fa[i] - fb[i];
        sq += dv * dv;
    }
    return std::sqrt(sq);
}

EvalReport aggregate(std::vector<EpisodeRecord> records, nlohmann::json config) {
    EvalReport report;
    report.records = std::move(records);
    report.config = std::move(config);
    if (!report.records.empty()) {
        double sr = 0.0, sp = 0.0;
        for (const auto& r : report.records) {
            sr += r.success ? 1.0 : 0.0;
            sp += r.spl;
        }
        report.sr = sr / static_cast<double>(report.records.size());
        report.spl = sp / static_cast<double>(report.records.size());
    }
    return report;
}

nlohmann::json report_to_json(const EvalReport& report) {
    nlohmann::json j;
    j["sr"] = report.sr;
    j["spl"] = report.spl;
    j["n_episodes"] = report.records.size();
    nlohmann::json records = nlohmann::json::array();
    for (const auto& r : report.records)
        records.push_back({{"id", r.episode_id},
                           {"success", r.success},
                           {"steps", r.steps},
                           {"path_length", r.path_length},
                           {"shortest_length", r.shortest_length},
                           {"spl", r.spl}});
    j["records"] = records;
    j["config"] = report.config;
    return j;
}

EvalReport report_from_json(const nlohmann::json& j) {
    EvalReport report;
    report.sr = j.at("sr").get<double>();
    report.spl = j.at("spl").get<double>();
    report.config = j.at("config");
    for (const auto& rj : j.at("records")) {
        EpisodeRecord r;
        r.episode_id = rj.at("id").get<std::string>();
        r.success = rj.at("success").get<bool>();
        r.steps = rj.at("steps").get<int>();
        r.path_length = rj.at("path_length").get<double>();
        r.shortest_length = rj.at("shortest_length").get<double>();
        r.spl = rj.at("spl").get<double>();
        report.records.push_back(std::move(r));
    }
    return report;
}

}  // namespace navlab::metrics
