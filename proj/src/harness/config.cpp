#include "navlab/harness/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

#include "navlab/core/rng.hpp"

namespace navlab::harness {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct FieldDef {
    std::string section, key;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

template <typename T>
void parse_into(T& ref, const std::string& raw, const std::string& name) {
    const std::string v = trim(raw);
    try {
        size_t used = 0;
        if constexpr (std::is_same_v<T, int>) {
            ref = std::stoi(v, &used);
        } else if constexpr (std::is_same_v<T, uint64_t>) {
            ref = std::stoull(v, &used);
        } else if constexpr (std::is_same_v<T, double>) {
            ref = std::stod(v, &used);
        } else {
            ref = v;
            used = v.size();
        }
        if (used != v.size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
        throw std::invalid_argument("config: cannot parse value '" + v + "' for " + name);
    }
}

template <typename T>
std::string fmt_value(const T& v) {
    if constexpr (std::is_same_v<T, double>)
        return fmt_double(v);
    else if constexpr (std::is_same_v<T, std::string>)
        return v;
    else
        return std::to_string(v);
}

const std::vector<FieldDef>& field_defs() {
    static const std::vector<FieldDef> defs = [] {
        std::vector<FieldDef> d;
        auto add = [&d](const char* sec, const char* key, auto ref_fn) {
            using T = std::remove_reference_t<decltype(ref_fn(std::declval<RunConfig&>()))>;
            const std::string name = std::string(sec).empty() ? key : std::string(sec) + "." + key;
            d.push_back(FieldDef{
                sec, key,
                [ref_fn, name](RunConfig& c, const std::string& raw) { parse_into<T>(ref_fn(c), raw, name); },
                [ref_fn](const RunConfig& c) {
                    return fmt_value<T>(ref_fn(const_cast<RunConfig&>(c)));
                }});
        };
        add("", "seed", [](RunConfig& c) -> uint64_t& { return c.seed; });

        add("sim", "maze_width", [](RunConfig& c) -> int& { return c.sim.maze_width; });
        add("sim", "maze_height", [](RunConfig& c) -> int& { return c.sim.maze_height; });
        add("sim", "resolution", [](RunConfig& c) -> int& { return c.sim.resolution; });
        add("sim", "fov_deg", [](RunConfig& c) -> double& { return c.sim.fov_deg; });
        add("sim", "cell_size", [](RunConfig& c) -> double& { return c.sim.cell_size; });
        add("sim", "max_steps", [](RunConfig& c) -> int& { return c.sim.max_steps; });

        add("data", "k", [](RunConfig& c) -> int& { return c.data.k; });
        add("data", "h", [](RunConfig& c) -> int& { return c.data.h; });
        add("data", "train_mazes", [](RunConfig& c) -> int& { return c.data.train_mazes; });
        add("data", "val_mazes", [](RunConfig& c) -> int& { return c.data.val_mazes; });
        add("data", "test_mazes", [](RunConfig& c) -> int& { return c.data.test_mazes; });
        add("data", "episodes_per_maze", [](RunConfig& c) -> int& { return c.data.episodes_per_maze; });
        add("data", "min_geo", [](RunConfig& c) -> double& { return c.data.min_geo; });
        add("data", "max_geo", [](RunConfig& c) -> double& { return c.data.max_geo; });

        add("predictor", "ctx_dim", [](RunConfig& c) -> int& { return c.predictor.ctx_dim; });
        add("predictor", "ctx_tokens", [](RunConfig& c) -> int& { return c.predictor.ctx_tokens; });
        add("predictor", "ctx_base", [](RunConfig& c) -> int& { return c.predictor.ctx_base; });
        add("predictor", "ctx_layers", [](RunConfig& c) -> int& { return c.predictor.ctx_layers; });
        add("predictor", "cond_dim", [](RunConfig& c) -> int& { return c.predictor.cond_dim; });
        add("predictor", "n_queries", [](RunConfig& c) -> int& { return c.predictor.n_queries; });
        add("predictor", "hist_base", [](RunConfig& c) -> int& { return c.predictor.hist_base; });
        add("predictor", "unet_base", [](RunConfig& c) -> int& { return c.predictor.unet_base; });
        add("predictor", "unet_levels", [](RunConfig& c) -> int& { return c.predictor.unet_levels; });
        add("predictor", "step_embed_dim", [](RunConfig& c) -> int& { return c.predictor.step_embed_dim; });
        add("predictor", "schedule_steps", [](RunConfig& c) -> int& { return c.predictor.schedule_steps; });
        add("predictor", "beta_start", [](RunConfig& c) -> double& { return c.predictor.beta_start; });
        add("predictor", "beta_end", [](RunConfig& c) -> double& { return c.predictor.beta_end; });
        add("predictor", "stage1_steps", [](RunConfig& c) -> int& { return c.predictor.stage1_steps; });
        add("predictor", "stage2_steps", [](RunConfig& c) -> int& { return c.predictor.stage2_steps; });
        add("predictor", "batch_size", [](RunConfig& c) -> int& { return c.predictor.batch_size; });
        add("predictor", "lr", [](RunConfig& c) -> double& { return c.predictor.lr; });
        add("predictor", "heldout_every", [](RunConfig& c) -> int& { return c.predictor.heldout_every; });

        add("policy", "variant", [](RunConfig& c) -> std::string& { return c.policy.variant; });
        add("policy", "future_source", [](RunConfig& c) -> std::string& { return c.policy.future_source; });
        add("policy", "enc_base", [](RunConfig& c) -> int& { return c.policy.enc_base; });
        add("policy", "feat_dim", [](RunConfig& c) -> int& { return c.policy.feat_dim; });
        add("policy", "hidden_dim", [](RunConfig& c) -> int& { return c.policy.hidden_dim; });
        add("policy", "state_dim", [](RunConfig& c) -> int& { return c.policy.state_dim; });
        add("policy", "action_embed_dim", [](RunConfig& c) -> int& { return c.policy.action_embed_dim; });
        add("policy", "updates", [](RunConfig& c) -> int& { return c.policy.updates; });
        add("policy", "val_every", [](RunConfig& c) -> int& { return c.policy.val_every; });
        add("policy", "val_episodes", [](RunConfig& c) -> int& { return c.policy.val_episodes; });
        add("policy", "episode_max_steps", [](RunConfig& c) -> int& { return c.policy.episode_max_steps; });
        add("policy", "min_geo", [](RunConfig& c) -> double& { return c.policy.min_geo; });
        add("policy", "max_geo", [](RunConfig& c) -> double& { return c.policy.max_geo; });
        add("policy", "stop_at_val_sr", [](RunConfig& c) -> double& { return c.policy.stop_at_val_sr; });
        add("policy", "gamma", [](RunConfig& c) -> double& { return c.policy.gamma; });
        add("policy", "gae_lambda", [](RunConfig& c) -> double& { return c.policy.gae_lambda; });
        add("policy", "clip", [](RunConfig& c) -> double& { return c.policy.clip; });
        add("policy", "epochs_per_batch", [](RunConfig& c) -> int& { return c.policy.epochs_per_batch; });
        add("policy", "n_envs", [](RunConfig& c) -> int& { return c.policy.n_envs; });
        add("policy", "rollout_length", [](RunConfig& c) -> int& { return c.policy.rollout_length; });
        add("policy", "entropy_coef", [](RunConfig& c) -> double& { return c.policy.entropy_coef; });
        add("policy", "value_coef", [](RunConfig& c) -> double& { return c.policy.value_coef; });
        add("policy", "lr", [](RunConfig& c) -> double& { return c.policy.lr; });
        add("policy", "minibatch_envs", [](RunConfig& c) -> int& { return c.policy.minibatch_envs; });

        add("eval", "k", [](RunConfig& c) -> int& { return c.eval.k; });
        add("eval", "step_limit", [](RunConfig& c) -> int& { return c.eval.step_limit; });
        add("eval", "sampler_steps", [](RunConfig& c) -> int& { return c.eval.sampler_steps; });
        add("eval", "episodes", [](RunConfig& c) -> int& { return c.eval.episodes; });
        add("eval", "seed", [](RunConfig& c) -> uint64_t& { return c.eval.seed; });
        add("eval", "future_source", [](RunConfig& c) -> std::string& { return c.eval.future_source; });
        add("eval", "dump_episodes", [](RunConfig& c) -> int& { return c.eval.dump_episodes; });
        add("eval", "min_geo", [](RunConfig& c) -> double& { return c.eval.min_geo; });
        add("eval", "max_geo", [](RunConfig& c) -> double& { return c.eval.max_geo; });
        return d;
    }();
    return defs;
}

const FieldDef& find_field(const std::string& section, const std::string& key) {
    for (const auto& f : field_defs())
        if (f.section == section && f.key == key) return f;
    throw std::invalid_argument("config: unknown key '" +
                                (section.empty() ? key : section + "." + key) + "'");
}

}  // namespace

RunConfig RunConfig::from_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream is(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash_pos = line.find('#');
        if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::invalid_argument("config: bad section header at line " + std::to_string(lineno));
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: expected key = value at line " + std::to_string(lineno));
        const std::string key = trim(line.substr(0, eq));
        find_field(section, key).set(cfg, line.substr(eq + 1));
    }
    return cfg;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open " + path.string());
    std::ostringstream os;
    os << is.rdbuf();
    return from_text(os.str());
}

void RunConfig::apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos)
        throw std::invalid_argument("config override must look like section.key=value");
    std::string name = trim(assignment.substr(0, eq));
    std::string section;
    const auto dot = name.find('.');
    if (dot != std::string::npos) {
        section = name.substr(0, dot);
        name = name.substr(dot + 1);
    }
    find_field(section, name).set(*this, assignment.substr(eq + 1));
}

std::string RunConfig::canonical() const {
    std::ostringstream os;
    for (const auto& f : field_defs()) {
        os << (f.section.empty() ? f.key : f.section + "." + f.key) << " = " << f.get(*this) << "\n";
    }
    return os.str();
}

std::string RunConfig::hash() const {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(canonical())));
    return buf;
}

nlohmann::json RunConfig::to_json() const {
    nlohmann::json j;
    for (const auto& f : field_defs()) {
        if (f.section.empty())
            j[f.key] = f.get(*this);
        else
            j[f.section][f.key] = f.get(*this);
    }
    j["config_hash"] = hash();
    return j;
}

namespace {
void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument("config: " + msg);
}
}  // namespace

void RunConfig::validate() const {
    require(sim.maze_width >= 5 && sim.maze_width <= 41 && sim.maze_width % 2 == 1,
            "sim.maze_width must be odd in [5,41]");
    require(sim.maze_height >= 5 && sim.maze_height <= 41 && sim.maze_height % 2 == 1,
            "sim.maze_height must be odd in [5,41]");
    require(sim.resolution == 16 || sim.resolution == 32 || sim.resolution == 64 ||
                sim.resolution == 128,
            "sim.resolution must be one of 16/32/64/128");
    require(sim.fov_deg > 0.0 && sim.fov_deg < 180.0, "sim.fov_deg must be in (0,180)");
    require(sim.cell_size >= 0.5 && sim.cell_size <= 2.0, "sim.cell_size must be in [0.5,2]");
    require(sim.max_steps >= 1 && sim.max_steps <= 10000, "sim.max_steps out of range");

    require(data.k >= 1 && data.k <= 100, "data.k out of range");
    require(data.h >= 1 && data.h <= 16, "data.h out of range");
    require(data.train_mazes >= 1 && data.val_mazes >= 0 && data.test_mazes >= 0,
            "data maze counts out of range");
    require(data.episodes_per_maze >= 1, "data.episodes_per_maze must be >= 1");
    require(data.min_geo > 0.0 && data.max_geo >= data.min_geo, "data geodesic bounds invalid");

    predictor_config().validate();  // shapes and schedule
    require(predictor.stage1_steps >= 1 && predictor.stage2_steps >= 1,
            "predictor stage steps must be >= 1");
    require(predictor.batch_size >= 1 && predictor.batch_size <= 256,
            "predictor.batch_size out of range");
    require(predictor.lr > 0.0 && predictor.lr < 1.0, "predictor.lr out of range");
    require(predictor.heldout_every >= 1, "predictor.heldout_every must be >= 1");

    policy_config().validate();
    ppo_config().validate();
    navloop::future_mode_from_name(policy.future_source);
    require(policy.updates >= 1, "policy.updates must be >= 1");
    require(policy.val_every >= 1 && policy.val_episodes >= 1, "policy validation cadence invalid");
    require(policy.episode_max_steps >= 1, "policy.episode_max_steps must be >= 1");
    require(policy.min_geo > 0.0 && policy.max_geo >= policy.min_geo, "policy geodesic bounds invalid");

    navloop::future_mode_from_name(eval.future_source);
    require(eval.k >= 1 && eval.k <= eval.step_limit, "eval needs 1 <= k <= step_limit");
    require(eval.sampler_steps >= 1, "eval.sampler_steps must be >= 1");
    require(eval.episodes >= 1, "eval.episodes must be >= 1");
    require(eval.dump_episodes >= 0, "eval.dump_episodes must be >= 0");
    require(eval.min_geo > 0.0 && eval.max_geo >= eval.min_geo, "eval geodesic bounds invalid");
}

predictor::PredictorConfig RunConfig::predictor_config() const {
    predictor::PredictorConfig c;
    c.resolution = sim.resolution;
    c.ctx_dim = predictor.ctx_dim;
    c.ctx_tokens = predictor.ctx_tokens;
    c.ctx_base = predictor.ctx_base;
    c.ctx_layers = predictor.ctx_layers;
    c.cond_dim = predictor.cond_dim;
    c.n_queries = predictor.n_queries;
    c.history_len = data.h;
    c.hist_base = predictor.hist_base;
    c.unet_base = predictor.unet_base;
    c.unet_mults.clear();
    for (int i = 0; i < predictor.unet_levels; ++i) c.unet_mults.push_back(i + 1);
    c.step_embed_dim = predictor.step_embed_dim;
    c.schedule_steps = predictor.schedule_steps;
    c.beta_start = predictor.beta_start;
    c.beta_end = predictor.beta_end;
    c.sampler_steps = eval.sampler_steps;
    c.vocab_size = static_cast<int>(oracle::instruction_vocab().size());
    return c;
}

policy::PolicyConfig RunConfig::policy_config() const {
    policy::PolicyConfig c;
    c.variant = policy::variant_from_name(policy.variant);
    c.resolution = sim.resolution;
    c.enc_base = policy.enc_base;
    c.feat_dim = policy.feat_dim;
    c.hidden_dim = policy.hidden_dim;
    c.state_dim = policy.state_dim;
    c.action_embed_dim = policy.action_embed_dim;
    return c;
}

policy::PpoConfig RunConfig::ppo_config() const {
    policy::PpoConfig c;
    c.gamma = policy.gamma;
    c.gae_lambda = policy.gae_lambda;
    c.clip = policy.clip;
    c.epochs_per_batch = policy.epochs_per_batch;
    c.n_envs = policy.n_envs;
    c.rollout_length = policy.rollout_length;
    c.entropy_coef = policy.entropy_coef;
    c.value_coef = policy.value_coef;
    c.lr = policy.lr;
    c.minibatch_envs = policy.minibatch_envs;
    return c;
}

}  // namespace navlab::harness
