#include "navlab/oracle/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "navlab/core/checkpoint.hpp"

namespace navlab::oracle {

namespace {

using nlohmann::json;

std::string frame_name(int idx) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%05d.png", idx);
    return buf;
}

json pose_to_json(const Pose& p) { return json::array({p.x, p.y, p.heading}); }

Pose pose_from_json(const json& j) { return Pose{j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

std::string read_file(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + p.string());
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

}  // namespace

void write_episode(const std::filesystem::path& dataset_dir, const std::string& split,
                   const Trajectory& traj, const EpisodeSpec& episode, const std::string& maze_id,
                   int k, int h, const std::string& instruction) {
    const auto ep_dir = dataset_dir / split / episode.episode_id;
    const auto frames_dir = ep_dir / "frames";
    std::filesystem::create_directories(frames_dir);
    for (size_t i = 0; i < traj.frames.size(); ++i)
        save_png(traj.frames[i], frames_dir / frame_name(static_cast<int>(i)));
    const int goal_idx = static_cast<int>(traj.frames.size());
    save_png(episode.goal_image, frames_dir / frame_name(goal_idx));

    json j;
    j["version"] = 1;
    j["episode_id"] = episode.episode_id;
    j["maze_id"] = maze_id;
    json poses = json::array();
    for (const auto& p : traj.poses) poses.push_back(pose_to_json(p));
    j["poses"] = poses;
    json actions = json::array();
    for (Action a : traj.actions) actions.push_back(mazeworld::action_name(a));
    j["actions"] = actions;
    j["k"] = k;
    j["h"] = h;
    j["instruction"] = instruction;
    j["goal_frame_index"] = goal_idx;
    j["shortest_length"] = episode.shortest_length;
    j["resolution"] = episode.resolution;
    j["fov_deg"] = episode.fov_deg;
    io::atomic_write_file(ep_dir / "manifest.json", j.dump(2));
}

LoadedEpisode read_episode(const std::filesystem::path& episode_dir) {
    const auto j = json::parse(read_file(episode_dir / "manifest.json"));
    if (j.at("version").get<int>() != 1) throw std::runtime_error("episode manifest: unsupported version");
    LoadedEpisode ep;
    ep.manifest.episode_id = j.at("episode_id").get<std::string>();
    ep.manifest.maze_id = j.at("maze_id").get<std::string>();
    for (const auto& pj : j.at("poses")) ep.manifest.poses.push_back(pose_from_json(pj));
    for (const auto& aj : j.at("actions"))
        ep.manifest.actions.push_back(mazeworld::action_from_name(aj.get<std::string>()));
    ep.manifest.k = j.at("k").get<int>();
    ep.manifest.h = j.at("h").get<int>();
    ep.manifest.instruction = j.at("instruction").get<std::string>();
    ep.manifest.goal_frame_index = j.at("goal_frame_index").get<int>();
    ep.manifest.shortest_length = j.at("shortest_length").get<double>();
    ep.manifest.resolution = j.at("resolution").get<int>();
    ep.manifest.fov_deg = j.at("fov_deg").get<double>();
    ep.frames.reserve(ep.manifest.goal_frame_index + 1);
    for (int i = 0; i <= ep.manifest.goal_frame_index; ++i)
        ep.frames.push_back(load_png(episode_dir / "frames" / frame_name(i)));
    return ep;
}

void write_index(const std::filesystem::path& dataset_dir, const std::vector<IndexEntry>& entries) {
    json j;
    j["version"] = 1;
    json eps = json::array();
    int total = 0;
    for (const auto& e : entries) {
        eps.push_back({{"split", e.split},
                       {"episode_id", e.episode_id},
                       {"n_frames", e.n_frames},
                       {"n_tuples", e.n_tuples}});
        total += e.n_tuples;
    }
    j["episodes"] = eps;
    j["total_tuples"] = total;
    io::atomic_write_file(dataset_dir / "index.json", j.dump(2));
}

std::vector<IndexEntry> read_index(const std::filesystem::path& dataset_dir) {
    const auto j = json::parse(read_file(dataset_dir / "index.json"));
    if (j.at("version").get<int>() != 1) throw std::runtime_error("dataset index: unsupported version");
    std::vector<IndexEntry> out;
    for (const auto& ej : j.at("episodes"))
        out.push_back(IndexEntry{ej.at("split").get<std::string>(), ej.at("episode_id").get<std::string>(),
                                 ej.at("n_frames").get<int>(), ej.at("n_tuples").get<int>()});
    return out;
}

std::vector<LoadedEpisode> load_split(const std::filesystem::path& dataset_dir, const std::string& split) {
    std::vector<LoadedEpisode> out;
    for (const auto& e : read_index(dataset_dir)) {
        if (e.split != split) continue;
        out.push_back(read_episode(dataset_dir / split / e.episode_id));
    }
    return out;
}

}  // namespace navlab::oracle
