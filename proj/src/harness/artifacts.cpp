#include "navlab/harness/artifacts.hpp"

#include <omp.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "navlab/core/checkpoint.hpp"
#include "navlab/core/parallel.hpp"
#include "navlab/oracle/dataset.hpp"

namespace navlab::harness {

using mazeworld::MazeSpec;
using mazeworld::Pose;
using nlohmann::json;

RunPaths RunPaths::make(const std::string& run_id) {
    std::filesystem::path root = "runs";
    if (const char* env = std::getenv("NAVLAB_RUN_ROOT")) root = env;
    return RunPaths{root / run_id};
}

void write_resolved_config(const RunPaths& paths, const RunConfig& cfg) {
    std::filesystem::create_directories(paths.root);
    io::atomic_write_file(paths.config_resolved(),
                          "# config_hash = " + cfg.hash() + "\n" + cfg.canonical());
}

std::vector<MazePtr> make_maze_set(const RunConfig& cfg, const std::string& split, int count) {
    std::vector<MazePtr> out;
    out.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
        auto maze = mazeworld::generate_maze(derive_seed(cfg.seed, "maze-" + split, static_cast<uint64_t>(i)),
                                             cfg.sim.maze_width, cfg.sim.maze_height);
        maze.cell_size = cfg.sim.cell_size;
        out.push_back(std::make_shared<const MazeSpec>(std::move(maze)));
    }
    return out;
}

void save_maze_set(const std::filesystem::path& dir, const std::vector<MazePtr>& mazes) {
    std::filesystem::create_directories(dir);
    for (size_t i = 0; i < mazes.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "maze_%03zu.json", i);
        io::atomic_write_file(dir / name, mazeworld::maze_to_json(*mazes[i]));
    }
}

std::vector<MazePtr> load_maze_set(const std::filesystem::path& dir) {
    if (!std::filesystem::exists(dir))
        throw std::runtime_error("missing artifact: " + dir.string() + " (run `navlab make-mazes` first)");
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<MazePtr> out;
    for (const auto& f : files) {
        std::ifstream is(f);
        std::ostringstream os;
        os << is.rdbuf();
        out.push_back(std::make_shared<const MazeSpec>(mazeworld::maze_from_json(os.str())));
    }
    if (out.empty()) throw std::runtime_error("missing artifact: no mazes under " + dir.string());
    return out;
}

CollectSummary collect_split(const RunConfig& cfg, const RunPaths& paths, const std::string& split,
                             const std::vector<MazePtr>& mazes, int episodes_per_maze) {
    struct Job {
        int maze_idx, ep_idx;
        std::string id;
    };
    std::vector<Job> jobs;
    for (int m = 0; m < static_cast<int>(mazes.size()); ++m)
        for (int e = 0; e < episodes_per_maze; ++e) {
            char id[64];
            std::snprintf(id, sizeof(id), "%s-m%03d-e%03d", split.c_str(), m, e);
            jobs.push_back({m, e, id});
        }

    const std::string instruction = oracle::default_instruction();
    std::vector<oracle::IndexEntry> entries(jobs.size());
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic) if (kernels::parallel_ok())
    for (size_t j = 0; j < jobs.size(); ++j) {
        try {
            const auto& job = jobs[j];
            auto ep = mazeworld::make_episode(
                mazes[static_cast<size_t>(job.maze_idx)],
                derive_seed(cfg.seed, "episode-" + split, static_cast<uint64_t>(j)), cfg.data.min_geo,
                cfg.data.max_geo, cfg.sim.resolution, cfg.sim.fov_deg, cfg.sim.max_steps);
            ep.episode_id = job.id;
            const auto traj = oracle::collect_trajectory(ep);
            char maze_id[32];
            std::snprintf(maze_id, sizeof(maze_id), "maze_%03d", job.maze_idx);
            oracle::write_episode(paths.dataset(), split, traj, ep, maze_id, cfg.data.k, cfg.data.h,
                                  instruction);
            entries[j] = {split, job.id, static_cast<int>(traj.frames.size()),
                          static_cast<int>(traj.frames.size())};
        } catch (...) {
#pragma omp critical
            failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);

    // merge with entries from other splits already present
    std::vector<oracle::IndexEntry> all;
    if (std::filesystem::exists(paths.dataset() / "index.json")) {
        for (auto& e : oracle::read_index(paths.dataset()))
            if (e.split != split) all.push_back(e);
    }
    all.insert(all.end(), entries.begin(), entries.end());
    oracle::write_index(paths.dataset(), all);

    CollectSummary summary;
    summary.episodes = static_cast<int>(entries.size());
    for (const auto& e : entries) {
        summary.frames += e.n_frames;
        summary.tuples += e.n_tuples;
    }
    return summary;
}

void dump_episode_artifacts(const std::filesystem::path& dir, const mazeworld::EpisodeSpec& episode,
                            const navloop::EpisodeArtifacts& artifacts,
                            const metrics::EpisodeRecord& record, int future_k) {
    std::filesystem::create_directories(dir);
    json j;
    j["version"] = 1;
    j["episode_id"] = episode.episode_id;
    j["success"] = record.success;
    j["steps"] = record.steps;
    j["path_length"] = record.path_length;
    j["shortest_length"] = record.shortest_length;
    j["spl"] = record.spl;
    j["future_k"] = future_k;
    json poses = json::array();
    for (const auto& p : artifacts.poses) poses.push_back({p.x, p.y, p.heading});
    j["poses"] = poses;
    json actions = json::array();
    for (auto a : artifacts.actions) actions.push_back(mazeworld::action_name(a));
    j["actions"] = actions;
    j["refresh_steps"] = artifacts.refresh_steps;
    j["goal"] = {episode.goal.x, episode.goal.y, episode.goal.heading};
    j["maze"] = json::parse(mazeworld::maze_to_json(*episode.maze));
    io::atomic_write_file(dir / "trajectory.json", j.dump(2));

    save_png(episode.goal_image, dir / "goal.png");
    for (size_t i = 0; i < artifacts.predicted_futures.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "predicted_%02zu.png", i);
        save_png(artifacts.predicted_futures[i], dir / name);
        // what the agent actually saw one horizon later
        const int t = artifacts.refresh_steps[i];
        const size_t horizon =
            std::min(artifacts.observations.size() - 1, static_cast<size_t>(t + future_k));
        std::snprintf(name, sizeof(name), "actual_%02zu.png", i);
        save_png(artifacts.observations[horizon], dir / name);
    }
}

std::pair<int, int> world_to_pixel(const MazeSpec& maze, double x, double y, int px_per_cell) {
    const double sx = x / maze.cell_size * px_per_cell;
    const double sy = y / maze.cell_size * px_per_cell;
    const int h = maze.height * px_per_cell;
    return {static_cast<int>(std::lround(sx)), h - 1 - static_cast<int>(std::lround(sy))};
}

namespace {

void put_px(Image& img, int x, int y, double r, double g, double b) {
    if (x < 0 || y < 0 || x >= img.w || y >= img.h) return;
    img.at(y, x, 0) = r;
    img.at(y, x, 1) = g;
    img.at(y, x, 2) = b;
}

void draw_line(Image& img, int x0, int y0, int x1, int y1, double r, double g, double b) {
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
        put_px(img, x0, y0, r, g, b);
        if (x0 == x1 && y0 == y1) break;
        const int e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x0 += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y0 += sy;
        }
    }
}

void draw_circle(Image& img, int cx, int cy, int radius, double r, double g, double b) {
    int x = radius, y = 0, err = 1 - radius;
    while (x >= y) {
        for (auto [px, py] : {std::pair{x, y}, {y, x}, {-y, x}, {-x, y},
                              {-x, -y}, {-y, -x}, {y, -x}, {x, -y}})
            put_px(img, cx + px, cy + py, r, g, b);
        ++y;
        if (err < 0) {
            err += 2 * y + 1;
        } else {
            --x;
            err += 2 * (y - x) + 1;
        }
    }
}

void draw_marker(Image& img, int cx, int cy, double r, double g, double b) {
    for (int dy = -2; dy <= 2; ++dy)
        for (int dx = -2; dx <= 2; ++dx) put_px(img, cx + dx, cy + dy, r, g, b);
}

}  // namespace

Image draw_trajectory_overlay(const MazeSpec& maze, const std::vector<Pose>& path, const Pose& goal,
                              int px_per_cell) {
    Image img(maze.height * px_per_cell, maze.width * px_per_cell);
    for (int cy = 0; cy < maze.height; ++cy)
        for (int cx = 0; cx < maze.width; ++cx) {
            const bool wall = maze.occupied(cx, cy);
            const double shade = wall ? 0.18 : 0.85;
            for (int py = 0; py < px_per_cell; ++py)
                for (int px = 0; px < px_per_cell; ++px) {
                    const int ix = cx * px_per_cell + px;
                    const int iy = img.h - 1 - (cy * px_per_cell + py);
                    put_px(img, ix, iy, shade, shade, wall ? 0.22 : 0.82);
                }
        }
    const auto [gx, gy] = world_to_pixel(maze, goal.x, goal.y, px_per_cell);
    const int radius_px =
        static_cast<int>(std::lround(mazeworld::kStopRadius / maze.cell_size * px_per_cell));
    draw_circle(img, gx, gy, radius_px, 0.95, 0.8, 0.1);
    draw_marker(img, gx, gy, 0.95, 0.8, 0.1);
    for (size_t i = 1; i < path.size(); ++i) {
        const auto [x0, y0] = world_to_pixel(maze, path[i - 1].x, path[i - 1].y, px_per_cell);
        const auto [x1, y1] = world_to_pixel(maze, path[i].x, path[i].y, px_per_cell);
        draw_line(img, x0, y0, x1, y1, 0.1, 0.75, 0.25);
    }
    if (!path.empty()) {
        const auto [sx, sy] = world_to_pixel(maze, path.front().x, path.front().y, px_per_cell);
        draw_marker(img, sx, sy, 0.2, 0.4, 0.95);
        const auto [ex, ey] = world_to_pixel(maze, path.back().x, path.back().y, px_per_cell);
        draw_marker(img, ex, ey, 0.9, 0.15, 0.15);
    }
    return img;
}

Image draw_frame_strip(const std::vector<Image>& predicted, const std::vector<Image>& actual) {
    if (predicted.empty() || predicted.size() != actual.size())
        throw std::invalid_argument("draw_frame_strip: need equally many predicted and actual frames");
    const int r = predicted[0].h;
    const int sep = 2;
    const int cols = static_cast<int>(predicted.size());
    Image img(2 * r + 3 * sep, cols * (r + sep) + sep, 1.0);
    for (int c = 0; c < cols; ++c) {
        const auto& top = predicted[static_cast<size_t>(c)];
        const auto& bottom = actual[static_cast<size_t>(c)];
        if (top.h != r || bottom.h != r) throw std::invalid_argument("draw_frame_strip: mixed sizes");
        for (int y = 0; y < r; ++y)
            for (int x = 0; x < r; ++x)
                for (int ch = 0; ch < 3; ++ch) {
                    img.at(sep + y, sep + c * (r + sep) + x, ch) = top.at(y, x, ch);
                    img.at(2 * sep + r + y, sep + c * (r + sep) + x, ch) = bottom.at(y, x, ch);
                }
    }
    return img;
}

int emit_plots(const std::filesystem::path& eval_dir, const std::filesystem::path& plots_dir) {
    const auto episodes_dir = eval_dir / "episodes";
    json manifest;
    manifest["version"] = 1;
    manifest["plots"] = json::array();
    if (std::filesystem::exists(eval_dir / "report.json")) {
        std::ifstream is(eval_dir / "report.json");
        json report;
        is >> report;
        if (report.contains("config") && report["config"].contains("config_hash"))
            manifest["config_hash"] = report["config"]["config_hash"];
    }
    int plotted = 0;
    if (std::filesystem::exists(episodes_dir)) {
        std::vector<std::filesystem::path> dirs;
        for (const auto& e : std::filesystem::directory_iterator(episodes_dir))
            if (e.is_directory()) dirs.push_back(e.path());
        std::sort(dirs.begin(), dirs.end());
        for (const auto& dir : dirs) {
            try {
                std::ifstream is(dir / "trajectory.json");
                if (!is) throw std::runtime_error("missing trajectory.json");
                json j;
                is >> j;
                const auto maze = mazeworld::maze_from_json(j.at("maze").dump());
                std::vector<Pose> poses;
                for (const auto& pj : j.at("poses"))
                    poses.push_back({pj.at(0).get<double>(), pj.at(1).get<double>(), pj.at(2).get<double>()});
                const auto& gj = j.at("goal");
                const Pose goal{gj.at(0).get<double>(), gj.at(1).get<double>(), gj.at(2).get<double>()};
                const std::string id = j.at("episode_id").get<std::string>();

                std::filesystem::create_directories(plots_dir);
                const auto overlay_path = plots_dir / (id + "_trajectory.png");
                save_png(draw_trajectory_overlay(maze, poses, goal), overlay_path);
                manifest["plots"].push_back(overlay_path.filename().string());

                std::vector<Image> predicted, actual;
                for (int i = 0;; ++i) {
                    char pname[32], aname[32];
                    std::snprintf(pname, sizeof(pname), "predicted_%02d.png", i);
                    std::snprintf(aname, sizeof(aname), "actual_%02d.png", i);
                    if (!std::filesystem::exists(dir / pname) || !std::filesystem::exists(dir / aname))
                        break;
                    predicted.push_back(load_png(dir / pname));
                    actual.push_back(load_png(dir / aname));
                }
                if (!predicted.empty()) {
                    const auto strip_path = plots_dir / (id + "_frames.png");
                    save_png(draw_frame_strip(predicted, actual), strip_path);
                    manifest["plots"].push_back(strip_path.filename().string());
                }
                ++plotted;
            } catch (const std::exception& e) {
                std::fprintf(stderr, "warning: skipping %s: %s\n", dir.string().c_str(), e.what());
            }
        }
    }
    if (plotted == 0) {
        std::fprintf(stderr, "warning: no episode artifacts under %s; nothing to plot\n",
                     eval_dir.string().c_str());
    }
    std::filesystem::create_directories(plots_dir);
    io::atomic_write_file(plots_dir / "manifest.json", manifest.dump(2));
    return plotted;
}

}  // namespace navlab::harness
