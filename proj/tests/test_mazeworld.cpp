#include <doctest.h>

#include <algorithm>
#include <deque>
#include <memory>

#include "maze_fixtures.hpp"
#include "navlab/mazeworld/env.hpp"
#include "navlab/mazeworld/maze.hpp"
#include "navlab/mazeworld/render.hpp"

using namespace navlab;
using namespace navlab::mazeworld;
using navlab::testing::corridor_maze;
using navlab::testing::custom_maze;
using navlab::testing::random_connected_grid;
using navlab::testing::reference_bfs;

TEST_CASE("generate_maze: deterministic, bounded, connected") {
    const MazeSpec a = generate_maze(7, 11, 11);
    const MazeSpec b = generate_maze(7, 11, 11);
    CHECK(a.grid == b.grid);
    CHECK(a.palette == b.palette);
    CHECK(generate_maze(8, 11, 11).grid != a.grid);

    for (uint64_t seed : {1ull, 2ull, 3ull, 4ull}) {
        for (auto [w, h] : {std::pair{11, 11}, {15, 9}, {21, 21}}) {
            const MazeSpec m = generate_maze(seed, w, h);
            // boundary fully occupied
            for (int x = 0; x < w; ++x) {
                CHECK(m.occupied(x, 0));
                CHECK(m.occupied(x, h - 1));
            }
            for (int y = 0; y < h; ++y) {
                CHECK(m.occupied(0, y));
                CHECK(m.occupied(w - 1, y));
            }
            // all free cells mutually reachable (flood fill from first free cell)
            const auto cells = m.free_cells();
            REQUIRE(!cells.empty());
            const auto dist = reference_bfs(m, cells[0].first, cells[0].second);
            for (auto [cx, cy] : cells) CHECK(dist[static_cast<size_t>(cy) * w + cx] >= 0);
        }
    }
}

TEST_CASE("generate_maze rejects bad dimensions") {
    CHECK_THROWS_AS(generate_maze(1, 4, 11), std::invalid_argument);
    CHECK_THROWS_AS(generate_maze(1, 11, 16), std::invalid_argument);
    CHECK_THROWS_AS(generate_maze(1, 3, 3), std::invalid_argument);
}

TEST_CASE("maze json round-trip") {
    const MazeSpec m = generate_maze(5, 13, 11);
    const MazeSpec back = maze_from_json(maze_to_json(m));
    CHECK(back == m);
    CHECK_THROWS(maze_from_json("{\"version\":2}"));
}

TEST_CASE("render_ego: contract checks") {
    const MazeSpec m = custom_maze(3, 3, {{1, 1}});
    const Pose center{m.center_x(1), m.center_y(1), 0.0};
    CHECK_THROWS_AS(render_ego(m, center, 8, 90.0), std::invalid_argument);
    CHECK_THROWS_AS(render_ego(m, center, 32, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(render_ego(m, center, 32, 180.0), std::invalid_argument);
    CHECK_THROWS_AS(render_ego(m, Pose{0.1, 0.1, 0.0}, 32, 90.0), std::invalid_argument);

    const Image img = render_ego(m, center, 32, 90.0);
    CHECK(img.h == 32);
    CHECK(img.w == 32);
    for (double v : img.px) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("render_ego: single-room symmetry (equal wall heights, 4 headings)") {
    const MazeSpec m = custom_maze(3, 3, {{1, 1}});
    std::vector<int> heights_per_heading;
    for (double heading : {0.0, 90.0, 180.0, 270.0}) {
        std::vector<ColumnHit> hits;
        render_ego(m, Pose{m.center_x(1), m.center_y(1), heading}, 64, 90.0, &hits);
        for (const auto& h : hits) CHECK(h.wall_height == hits[0].wall_height);
        heights_per_heading.push_back(hits[0].wall_height);
    }
    for (int h : heights_per_heading) CHECK(h == heights_per_heading[0]);
}

TEST_CASE("render_ego: twelve TURN_LEFTs reproduce the initial frame exactly") {
    const MazeSpec m = generate_maze(3, 11, 11);
    const auto cells = m.free_cells();
    Pose pose{m.center_x(cells[2].first), m.center_y(cells[2].second), 60.0};
    const Image initial = render_ego(m, pose, 48, 90.0);
    for (int i = 0; i < 12; ++i) pose = apply_action(m, pose, Action::turn_left).pose;
    CHECK(pose.heading == 60.0);
    CHECK(render_ego(m, pose, 48, 90.0) == initial);
}

TEST_CASE("render_ego: wall height monotonically non-increasing in distance") {
    const MazeSpec m = corridor_maze(10);
    std::vector<ColumnHit> hits;
    render_ego(m, Pose{m.center_x(1), m.center_y(1), 15.0}, 64, 90.0, &hits);
    auto sorted = hits;
    std::sort(sorted.begin(), sorted.end(),
              [](const ColumnHit& a, const ColumnHit& b) { return a.perp_distance < b.perp_distance; });
    for (size_t i = 1; i < sorted.size(); ++i) CHECK(sorted[i].wall_height <= sorted[i - 1].wall_height);
}

TEST_CASE("render is a pure function of (maze, pose, resolution, fov)") {
    const MazeSpec m = generate_maze(11, 13, 13);
    const auto cells = m.free_cells();
    const Pose pose{m.center_x(cells[5].first), m.center_y(cells[5].second), 30.0};
    CHECK(render_ego(m, pose, 32, 90.0) == render_ego(m, pose, 32, 90.0));
}

namespace {

EpisodeSpec corridor_episode(const std::shared_ptr<const MazeSpec>& maze, double start_x_cells,
                             double goal_x_cells, int max_steps = 60) {
    EpisodeSpec ep;
    ep.maze = maze;
    ep.resolution = 32;
    ep.fov_deg = 90.0;
    ep.max_steps = max_steps;
    ep.episode_id = "test-corridor";
    const double cy = maze->center_y(1);
    ep.start = Pose{maze->cell_size * start_x_cells, cy, 0.0};
    ep.goal = Pose{maze->cell_size * goal_x_cells, cy, 0.0};
    ep.goal_image = render_ego(*maze, ep.goal, ep.resolution, ep.fov_deg);
    ep.shortest_length = geodesic_distance(*maze, ep.start, ep.goal);
    return ep;
}

}  // namespace

TEST_CASE("step: turn arithmetic and collision semantics") {
    auto maze = std::make_shared<const MazeSpec>(corridor_maze(10));
    auto ep = corridor_episode(maze, 1.5, 9.5);
    ep.start.heading = 90.0;
    Env env(ep);

    auto r1 = env.step(Action::turn_left);
    CHECK(r1.pose.heading == 120.0);
    CHECK_FALSE(r1.collided);
    auto r2 = env.step(Action::turn_right);
    CHECK(r2.pose.heading == 90.0);

    // MOVE_FORWARD straight into the wall above: no slide, pose unchanged
    const Pose before = env.pose();
    auto r3 = env.step(Action::move_forward);
    CHECK(r3.collided);
    CHECK(r3.pose.x == before.x);
    CHECK(r3.pose.y == before.y);
    CHECK(env.path_length() == 0.0);
}

TEST_CASE("step: STOP within 0.8m succeeds; step after done throws") {
    auto maze = std::make_shared<const MazeSpec>(corridor_maze(10));
    // start 0.8m west of the goal
    auto ep = corridor_episode(maze, 1.5, 1.5 + 0.8 / 0.5);
    Env env(ep);
    auto res = env.step(Action::stop);
    CHECK(res.done);
    CHECK(res.success);
    CHECK_THROWS_AS(env.step(Action::stop), std::logic_error);
}

TEST_CASE("step: timeout is failure even inside the stop radius") {
    auto maze = std::make_shared<const MazeSpec>(corridor_maze(10));
    auto ep = corridor_episode(maze, 1.5, 2.5, /*max_steps=*/2);
    Env env(ep);
    env.step(Action::turn_left);
    auto res = env.step(Action::turn_right);
    CHECK(res.done);
    CHECK_FALSE(res.success);
}

TEST_CASE("step: success requires explicit STOP and radius") {
    auto maze = std::make_shared<const MazeSpec>(corridor_maze(12));
    auto ep = corridor_episode(maze, 1.5, 9.5);
    Env env(ep);
    auto res = env.step(Action::stop);  // far from goal
    CHECK(res.done);
    CHECK_FALSE(res.success);
}

TEST_CASE("closure + heading quantization under random action sequences") {
    const MazeSpec m = generate_maze(21, 15, 15);
    auto maze = std::make_shared<const MazeSpec>(m);
    const auto cells = m.free_cells();
    Rng rng(99);
    Pose pose{m.center_x(cells[3].first), m.center_y(cells[3].second),
              30.0 * static_cast<double>(rng.uniform_int(12))};
    for (int i = 0; i < 2000; ++i) {
        const auto a = static_cast<Action>(rng.uniform_int(3));  // never STOP
        pose = apply_action(m, pose, a).pose;
        CHECK(m.pose_in_free_cell(pose));
        CHECK(std::fmod(pose.heading, 30.0) == 0.0);
        CHECK(pose.heading >= 0.0);
        CHECK(pose.heading < 360.0);
    }
}

TEST_CASE("geodesic: identity, adjacency, symmetry, triangle") {
    const MazeSpec m = generate_maze(13, 11, 11);
    const auto cells = m.free_cells();
    const Pose a{m.center_x(cells[0].first), m.center_y(cells[0].second), 0.0};
    CHECK(geodesic_distance(m, a, a) == 0.0);

    // find an orthogonally adjacent free pair
    for (auto [cx, cy] : cells) {
        if (!m.occupied(cx + 1, cy)) {
            const Pose p{m.center_x(cx), m.center_y(cy), 0.0};
            const Pose q{m.center_x(cx + 1), m.center_y(cy), 0.0};
            CHECK(geodesic_distance(m, p, q) == doctest::Approx(0.5));
            break;
        }
    }

    Rng rng(5);
    for (int it = 0; it < 20; ++it) {
        const auto [ax, ay] = cells[rng.uniform_index(static_cast<int>(cells.size()))];
        const auto [bx, by] = cells[rng.uniform_index(static_cast<int>(cells.size()))];
        const auto [ccx, ccy] = cells[rng.uniform_index(static_cast<int>(cells.size()))];
        const Pose pa{m.center_x(ax), m.center_y(ay), 0.0};
        const Pose pb{m.center_x(bx), m.center_y(by), 0.0};
        const Pose pc{m.center_x(ccx), m.center_y(ccy), 0.0};
        const double ab = geodesic_distance(m, pa, pb);
        CHECK(ab == geodesic_distance(m, pb, pa));
        CHECK(ab <= geodesic_distance(m, pa, pc) + geodesic_distance(m, pc, pb) + 1e-12);
    }

    CHECK_THROWS_AS(geodesic_distance(m, Pose{0.1, 0.1, 0.0}, a), std::invalid_argument);
}

TEST_CASE("geodesic equals an independent BFS on random connected grids") {
    for (uint64_t seed : {10ull, 11ull, 12ull, 13ull, 14ull}) {
        const MazeSpec m = random_connected_grid(16, 16, 0.35, seed);
        const auto cells = m.free_cells();
        REQUIRE(cells.size() >= 2);
        const auto [gx, gy] = cells[cells.size() / 2];
        const auto field = bfs_field(m, gx, gy);
        const auto ref = reference_bfs(m, gx, gy);
        for (auto [cx, cy] : cells)
            CHECK(field.hops_at(cx, cy) == ref[static_cast<size_t>(cy) * m.width + cx]);
    }
}

TEST_CASE("make_episode: contract and determinism") {
    auto maze = std::make_shared<const MazeSpec>(generate_maze(31, 13, 13));
    const auto ep = make_episode(maze, 77, 1.0, 4.0, 32, 90.0, 100);
    CHECK(ep.goal_image == render_ego(*maze, ep.goal, 32, 90.0));
    CHECK(ep.shortest_length >= 1.0);
    CHECK(ep.shortest_length <= 4.0);
    CHECK(ep.shortest_length == geodesic_distance(*maze, ep.start, ep.goal));
    CHECK((ep.start.x != ep.goal.x || ep.start.y != ep.goal.y));

    const auto ep2 = make_episode(maze, 77, 1.0, 4.0, 32, 90.0, 100);
    CHECK(ep2.start.x == ep.start.x);
    CHECK(ep2.goal.heading == ep.goal.heading);
    CHECK(ep2.goal_image == ep.goal_image);

    // impossible bounds are signaled
    CHECK_THROWS_AS(make_episode(maze, 5, 500.0, 600.0, 32, 90.0, 100), std::runtime_error);
}
