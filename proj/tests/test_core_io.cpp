#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "navlab/core/checkpoint.hpp"
#include "navlab/core/image.hpp"
#include "navlab/core/ops.hpp"
#include "navlab/core/rng.hpp"

using namespace navlab;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    auto dir = fs::temp_directory_path() / "navlab_test_io";
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("checkpoint round-trips doubles exactly") {
    Rng rng(1);
    auto a = nd::randn({3, 4}, rng);
    auto b = nd::randn({7}, rng);
    const auto path = temp_dir() / "ck.bin";
    io::save_tensors(path, {{"a", a}, {"b", b}});

    auto a2 = nd::Tensor::zeros({3, 4});
    auto b2 = nd::Tensor::zeros({7});
    io::load_tensors_into(path, {{"a", a2}, {"b", b2}});
    CHECK(a.values() == a2.values());
    CHECK(b.values() == b2.values());
}

TEST_CASE("checkpoint refuses bad version, missing names, corrupt data") {
    Rng rng(2);
    auto a = nd::randn({4}, rng);
    const auto path = temp_dir() / "ck2.bin";
    io::save_tensors(path, {{"a", a}});

    auto dest = nd::Tensor::zeros({4});
    CHECK_THROWS(io::load_tensors_into(path, {{"wrong_name", dest}}));
    CHECK_THROWS(io::load_tensors_into(path, {{"a", nd::Tensor::zeros({5})}}));

    // flip the version field
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);
    const uint32_t bad = 999;
    f.write(reinterpret_cast<const char*>(&bad), sizeof(bad));
    f.close();
    CHECK_THROWS(io::load_tensors_into(path, {{"a", dest}}));

    // truncated file
    const auto trunc = temp_dir() / "ck3.bin";
    io::save_tensors(trunc, {{"a", a}});
    fs::resize_file(trunc, fs::file_size(trunc) - 8);
    CHECK_THROWS(io::load_tensors_into(trunc, {{"a", dest}}));
}

TEST_CASE("png round-trip is exact on the 8-bit lattice") {
    Image img(9, 7);
    Rng rng(3);
    for (auto& v : img.px) v = std::round(rng.uniform() * 255.0) / 255.0;
    const auto path = temp_dir() / "img.png";
    save_png(img, path);
    const Image back = load_png(path);
    REQUIRE(back.h == img.h);
    REQUIRE(back.w == img.w);
    for (size_t i = 0; i < img.px.size(); ++i) CHECK(back.px[i] == doctest::Approx(img.px[i]).epsilon(1e-12));
}

TEST_CASE("png quantization error bounded by half a step") {
    Image img(5, 5);
    Rng rng(4);
    for (auto& v : img.px) v = rng.uniform();
    const auto path = temp_dir() / "img2.png";
    save_png(img, path);
    const Image back = load_png(path);
    for (size_t i = 0; i < img.px.size(); ++i) CHECK(std::fabs(back.px[i] - img.px[i]) <= 0.5 / 255.0 + 1e-12);
}

TEST_CASE("tensor <-> image round trip") {
    Image img(6, 4);
    Rng rng(5);
    for (auto& v : img.px) v = rng.uniform();
    const auto t = image_to_tensor(img);
    REQUIRE(t.shape() == nd::Shape{3, 6, 4});
    const Image back = tensor_to_image(t);
    CHECK(back == img);
}

TEST_CASE("rng streams are deterministic and namespaced") {
    Rng a(7), b(7);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    CHECK(derive_seed(7, "x") != derive_seed(7, "y"));
    CHECK(derive_seed(7, "x", 0) != derive_seed(7, "x", 1));
    CHECK(derive_seed(7, "x", 3) == derive_seed(7, "x", 3));
}

TEST_CASE("rng normal moments are sane") {
    Rng rng(8);
    double sum = 0.0, sq = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double v = rng.normal();
        sum += v;
        sq += v * v;
    }
    CHECK(std::fabs(sum / n) < 0.01);
    CHECK(std::fabs(sq / n - 1.0) < 0.02);
}
