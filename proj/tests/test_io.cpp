#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "damo/io.hpp"
#include "damo/rng.hpp"
#include "damo/scene.hpp"

using namespace damo;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("damo_test_" + std::to_string(std::rand()) + std::to_string(std::rand()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("pfm round trip within float32 rounding") {
    TempDir tmp;
    Rng rng(60);
    Tensor2 img(5, 9, 0.0);
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = rng.uniform(0.01, 100.0);

    const std::string path = tmp.file("map.pfm");
    write_pfm(path, img);
    Tensor2 back = read_pfm(path);
    REQUIRE(back.shape() == img.shape());
    for (std::size_t i = 0; i < img.size(); ++i) {
        CHECK(back[i] == double(float(img[i])));  // exactly the float32 value
    }

    // a second write of the read-back values is byte-identical
    const std::string path2 = tmp.file("map2.pfm");
    write_pfm(path2, back);
    CHECK(slurp(path) == slurp(path2));
}

TEST_CASE("pfm header layout and row order") {
    TempDir tmp;
    Tensor2 img(2, 3, 0.0);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 3; ++j) img.at(i, j) = i * 3.0 + j;
    const std::string path = tmp.file("rows.pfm");
    write_pfm(path, img);

    const std::string bytes = slurp(path);
    CHECK(bytes.substr(0, 3) == "Pf\n");
    CHECK(bytes.substr(3, 4) == "3 2\n");
    // raster starts after "-1.0\n": bottom row first
    const std::size_t raster = bytes.find("-1.0\n") + 5;
    float v = 0.0f;
    std::memcpy(&v, bytes.data() + raster, 4);
    CHECK(v == 3.0f);  // bottom-left entry (row 1, col 0)
}

TEST_CASE("pfm rejects wrong magic") {
    TempDir tmp;
    const std::string path = tmp.file("bad.pfm");
    std::ofstream(path) << "PF\n1 1\n-1.0\nxxxx";
    CHECK_THROWS_AS(read_pfm(path), IoError);
    CHECK_THROWS_AS(read_pfm(tmp.file("missing.pfm")), IoError);
}

TEST_CASE("ppm round trip of quantized values") {
    TempDir tmp;
    Rng rng(61);
    Tensor4 rgb({1, 3, 4, 6}, 0.0);
    for (std::size_t i = 0; i < rgb.size(); ++i) rgb[i] = rng.uniform(0.0, 1.0);

    const std::string path = tmp.file("img.ppm");
    write_ppm(path, rgb);
    Tensor4 back = read_ppm(path);
    REQUIRE(back.shape() == rgb.shape());
    for (std::size_t i = 0; i < rgb.size(); ++i) {
        const double q = std::round(255.0 * rgb[i]) / 255.0;
        CHECK(back[i] == doctest::Approx(q).epsilon(1e-12));
    }

    // write(read(file)) reproduces the file bytes
    const std::string path2 = tmp.file("img2.ppm");
    write_ppm(path2, back);
    CHECK(slurp(path) == slurp(path2));

    // out-of-range values clamp
    Tensor4 hot({1, 3, 1, 1}, 2.0);
    hot.at(0, 1, 0, 0) = -1.0;
    const std::string path3 = tmp.file("hot.ppm");
    write_ppm(path3, hot);
    Tensor4 clamped = read_ppm(path3);
    CHECK(clamped.at(0, 0, 0, 0) == 1.0);
    CHECK(clamped.at(0, 1, 0, 0) == 0.0);
}

TEST_CASE("ppm header comments are skipped") {
    TempDir tmp;
    const std::string path = tmp.file("comment.ppm");
    std::ofstream f(path, std::ios::binary);
    f << "P6\n# a comment line\n2 1\n255\n";
    const unsigned char px[6] = {255, 0, 0, 0, 255, 0};
    f.write(reinterpret_cast<const char*>(px), 6);
    f.close();
    Tensor4 rgb = read_ppm(path);
    CHECK(rgb.at(0, 0, 0, 0) == 1.0);
    CHECK(rgb.at(0, 1, 0, 1) == 1.0);
}

TEST_CASE("checkpoint round trip is bit exact") {
    TempDir tmp;
    DamoConfig cfg;
    cfg.height = 8;
    cfg.width = 16;
    cfg.stage_widths = {6, 8};
    cfg.spm_stages = 1;
    cfg.seed = 1234;
    ModelState m = ModelState::build(cfg);

    const std::string path = tmp.file("model.ckpt");
    save_checkpoint(path, m);
    ModelState back = load_checkpoint(path);
    CHECK(back.config() == cfg);

    auto pa = m.params();
    auto pb = back.params();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i].name == pb[i].name);
        REQUIRE(pa[i].size == pb[i].size);
        for (std::size_t k = 0; k < pa[i].size; ++k) {
            CHECK(pa[i].data[k] == pb[i].data[k]);
        }
    }

    // saving the loaded model reproduces the bytes
    const std::string path2 = tmp.file("model2.ckpt");
    save_checkpoint(path2, back);
    CHECK(slurp(path) == slurp(path2));
}

TEST_CASE("checkpoint corrupt magic is rejected") {
    TempDir tmp;
    const std::string path = tmp.file("bad.ckpt");
    std::ofstream(path, std::ios::binary) << "NOTMAGIC" << std::string(64, '\0');
    CHECK_THROWS_AS(load_checkpoint(path), IoError);
}

TEST_CASE("loss csv layout") {
    TempDir tmp;
    const std::string path = tmp.file("loss.csv");
    write_loss_csv(path, {{0, 0.5, 1e-4}, {1, 0.25, 5e-5}});
    const std::string bytes = slurp(path);
    CHECK(bytes.rfind("epoch,mean_loss,lr\n", 0) == 0);
    CHECK(bytes.find("\n0,0.5,") != std::string::npos);
    CHECK(bytes.find("\n1,0.25,") != std::string::npos);
}

TEST_CASE("manifest round trip and dataset loading") {
    TempDir tmp;
    const int H = 8, W = 16;
    DatasetManifest manifest;
    manifest.height = H;
    manifest.width = W;
    for (int i = 0; i < 2; ++i) {
        const std::uint64_t seed = 500 + std::uint64_t(i);
        const Scene scene = random_scene(seed);
        RenderResult r = render(scene, H, W);
        const std::string rgb_name = "scene_" + std::to_string(i) + ".ppm";
        const std::string depth_name = "scene_" + std::to_string(i) + ".pfm";
        write_ppm(tmp.file(rgb_name), r.rgb);
        write_pfm(tmp.file(depth_name), r.depth.depth);
        manifest.scenes.push_back({seed, rgb_name, depth_name});
    }
    write_manifest(tmp.file("manifest.json"), manifest);

    DatasetManifest back = read_manifest(tmp.file("manifest.json"));
    CHECK(back.height == H);
    CHECK(back.width == W);
    REQUIRE(back.scenes.size() == 2);
    CHECK(back.scenes[0].seed == 500);
    CHECK(back.scenes[1].rgb == "scene_1.ppm");

    std::vector<TrainSample> data = load_dataset(tmp.path.string());
    REQUIRE(data.size() == 2);
    CHECK(data[0].rgb.shape() == Shape4{1, 3, H, W});
    CHECK(data[0].depth.depth.shape() == Shape2{H, W});
    for (std::size_t i = 0; i < data[0].depth.mask.size(); ++i) {
        CHECK(data[0].depth.mask[i] == 1.0);
    }

    // manifest seed replay reproduces the stored pair up to file quantization
    const Scene replay = random_scene(back.scenes[0].seed);
    RenderResult r2 = render(replay, H, W);
    for (std::size_t i = 0; i < r2.depth.depth.size(); ++i) {
        CHECK(data[0].depth.depth[i] == double(float(r2.depth.depth[i])));
    }
}

TEST_CASE("manifest errors") {
    TempDir tmp;
    CHECK_THROWS_AS(read_manifest(tmp.file("none.json")), IoError);
    std::ofstream(tmp.file("broken.json")) << "{ not json";
    CHECK_THROWS_AS(read_manifest(tmp.file("broken.json")), IoError);
    std::ofstream(tmp.file("empty.json")) << "{}";
    CHECK_THROWS_AS(read_manifest(tmp.file("empty.json")), IoError);
}

}  // TEST_SUITE
