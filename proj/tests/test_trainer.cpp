#include <doctest.h>

#include <cmath>

#include "damo/scene.hpp"
#include "damo/trainer.hpp"

using namespace damo;

namespace {

DamoConfig tiny_config(std::uint64_t seed = 77) {
    DamoConfig cfg;
    cfg.height = 8;
    cfg.width = 16;
    cfg.stage_widths = {6, 8, 10};
    cfg.spm_stages = 2;
    cfg.seed = seed;
    return cfg;
}

std::vector<TrainSample> tiny_dataset(int count, int h) {
    std::vector<TrainSample> data;
    for (int i = 0; i < count; ++i) {
        const Scene s = random_scene(std::uint64_t(1000 + i));
        RenderResult r = render(s, h, 2 * h);
        data.push_back({std::move(r.rgb), std::move(r.depth)});
    }
    return data;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("poly_lr schedule") {
    CHECK(poly_lr(1e-4, 0, 100, 0.9) == 1e-4);
    CHECK(poly_lr(1e-4, 100, 100, 0.9) == 0.0);
    CHECK(poly_lr(2.0, 50, 100, 1.0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(poly_lr(1.0, 25, 100, 0.9) ==
          doctest::Approx(std::pow(0.75, 0.9)).epsilon(1e-15));
    CHECK_THROWS_AS(poly_lr(1e-4, 101, 100, 0.9), UsageError);
}

TEST_CASE("adam first step magnitude is about lr") {
    ModelState m = ModelState::build(tiny_config());
    AdamState adam = AdamState::init(m);
    auto params = m.params();

    ParamGrads grads;
    for (const ParamRef& p : params) {
        grads.names.push_back(p.name);
        grads.values.emplace_back(p.size, 0.0);
    }
    // single nonzero gradient entry
    grads.values[0][0] = 0.37;
    const double before = params[0].data[0];

    adam_step(m, grads, adam, 1e-3);
    const double after = m.params()[0].data[0];
    // first-step identity: |delta| = lr * g / (sqrt(g^2) + eps) ~ lr * sign(g)
    CHECK(std::abs((before - after) - 1e-3) < 1e-9);
    CHECK(m.version() == 2);  // bumped once
}

TEST_CASE("adam zero gradient leaves parameters unchanged") {
    ModelState m = ModelState::build(tiny_config());
    AdamState adam = AdamState::init(m);
    auto params = m.params();

    ParamGrads grads;
    for (const ParamRef& p : params) {
        grads.names.push_back(p.name);
        grads.values.emplace_back(p.size, 0.0);
    }
    std::vector<double> before;
    for (const ParamRef& p : params) {
        before.insert(before.end(), p.data, p.data + p.size);
    }
    // two steps with a nonzero then zero gradient to see moments decay
    grads.values[0][0] = 1.0;
    adam_step(m, grads, adam, 0.0);  // lr 0: parameters untouched, moments move
    CHECK(adam.m[0][0] != 0.0);
    const double m_after_1 = adam.m[0][0];
    grads.values[0][0] = 0.0;
    adam_step(m, grads, adam, 0.0);
    CHECK(std::abs(adam.m[0][0]) < std::abs(m_after_1));  // decayed

    std::size_t k = 0;
    for (const ParamRef& p : m.params()) {
        for (std::size_t i = 0; i < p.size; ++i, ++k) CHECK(p.data[i] == before[k]);
    }
}

TEST_CASE("training two identical runs is bit-identical") {
    auto data = tiny_dataset(3, 8);
    TrainConfig tc;
    tc.base_lr = 1e-3;
    tc.epochs = 2;
    tc.batch_size = 2;
    tc.seed = 5;

    TrainResult a = train(ModelState::build(tiny_config(1)), data, tc);
    TrainResult b = train(ModelState::build(tiny_config(1)), data, tc);
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
        CHECK(a.history[i].mean_loss == b.history[i].mean_loss);
        CHECK(a.history[i].lr == b.history[i].lr);
    }
    auto pa = a.model.params();
    auto pb = b.model.params();
    for (std::size_t i = 0; i < pa.size(); ++i) {
        for (std::size_t k = 0; k < pa[i].size; ++k) {
            CHECK(pa[i].data[k] == pb[i].data[k]);
        }
    }
}

TEST_CASE("lr zero leaves the model unchanged but records history") {
    auto data = tiny_dataset(2, 8);
    ModelState m = ModelState::build(tiny_config(2));
    std::vector<double> before;
    for (const ParamRef& p : m.params()) {
        before.insert(before.end(), p.data, p.data + p.size);
    }
    TrainConfig tc;
    tc.base_lr = 0.0;
    tc.epochs = 1;
    tc.batch_size = 2;
    TrainResult r = train(std::move(m), data, tc);
    CHECK(r.history.size() == 1);
    CHECK(std::isfinite(r.history[0].mean_loss));
    std::size_t k = 0;
    for (const ParamRef& p : r.model.params()) {
        for (std::size_t i = 0; i < p.size; ++i, ++k) CHECK(p.data[i] == before[k]);
    }
}

TEST_CASE("one step moves at least one parameter in every layer class") {
    auto data = tiny_dataset(1, 8);
    ModelState m = ModelState::build(tiny_config(3));
    std::vector<std::string> names;
    std::vector<std::vector<double>> before;
    for (const ParamRef& p : m.params()) {
        names.push_back(p.name);
        before.emplace_back(p.data, p.data + p.size);
    }
    TrainConfig tc;
    tc.base_lr = 1e-3;
    tc.epochs = 1;
    tc.batch_size = 1;
    TrainResult r = train(std::move(m), data, tc);

    const char* classes[] = {"stem.", "enc0.offset", "enc0.spm", "dec", "head"};
    auto after = r.model.params();
    for (const char* cls : classes) {
        bool moved = false;
        for (std::size_t i = 0; i < after.size(); ++i) {
            if (names[i].rfind(cls, 0) != 0) continue;
            for (std::size_t k = 0; k < after[i].size; ++k) {
                if (after[i].data[k] != before[i][k]) moved = true;
            }
        }
        CHECK_MESSAGE(moved, "no parameter moved in class ", cls);
    }
}

namespace {

// window-3 median filter over the per-epoch losses
std::vector<double> median3(const std::vector<EpochRecord>& history) {
    std::vector<double> out;
    for (std::size_t i = 0; i < history.size(); ++i) {
        const double a = history[i > 0 ? i - 1 : 0].mean_loss;
        const double b = history[i].mean_loss;
        const double c = history[std::min(i + 1, history.size() - 1)].mean_loss;
        out.push_back(std::max(std::min(a, b), std::min(std::max(a, b), c)));
    }
    return out;
}

}  // namespace

TEST_CASE("spherical vs uniform weighting: different trajectories, both trending down") {
    auto data = tiny_dataset(2, 8);
    TrainConfig spherical;
    spherical.base_lr = 3e-3;
    spherical.epochs = 16;
    spherical.batch_size = 2;
    spherical.weighting = Weighting::Spherical;
    TrainConfig uniform = spherical;
    uniform.weighting = Weighting::Uniform;

    TrainResult rs = train(ModelState::build(tiny_config(4)), data, spherical);
    TrainResult ru = train(ModelState::build(tiny_config(4)), data, uniform);
    CHECK(rs.history.back().mean_loss != ru.history.back().mean_loss);

    for (const TrainResult* r : {&rs, &ru}) {
        for (const EpochRecord& e : r->history) CHECK(std::isfinite(e.mean_loss));
        const std::vector<double> filtered = median3(r->history);
        CHECK(filtered.back() < filtered.front());
        int increases = 0;
        for (std::size_t i = 0; i + 1 < filtered.size(); ++i) {
            if (filtered[i + 1] > filtered[i] * 1.02) ++increases;
        }
        CHECK(increases <= 1);  // monotone trend after median filtering
    }
}

TEST_CASE("short overfit run decreases the loss") {
    // desk-scale sanity: a few dozen steps on one tiny scene cut the loss
    auto data = tiny_dataset(1, 8);
    TrainConfig tc;
    tc.base_lr = 3e-3;
    tc.epochs = 40;
    tc.batch_size = 1;
    TrainResult r = train(ModelState::build(tiny_config(5)), data, tc);
    CHECK(r.history.back().mean_loss < 0.7 * r.history.front().mean_loss);
}

TEST_CASE("train input validation") {
    TrainConfig tc;
    CHECK_THROWS_AS(train(ModelState::build(tiny_config()), {}, tc), DegenerateInputError);

    auto data = tiny_dataset(1, 8);
    TrainConfig bad;
    bad.epochs = 0;
    CHECK_THROWS_AS(train(ModelState::build(tiny_config()), data, bad), ConfigError);

    auto wrong_dims = tiny_dataset(1, 16);
    CHECK_THROWS_AS(train(ModelState::build(tiny_config()), wrong_dims, tc), ShapeError);
}

}  // TEST_SUITE
