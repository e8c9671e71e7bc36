#include <doctest.h>

#include "helpers.hpp"
#include "morphwin/ops.hpp"
#include "morphwin/rfrnet.hpp"
#include "morphwin/warp.hpp"

using namespace morphwin;
using oracle::TD;
using TF = Tensor<float>;

namespace {

ArchConfig toy() {
    ArchConfig a;
    a.channels = 8;
    a.window = {2, 2, 2};
    a.heads = {2, 2, 2, 2};
    a.input_dims = {16, 8, 8};
    return a;
}

TF image(Rng& rng, const Dims3& d, double scale = 1.0) {
    std::vector<float> v(d[0] * d[1] * d[2]);
    for (auto& x : v) x = static_cast<float>(scale * rng.uniform());
    return TF({d[0], d[1], d[2], 1}, v);
}

ParamSet<float> with_random_head(ParamSet<float> p, std::uint64_t seed) {
    Rng rng(seed);
    for (const char* name : {"head.weight", "head.bias"}) {
        const auto& t = p.get(name);
        std::vector<float> v(t.numel());
        for (auto& x : v) x = static_cast<float>(rng.uniform(-0.05, 0.05));
        p.set(name, TF(t.shape(), v));
    }
    return p;
}

}  // namespace

TEST_CASE("stage plan for the desk-scale volume") {
    ArchConfig a;
    a.channels = 32;
    a.heads = {2, 2, 4, 4};
    a.input_dims = {48, 32, 16};
    const auto plan = plan_architecture(a);
    CHECK(plan.stages[0].dims == Dims3{12, 8, 4});
    CHECK(plan.stages[0].windows == 2 * 2 * 2);
    CHECK(plan.stages[1].dims == Dims3{6, 4, 2});
    CHECK(plan.stages[2].dims == Dims3{3, 2, 1});
    CHECK(plan.stages[2].window == Dims3{3, 2, 1});
    CHECK(plan.stages[3].dims == Dims3{2, 1, 1});
    CHECK(plan.stages[3].channels == 256);
    CHECK(plan.decoder_widths == std::vector<std::size_t>{64, 32, 16, 8, 5});
}

TEST_CASE("invalid architectures name the field") {
    auto a = toy();
    a.channels = 12;
    CHECK_THROWS_WITH_AS(plan_architecture(a), doctest::Contains("channels"), ValidationError);
    a = toy();
    a.input_dims = {18, 8, 8};
    CHECK_THROWS_AS(plan_architecture(a), ValidationError);
    a = toy();
    a.heads = {3, 2, 2, 2};
    CHECK_THROWS_AS(plan_architecture(a), ValidationError);
}

TEST_CASE("embedding reaches quarter resolution with C channels") {
    ArchConfig a;
    a.channels = 16;
    a.input_dims = {48, 32, 16};
    const auto p = init_params(a, 1);
    Rng rng(2);
    const auto x = ops::concat<float>({image(rng, a.input_dims), image(rng, a.input_dims)}, 3);
    TF half;
    const auto y = scpe(x, p, &half);
    CHECK(y.shape() == Shape{12, 8, 4, 16});
    CHECK(half.shape() == Shape{24, 16, 8, 8});
}

TEST_CASE("patch merging and expanding match loop oracles") {
    Rng rng(3);
    for (int rep = 0; rep < 10; ++rep) {
        const std::size_t C = 2 * (1 + rng.below(3));
        const Dims3 d{2 * (1 + rng.below(3)), 2 * (1 + rng.below(2)), 2 * (1 + rng.below(2))};
        const auto x = oracle::random(rng, {d[0], d[1], d[2], C});
        const auto wm = oracle::random(rng, {8 * C, 2 * C});
        CHECK(oracle::max_abs_diff(patch_merging(x, wm).values(), oracle::patch_merging(x, wm)) < 1e-12);
        const auto we = oracle::random(rng, {C, 4 * C});
        const auto up = patch_expanding(x, we);
        CHECK(up.shape() == Shape{2 * d[0], 2 * d[1], 2 * d[2], C / 2});
        CHECK(oracle::max_abs_diff(up.values(), oracle::patch_expanding(x, we)) < 1e-12);
    }
}

TEST_CASE("zero-initialised head gives an identity warp") {
    const auto a = toy();
    const auto p = init_params(a, 4);
    Rng rng(5);
    const auto m = image(rng, a.input_dims), f = image(rng, a.input_dims);
    const auto phi = forward(m, f, p, a);
    CHECK(phi.shape() == Shape{16, 8, 8, 3});
    for (float v : phi.values()) CHECK(v == 0.0f);
    CHECK(warp_trilinear(m, phi).values() == m.values());
}

TEST_CASE("ablations drop their parameters") {
    auto a = toy();
    const auto full = init_params(a, 0);
    const auto no_rb = init_params(ablation_config(a, true, false), 0);
    const auto no_wwa = init_params(ablation_config(a, false, true), 0);
    const auto none = init_params(ablation_config(a, true, true), 0);
    CHECK(none.scalar_count() < no_rb.scalar_count());
    CHECK(none.scalar_count() < no_wwa.scalar_count());
    CHECK(no_rb.scalar_count() < full.scalar_count());
    CHECK(no_wwa.scalar_count() < full.scalar_count());
    CHECK(full.contains("recovery.expand0.weight"));
    CHECK_FALSE(no_rb.contains("recovery.expand0.weight"));
    CHECK(full.contains("encoder.stage1.block0.wwa.channel.fc1.weight"));
    CHECK_FALSE(no_wwa.contains("encoder.stage1.block0.wwa.channel.fc1.weight"));
    CHECK(full.entries().front().first == "scpe.conv0.weight");
    CHECK(full.entries().back().first == "head.bias");
}

TEST_CASE("every ablation runs forward") {
    const auto a = toy();
    Rng rng(6);
    const auto m = image(rng, a.input_dims), f = image(rng, a.input_dims);
    for (auto [rb, w] : {std::pair{true, false}, std::pair{false, true}, std::pair{true, true}}) {
        const auto cfg = ablation_config(a, rb, w);
        const auto p = with_random_head(init_params(cfg, 7), 8);
        const auto phi = forward(m, f, p, cfg);
        CHECK(phi.shape() == Shape{16, 8, 8, 3});
        for (float v : phi.values()) CHECK(std::isfinite(v));
    }
}

TEST_CASE("initialisation and forward are deterministic") {
    const auto a = toy();
    const auto p1 = with_random_head(init_params(a, 9), 1);
    const auto p2 = with_random_head(init_params(a, 9), 1);
    REQUIRE(p1.size() == p2.size());
    for (std::size_t i = 0; i < p1.size(); ++i) CHECK(p1.entries()[i].second.values() == p2.entries()[i].second.values());
    CHECK(init_params(a, 10).get("scpe.conv0.weight").values() != p1.get("scpe.conv0.weight").values());
    Rng rng(2);
    const auto m = image(rng, a.input_dims), f = image(rng, a.input_dims);
    CHECK(forward(m, f, p1, a).values() == forward(m, f, p2, a).values());
}

TEST_CASE("odd stage dims are padded and cropped back") {
    auto a = toy();
    a.window = {6, 2, 2};
    a.input_dims = {24, 8, 8};  // depth 6, 3, 2, 1 over the stages
    const auto plan = plan_architecture(a);
    CHECK(plan.stages[1].dims == Dims3{3, 1, 1});
    CHECK(plan.stages[2].dims == Dims3{2, 1, 1});
    const auto p = with_random_head(init_params(a, 3), 4);
    Rng rng(5);
    const auto phi = forward(image(rng, a.input_dims), image(rng, a.input_dims), p, a);
    CHECK(phi.shape() == Shape{24, 8, 8, 3});
    for (float v : phi.values()) CHECK(std::isfinite(v));

    a.window = {2, 2, 2};  // a clamped extent of 2 does not divide depth 3
    CHECK_THROWS_WITH_AS(plan_architecture(a), doctest::Contains("stage2"), ValidationError);
}

TEST_CASE("doubled intensities stay finite") {
    const auto a = toy();
    const auto p = with_random_head(init_params(a, 11), 12);
    Rng rng(13);
    const auto phi = forward(image(rng, a.input_dims, 2.0), image(rng, a.input_dims, 2.0), p, a);
    for (float v : phi.values()) CHECK(std::isfinite(v));
}

TEST_CASE("double precision forward agrees with single precision") {
    const auto a = toy();
    const auto p = with_random_head(init_params(a, 14), 15);
    Rng rng(16);
    const auto m = image(rng, a.input_dims), f = image(rng, a.input_dims);
    const auto single = forward(m, f, p, a);
    const auto dbl = forward(m.cast<double>(), f.cast<double>(), p.cast<double>(), a);
    double worst = 0, scale = 0;
    for (std::size_t i = 0; i < single.numel(); ++i) {
        worst = std::max(worst, std::abs(single[i] - dbl[i]));
        scale = std::max(scale, std::abs(dbl[i]));
    }
    CHECK(worst <= 1e-4 * std::max(scale, 1e-3));
}
