#include <doctest.h>

#include "morphwin/ops.hpp"
#include "morphwin/warp.hpp"
#include "oracles.hpp"

using namespace morphwin;
using oracle::TD;

namespace {

TD constant_field(const Dims3& d, double dz, double dy, double dx) {
    std::vector<double> v;
    for (std::size_t i = 0; i < d[0] * d[1] * d[2]; ++i) v.insert(v.end(), {dz, dy, dx});
    return TD({d[0], d[1], d[2], 3}, v);
}

LabelMap random_labels(Rng& rng, const Dims3& d, std::size_t classes) {
    std::vector<Label> v(d[0] * d[1] * d[2]);
    for (auto& x : v) x = static_cast<Label>(rng.below(classes));
    return LabelMap(d, v);
}

}  // namespace

TEST_CASE("sampling grid enumerates voxel coordinates") {
    const auto g = sampling_grid<double>({2, 3, 4});
    CHECK(g.at({1, 2, 3, 0}) == 1);
    CHECK(g.at({1, 2, 3, 1}) == 2);
    CHECK(g.at({1, 2, 3, 2}) == 3);
}

TEST_CASE("zero field reproduces the image") {
    Rng rng(1);
    const auto img = oracle::random(rng, {4, 5, 3, 2});
    CHECK(warp_trilinear(img, TD::zeros({4, 5, 3, 3})).values() == img.values());
    CHECK(warp_trilinear(img, TD::zeros({4, 5, 3, 3}), Border::Zero).values() == img.values());
}

TEST_CASE("integer shift moves the content") {
    Rng rng(2);
    const Dims3 d{5, 4, 3};
    const auto img = oracle::random(rng, {5, 4, 3, 1});
    const auto out = warp_trilinear(img, constant_field(d, 1, 0, -1));
    for (std::size_t z = 0; z + 1 < 5; ++z)
        for (std::size_t y = 0; y < 4; ++y)
            for (std::size_t x = 1; x < 3; ++x) CHECK(out.at({z, y, x, 0}) == img.at({z + 1, y, x - 1, 0}));
}

TEST_CASE("trilinear warp matches the loop oracle for both borders") {
    Rng rng(3);
    for (int rep = 0; rep < 20; ++rep) {
        const Dims3 d{1 + rng.below(5), 1 + rng.below(5), 1 + rng.below(5)};
        const auto img = oracle::random(rng, {d[0], d[1], d[2], 1 + rng.below(2)});
        const auto phi = oracle::random(rng, {d[0], d[1], d[2], 3}, -2.5, 2.5);
        CHECK(oracle::max_abs_diff(warp_trilinear(img, phi).values(), oracle::warp_trilinear(img, phi, false)) < 1e-12);
        CHECK(oracle::max_abs_diff(warp_trilinear(img, phi, Border::Zero).values(),
                                   oracle::warp_trilinear(img, phi, true)) < 1e-12);
    }
}

TEST_CASE("nearest warp rounds half up and matches the loop oracle") {
    const LabelMap m({1, 1, 3}, {1, 2, 3});
    CHECK(warp_nearest(m, constant_field({1, 1, 3}, 0, 0, 0.49)).values == std::vector<Label>{1, 2, 3});
    CHECK(warp_nearest(m, constant_field({1, 1, 3}, 0, 0, 0.5)).values == std::vector<Label>{2, 3, 3});
    CHECK(warp_nearest(m, constant_field({1, 1, 3}, 0, 0, -0.51)).values == std::vector<Label>{1, 1, 2});
    Rng rng(4);
    for (int rep = 0; rep < 20; ++rep) {
        const Dims3 d{1 + rng.below(5), 1 + rng.below(5), 1 + rng.below(5)};
        const auto labels = random_labels(rng, d, 4);
        const auto phi = oracle::random(rng, {d[0], d[1], d[2], 3}, -3, 3);
        CHECK(warp_nearest(labels, phi) == oracle::warp_nearest(labels, phi));
    }
}

TEST_CASE("warp is linear in the image") {
    Rng rng(5);
    const auto a = oracle::random(rng, {3, 4, 5, 1});
    const auto b = oracle::random(rng, {3, 4, 5, 1});
    const auto phi = oracle::random(rng, {3, 4, 5, 3}, -1.5, 1.5);
    const auto lhs = warp_trilinear(ops::add(ops::mul(a, 2.0), b), phi).values();
    const auto wa = warp_trilinear(a, phi).values(), wb = warp_trilinear(b, phi).values();
    for (std::size_t i = 0; i < lhs.size(); ++i) CHECK(std::abs(lhs[i] - (2 * wa[i] + wb[i])) < 1e-12);
}

TEST_CASE("clamped warp stays inside the image range") {
    Rng rng(6);
    const auto img = oracle::random(rng, {4, 4, 4, 1}, 0.2, 0.7);
    const auto out = warp_trilinear(img, oracle::random(rng, {4, 4, 4, 3}, -6, 6));
    for (double v : out.values()) {
        CHECK(v >= 0.2 - 1e-12);
        CHECK(v <= 0.7 + 1e-12);
    }
}

TEST_CASE("warp gradients agree with central differences away from grid lines") {
    Rng rng(7);
    const auto img = oracle::random(rng, {3, 4, 3, 1});
    // Keep sample positions off integer coordinates.
    std::vector<double> pv(3 * 4 * 3 * 3);
    for (auto& v : pv) v = std::floor(rng.uniform(-1, 2)) + rng.uniform(0.1, 0.9);
    const TD phi({3, 4, 3, 3}, pv);
    const auto r = oracle::random(rng, {3, 4, 3, 1});
    for (Border border : {Border::Clamp, Border::Zero}) {
        auto loss = [&](const TD& i, const TD& p) { return ops::sum(ops::mul(warp_trilinear(i, p, border), r)); };
        Tape<double> tape;
        const auto wi = tape.watch(img), wp = tape.watch(phi);
        const auto g = tape.backward(loss(wi, wp));
        const auto gi = g.of(wi).values(), gp = g.of(wp).values();
        for (std::size_t k = 0; k < img.numel(); ++k) {
            const double fd = oracle::central_difference([&](const TD& y) { return loss(y, phi).item(); }, img, k, 1e-5);
            CHECK(std::abs(gi[k] - fd) <= 1e-6 * std::max(1.0, std::abs(fd)));
        }
        for (std::size_t k = 0; k < phi.numel(); ++k) {
            const double fd = oracle::central_difference([&](const TD& y) { return loss(img, y).item(); }, phi, k, 1e-5);
            CHECK(std::abs(gp[k] - fd) <= 1e-6 * std::max(1.0, std::abs(fd)));
        }
    }
}

TEST_CASE("mismatched field shape is rejected") {
    CHECK_THROWS_AS(warp_trilinear(TD::zeros({2, 2, 2, 1}), TD::zeros({2, 2, 3, 3})), ShapeError);
}
