#include <doctest.h>

#include "morphwin/metrics.hpp"
#include "morphwin/ops.hpp"
#include "oracles.hpp"

using namespace morphwin;
using oracle::TD;

namespace {

LabelMap random_mask(Rng& rng, const Dims3& d, std::size_t classes, double fill) {
    std::vector<Label> v(d[0] * d[1] * d[2]);
    for (auto& x : v) x = rng.uniform() < fill ? static_cast<Label>(1 + rng.below(classes)) : 0;
    return LabelMap(d, v);
}

// phi[v] = A (v - center) + t for a 3x3 matrix A (row = component).
TD linear_field(const Dims3& d, const double (&A)[3][3], const std::array<double, 3>& t = {0, 0, 0}) {
    std::vector<double> v;
    for (std::size_t z = 0; z < d[0]; ++z)
        for (std::size_t y = 0; y < d[1]; ++y)
            for (std::size_t x = 0; x < d[2]; ++x) {
                const double p[3] = {z - d[0] / 2.0, y - d[1] / 2.0, x - d[2] / 2.0};
                for (int r = 0; r < 3; ++r) v.push_back(A[r][0] * p[0] + A[r][1] * p[1] + A[r][2] * p[2] + t[r]);
            }
    return TD({d[0], d[1], d[2], 3}, v);
}

double det_identity_plus(const double (&A)[3][3]) {
    double j[3][3];
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) j[r][c] = A[r][c] + (r == c);
    return j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1]) - j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0]) +
           j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0]);
}

double diffusion_loop(const TD& phi) {
    const std::size_t D = phi.dim(0), H = phi.dim(1), W = phi.dim(2);
    double s = 0;
    auto at = [&](std::size_t z, std::size_t y, std::size_t x, std::size_t c) { return phi[((z * H + y) * W + x) * 3 + c]; };
    for (std::size_t z = 0; z < D; ++z)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x)
                for (std::size_t c = 0; c < 3; ++c) {
                    if (z + 1 < D) s += std::pow(at(z + 1, y, x, c) - at(z, y, x, c), 2);
                    if (y + 1 < H) s += std::pow(at(z, y + 1, x, c) - at(z, y, x, c), 2);
                    if (x + 1 < W) s += std::pow(at(z, y, x + 1, c) - at(z, y, x, c), 2);
                }
    return s / static_cast<double>(D * H * W * 3);
}

}  // namespace

TEST_CASE("mse on literals") {
    CHECK(mse(TD({2}, {0, 0}), TD({2}, {1, 1})).item() == 1);
    Rng rng(1);
    const auto x = oracle::random(rng, {3, 3});
    CHECK(mse(x, x).item() == 0);
    CHECK_THROWS_AS(mse(x, oracle::random(rng, {3, 2})), ShapeError);
}

TEST_CASE("diffusion energy matches the loop oracle and ignores translation") {
    const double shear[3][3] = {{0, 0, 0}, {0, 0, 0}, {0, 0, 1}};
    const auto phi = linear_field({4, 3, 5}, shear);
    CHECK(std::abs(diffusion_regularizer(phi).item() - diffusion_loop(phi)) < 1e-14);
    // x-differences of phi_x are 1 on every voxel that has a right neighbour.
    CHECK(diffusion_regularizer(phi).item() == doctest::Approx(4.0 * 3 * 4 / (4 * 3 * 5 * 3)));
    Rng rng(2);
    const auto r = oracle::random(rng, {4, 3, 5, 3});
    const auto shifted = ops::add(r, TD({3}, {1.5, -2, 0.25}));
    CHECK(std::abs(diffusion_regularizer(r).item() - diffusion_loop(r)) < 1e-14);
    CHECK(std::abs(diffusion_regularizer(shifted).item() - diffusion_regularizer(r).item()) < 1e-12);
    CHECK(diffusion_regularizer(TD::full({3, 3, 3, 3}, 7.0)).item() == 0);
}

TEST_CASE("loss and regulariser gradients agree with central differences") {
    Rng rng(3);
    const auto m = oracle::random(rng, {3, 3, 2, 1});
    const auto f = oracle::random(rng, {3, 3, 2, 1});
    const auto phi = oracle::random(rng, {3, 3, 2, 3}, -0.4, 0.4);
    Tape<double> tape;
    const auto wp = tape.watch(phi), wm = tape.watch(m);
    const auto g = tape.backward(ops::add(mse(wm, f), diffusion_regularizer(wp)));
    const auto gp = g.of(wp).values(), gm = g.of(wm).values();
    for (std::size_t i = 0; i < phi.numel(); ++i) {
        const double fd =
            oracle::central_difference([&](const TD& y) { return diffusion_regularizer(y).item(); }, phi, i, 1e-5);
        CHECK(oracle::relative_error(gp[i], fd) < 1e-7);
    }
    for (std::size_t i = 0; i < m.numel(); ++i) {
        const double fd = oracle::central_difference([&](const TD& y) { return mse(y, f).item(); }, m, i, 1e-5);
        CHECK(oracle::relative_error(gm[i], fd) < 1e-8);
    }
}

TEST_CASE("total loss composes similarity and regularity") {
    Rng rng(4);
    const auto m = oracle::random(rng, {4, 3, 3, 1});
    const auto f = oracle::random(rng, {4, 3, 3, 1});
    const auto zero = TD::zeros({4, 3, 3, 3});
    CHECK(total_loss(m, m, zero).total.item() == 0);
    CHECK(total_loss(m, f, zero).total.item() == mse(m, f).item());
    const auto phi = oracle::random(rng, {4, 3, 3, 3}, -1, 1);
    const auto l0 = total_loss(m, f, phi, 0.0);
    CHECK(l0.total.item() == l0.similarity.item());
    const auto l1 = total_loss(m, f, phi, 0.04), l2 = total_loss(m, f, phi, 0.08);
    CHECK(l2.total.item() - l1.total.item() == doctest::Approx(l1.total.item() - l0.total.item()).epsilon(1e-12));
    CHECK(l1.regularity.item() == doctest::Approx(diffusion_loop(phi)).epsilon(1e-12));
}

TEST_CASE("dice matches set arithmetic") {
    Rng rng(5);
    for (int rep = 0; rep < 30; ++rep) {
        const Dims3 d{1 + rng.below(8), 1 + rng.below(8), 1 + rng.below(8)};
        const auto a = random_mask(rng, d, 3, 0.5), b = random_mask(rng, d, 3, 0.5);
        for (Label l = 1; l <= 3; ++l) {
            CHECK(dice(a, b, l) == oracle::dice(a, b, l));
            CHECK(dice(a, b, l) == dice(b, a, l));
        }
    }
    const LabelMap e = LabelMap::zeros({2, 2, 2});
    CHECK(dice(e, e, 1) == 1);
    CHECK(dice(e, LabelMap({2, 2, 2}, {1, 0, 0, 0, 0, 0, 0, 0}), 1) == 0);
    CHECK_THROWS_AS(dice(e, LabelMap::zeros({2, 2, 1}), 1), Error);
}

TEST_CASE("hd95 matches all-pairs distances") {
    Rng rng(6);
    for (int rep = 0; rep < 30; ++rep) {
        const Dims3 d{2 + rng.below(7), 2 + rng.below(7), 2 + rng.below(7)};
        const std::array<double, 3> s{rng.uniform(0.5, 2), rng.uniform(0.5, 2), rng.uniform(0.5, 2)};
        const auto a = random_mask(rng, d, 2, 0.4), b = random_mask(rng, d, 2, 0.4);
        for (Label l = 1; l <= 2; ++l) {
            if (oracle::voxels(a, l).empty() || oracle::voxels(b, l).empty()) continue;
            const auto got = hd95(a, b, l, s);
            REQUIRE(got.has_value());
            CHECK(std::abs(*got - oracle::hd95(a, b, l, s)) < 1e-9);
        }
    }
}

TEST_CASE("hd95 on hand geometry") {
    auto a = LabelMap::zeros({1, 1, 8}), b = LabelMap::zeros({1, 1, 8});
    a.values[1] = 1;
    b.values[4] = 1;
    CHECK(hd95(a, b, 1).value() == 3.0);
    CHECK(hd95(a, b, 1, {1, 1, 0.5}).value() == 1.5);
    CHECK(hd95(a, a, 1).value() == 0.0);
    CHECK_FALSE(hd95(a, LabelMap::zeros({1, 1, 8}), 1).has_value());
}

TEST_CASE("percentile interpolates between order statistics") {
    CHECK(percentile({1, 2, 3, 4, 10}, 95) == doctest::Approx(8.8));
    CHECK(percentile({3, 1, 2}, 50) == 2);
}

TEST_CASE("folding of linear fields follows the analytic Jacobian sign") {
    Rng rng(7);
    int negative = 0;
    for (int rep = 0; rep < 40; ++rep) {
        double A[3][3];
        for (auto& row : A)
            for (auto& v : row) v = rng.uniform(-1.5, 1.5);
        const double det = det_identity_plus(A);
        if (std::abs(det) < 1e-6) continue;
        const auto phi = linear_field({5, 4, 6}, A, {rng.uniform(-3, 3), 0.5, -1});
        CHECK(folding_ratio(phi) == (det <= 0 ? 100.0 : 0.0));
        negative += det <= 0;
    }
    CHECK(negative > 0);
    const double scale[3][3] = {{0.1, 0, 0}, {0, 0.1, 0}, {0, 0, 0.1}};
    CHECK(folding_ratio(linear_field({4, 4, 4}, scale)) == 0.0);
    CHECK(folding_ratio(TD::zeros({4, 4, 4, 3})) == 0.0);
    CHECK(folding_ratio(TD::zeros({2, 4, 4, 3})) == 0.0);
}

TEST_CASE("reflection inside a block is counted") {
    // phi_x = -2x + c over the whole volume reflects x.
    const double reflect[3][3] = {{0, 0, 0}, {0, 0, 0}, {0, 0, -2}};
    CHECK(folding_ratio(linear_field({3, 3, 5}, reflect)) == 100.0);
}

TEST_CASE("folding ignores translation") {
    Rng rng(8);
    const auto r = oracle::random(rng, {5, 5, 5, 3}, -1.2, 1.2);
    CHECK(folding_ratio(r) == folding_ratio(ops::add(r, TD({3}, {4, -3, 2}))));
}

TEST_CASE("paired t-test against reference values") {
    const auto r = paired_t_test({0.61, 0.72, 0.55, 0.68, 0.70, 0.59, 0.63}, {0.58, 0.69, 0.56, 0.61, 0.66, 0.57, 0.60});
    REQUIRE(r.has_value());
    CHECK(std::abs(r->t - 3.3343135813572666) < 1e-6);
    CHECK(std::abs(r->p - 0.015722266672049203) < 1e-6);
    CHECK(r->dof == 6);
    const auto s = paired_t_test({1, 2, 3, 4, 5.5}, {1.1, 1.7, 3.3, 3.2, 5.0});
    CHECK(std::abs(s->p - 0.29425636802442634) < 1e-6);
    CHECK_FALSE(paired_t_test({1, 2, 3}, {1, 2, 3}).has_value());
    CHECK_FALSE(paired_t_test({2, 3, 4, 5}, {1, 2, 3, 4}).has_value());
    CHECK_THROWS_AS(paired_t_test({1}, {1}), ValidationError);
    CHECK_THROWS_AS(paired_t_test({1, 2}, {1}), ValidationError);
}

TEST_CASE("evaluation report rows") {
    const LabelMap f({1, 2, 4}, {1, 1, 0, 2, 1, 1, 0, 2});
    const auto r = evaluate(f, f, Tensor<float>::zeros({1, 2, 4, 3}));
    REQUIRE(r.labels.size() == 2);
    CHECK(r.mean_dice() == 1.0);
    CHECK(r.mean_hd95().value() == 0.0);
    const auto csv = report_csv(r);
    CHECK(csv.rfind("label,dice,hd95_mm\n", 0) == 0);
    CHECK(csv.find("\nmean,1.000000,0.000000\n") != std::string::npos);
    CHECK(csv.find("\nstd,") != std::string::npos);
    CHECK(csv.find("\nfolding_percent,0.000000\n") != std::string::npos);

    const LabelMap g({1, 2, 4}, {1, 1, 0, 0, 1, 1, 0, 0});
    const auto missing = evaluate(g, f, Tensor<float>::zeros({1, 2, 4, 3}));
    CHECK_FALSE(missing.labels[1].hd95.has_value());
    CHECK_FALSE(missing.labels[1].warning.empty());
    CHECK(report_text(missing).find("undefined") != std::string::npos);
}
