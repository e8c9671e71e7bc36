#include <doctest.h>

#include "helpers.hpp"
#include "morphwin/ops.hpp"
#include "morphwin/wwa.hpp"

using namespace morphwin;
using oracle::TD;
using testutil::to_gate;
using testutil::zero_gate;

namespace {

WindowSequence<double> random_sequence(Rng& rng, std::size_t N, std::size_t K, std::size_t C) {
    // A spec consistent with N windows of K elements, laid out along D.
    return {oracle::random(rng, {N, K, C}), WindowSpec({K, 1, 1}, {0, 0, 0}, {N * K, 1, 1})};
}

}  // namespace

TEST_CASE("zero gate parameters halve each phase") {
    Rng rng(1);
    const auto w = random_sequence(rng, 4, 3, 8);
    const auto c = cross_channel_attention(w, zero_gate(8));
    const auto full = wwa(w, {zero_gate(8), zero_gate(4)});
    for (std::size_t i = 0; i < w.data.numel(); ++i) {
        CHECK(c.data[i] == 0.5 * w.data[i]);
        CHECK(full.data[i] == 0.25 * w.data[i]);
    }
}

TEST_CASE("phases match the loop oracle") {
    Rng rng(2);
    for (int rep = 0; rep < 20; ++rep) {
        const std::size_t N = 1 + rng.below(6), K = 1 + rng.below(5), C = 1 + rng.below(9);
        const auto w = random_sequence(rng, N, K, C);
        const auto mc = oracle::random_mlp(rng, C);
        const auto mw = oracle::random_mlp(rng, N);
        const auto ch = oracle::channel_phase(w.data.values(), N, K, C, mc);
        CHECK(oracle::max_abs_diff(cross_channel_attention(w, to_gate(mc)).data.values(), ch) < 1e-12);

        const auto both = oracle::window_phase(ch, ch, N, K, C, mw);
        CHECK(oracle::max_abs_diff(wwa(w, {to_gate(mc), to_gate(mw)}).data.values(), both) < 1e-12);

        WwaOptions on_original;
        on_original.window_gate_on_original = true;
        const auto alt = oracle::window_phase(ch, w.data.values(), N, K, C, mw);
        CHECK(oracle::max_abs_diff(wwa(w, {to_gate(mc), to_gate(mw)}, on_original).data.values(), alt) < 1e-12);
    }
}

TEST_CASE("single window and single element edge cases") {
    Rng rng(3);
    const auto w = random_sequence(rng, 1, 1, 4);
    const auto mc = oracle::random_mlp(rng, 4);
    const auto mw = oracle::random_mlp(rng, 1);
    const auto got = wwa(w, {to_gate(mc), to_gate(mw)});
    const auto ch = oracle::channel_phase(w.data.values(), 1, 1, 4, mc);
    CHECK(oracle::max_abs_diff(got.data.values(), oracle::window_phase(ch, ch, 1, 1, 4, mw)) < 1e-12);
}

TEST_CASE("gated output never exceeds the input in magnitude") {
    Rng rng(4);
    const auto w = random_sequence(rng, 5, 4, 6);
    const auto mc = oracle::random_mlp(rng, 6);
    const auto mw = oracle::random_mlp(rng, 5);
    const auto out = wwa(w, {to_gate(mc), to_gate(mw)});
    for (std::size_t i = 0; i < out.data.numel(); ++i) CHECK(std::abs(out.data[i]) <= std::abs(w.data[i]));
}

TEST_CASE("permuting elements inside windows commutes with the gate") {
    Rng rng(5);
    const std::size_t N = 3, K = 4, C = 5;
    const auto w = random_sequence(rng, N, K, C);
    const WwaParams<double> p{to_gate(oracle::random_mlp(rng, C)), to_gate(oracle::random_mlp(rng, N))};
    // Reverse the element order of every window.
    std::vector<double> flipped(w.data.numel());
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t c = 0; c < C; ++c) flipped[(n * K + k) * C + c] = w.data[(n * K + (K - 1 - k)) * C + c];
    const auto a = wwa(w, p);
    const auto b = wwa(WindowSequence<double>{TD({N, K, C}, flipped), w.spec}, p);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t c = 0; c < C; ++c)
                CHECK(std::abs(b.data[(n * K + k) * C + c] - a.data[(n * K + (K - 1 - k)) * C + c]) < 1e-14);
}

TEST_CASE("gradients through both phases agree with central differences") {
    Rng rng(6);
    const std::size_t N = 3, K = 2, C = 4;
    const auto w = random_sequence(rng, N, K, C);
    const auto mc = oracle::random_mlp(rng, C);
    const auto mw = oracle::random_mlp(rng, N);
    const auto r = oracle::random(rng, {N, K, C});
    auto loss = [&](const TD& x, const oracle::Mlp& c) {
        return ops::sum(ops::mul(wwa(WindowSequence<double>{x, w.spec}, {to_gate(c), to_gate(mw)}).data, r));
    };

    Tape<double> tape;
    const auto x = tape.watch(w.data);
    oracle::Mlp watched{tape.watch(mc.w1), tape.watch(mc.b1), tape.watch(mc.w2), tape.watch(mc.b2)};
    const auto grads = tape.backward(loss(x, watched));

    const auto gx = grads.of(x).values();
    for (std::size_t i = 0; i < w.data.numel(); ++i) {
        const double fd = oracle::central_difference([&](const TD& y) { return loss(y, mc).item(); }, w.data, i, 1e-5);
        CHECK(oracle::relative_error(gx[i], fd) < 1e-5);
    }
    const auto gw = grads.of(watched.w1).values();
    for (std::size_t i = 0; i < mc.w1.numel(); ++i) {
        const double fd = oracle::central_difference(
            [&](const TD& y) { return loss(w.data, {y, mc.b1, mc.w2, mc.b2}).item(); }, mc.w1, i, 1e-5);
        CHECK(oracle::relative_error(gw[i], fd) < 1e-5);
    }
}
