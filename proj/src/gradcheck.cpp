#include "morphwin/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "morphwin/metrics.hpp"
#include "morphwin/ops.hpp"
#include "morphwin/rfrnet.hpp"
#include "morphwin/swin.hpp"
#include "morphwin/warp.hpp"
#include "morphwin/wwa.hpp"

namespace morphwin {

double relative_error(double analytic, double numeric, double floor) {
    const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / scale;
}

namespace {

template <class F>
double derivative(F&& f, double x, double h) {
    return (f(x + h) - f(x - h)) / (2 * h);
}

using TD = Tensor<double>;

TD uniform(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return TD(std::move(shape), std::move(v));
}

// Magnitudes in [0.1, 1] with random sign, clear of kinks at zero.
TD nonzero(Rng& rng, Shape shape) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = rng.uniform(0.1, 1.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
    return TD(std::move(shape), std::move(v));
}

// Displacements whose sample positions stay a safe distance from integers.
TD field(Rng& rng, Shape shape) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = static_cast<double>(static_cast<long>(rng.below(3)) - 1) + rng.uniform(0.1, 0.9);
    return TD(std::move(shape), std::move(v));
}

TD with_value(const TD& t, std::size_t i, double value) {
    auto v = t.values();
    v[i] = value;
    return TD(t.shape(), std::move(v));
}

GateMlp<double> random_gate(Rng& rng, std::size_t n) {
    const auto h = gate_hidden_size(n);
    return {uniform(rng, {n, h}), uniform(rng, {h}), uniform(rng, {h, n}), uniform(rng, {n})};
}

GateMlp<double> gate_from(const std::vector<TD>& x, std::size_t first) {
    return {x[first], x[first + 1], x[first + 2], x[first + 3]};
}

std::vector<TD> gate_tensors(const GateMlp<double>& g) { return {g.fc1_weight, g.fc1_bias, g.fc2_weight, g.fc2_bias}; }

}  // namespace

GradcheckLine check_gradient(const std::string& name, const ScalarFn& f, const std::vector<TD>& inputs,
                             const GradcheckOptions& options, Rng& rng) {
    Tape<double> tape;
    std::vector<TD> watched;
    for (const auto& x : inputs) watched.push_back(tape.watch(x));
    const auto out = f(watched);
    if (out.numel() != 1) throw ShapeError("check_gradient: '" + name + "' does not return a scalar");
    const auto grads = tape.backward(out);

    GradcheckLine line;
    line.name = name;
    line.tolerance = options.tolerance;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const auto analytic = grads.of(watched[i]);
        const auto n = inputs[i].numel();
        std::vector<std::size_t> coords(n);
        for (std::size_t k = 0; k < n; ++k) coords[k] = k;
        if (n > options.max_coords) {
            for (std::size_t k = 0; k < options.max_coords; ++k) std::swap(coords[k], coords[k + rng.below(n - k)]);
            coords.resize(options.max_coords);
        }
        for (auto k : coords) {
            auto args = inputs;
            const double x0 = inputs[i][k];
            const double numeric = derivative(
                [&](double x) {
                    args[i] = with_value(inputs[i], k, x);
                    return f(args).item();
                },
                x0, options.eps);
            line.worst = std::max(line.worst, relative_error(analytic[k], numeric, options.floor));
            ++line.coords;
        }
    }
    return line;
}

GradcheckLine check_op(const std::string& name, const ScalarFn& f, const std::vector<TD>& inputs,
                       const GradcheckOptions& options, Rng& rng) {
    const auto probe = f(inputs);
    const auto weights = uniform(rng, probe.shape());
    ScalarFn reduced = [&f, weights](const std::vector<TD>& x) { return ops::sum(ops::mul(f(x), weights)); };
    return check_gradient(name, reduced, inputs, options, rng);
}

bool GradcheckReport::pass() const {
    return std::all_of(lines.begin(), lines.end(), [](const GradcheckLine& l) { return l.pass(); });
}

std::string GradcheckReport::text() const {
    std::ostringstream os;
    std::size_t width = 0;
    for (const auto& l : lines) width = std::max(width, l.name.size());
    for (const auto& l : lines) {
        os << (l.pass() ? "PASS " : "FAIL ") << std::left << std::setw(static_cast<int>(width)) << l.name << "  worst "
           << std::scientific << std::setprecision(3) << l.worst << "  tol " << l.tolerance << "  coords " << l.coords
           << "\n";
    }
    os << (pass() ? "gradcheck passed" : "gradcheck FAILED") << "\n";
    return os.str();
}

GradcheckLine end_to_end_gradcheck(const GradcheckOptions& options) {
    Rng rng(options.seed ^ 0xe2e);
    ArchConfig cfg;
    cfg.channels = 8;
    cfg.heads = {2, 2, 2, 2};
    cfg.window = {2, 2, 2};
    cfg.input_dims = {16, 8, 8};

    // Random non-trivial parameters so the field is non-zero and samples
    // fall between grid points.
    const auto initial = init_params(cfg, options.seed);
    ParamSet<double> params;
    for (const auto& [name, t] : initial.entries()) {
        const bool head = name.rfind("head.", 0) == 0;
        std::vector<double> v(t.numel());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = t[i] + (head ? 0.05 : 0.1) * rng.normal();
        params.add(name, TD(t.shape(), std::move(v)));
    }
    const Shape img{16, 8, 8, 1};
    const auto moving = uniform(rng, img, 0.0, 1.0);
    const auto fixed = uniform(rng, img, 0.0, 1.0);
    auto loss_of = [&](const ParamSet<double>& p) { return total_loss(moving, fixed, forward(moving, fixed, p, cfg), 0.04).total; };

    Tape<double> tape;
    const auto attached = params.attach(tape);
    const auto grads = attached.gradients(tape.backward(loss_of(attached)));

    const auto& entries = params.entries();
    std::vector<std::pair<std::size_t, std::size_t>> coords;
    for (std::size_t i = 0; i < entries.size(); ++i) coords.emplace_back(i, rng.below(entries[i].second.numel()));
    while (coords.size() < options.e2e_min_coords) {
        const auto i = rng.below(entries.size());
        coords.emplace_back(i, rng.below(entries[i].second.numel()));
    }

    std::vector<double> analytic, numeric;
    for (const auto& [i, k] : coords) {
        const auto& [name, t] = entries[i];
        auto perturbed = params;
        numeric.push_back(derivative(
            [&](double x) {
                perturbed.set(name, with_value(t, k, x));
                return loss_of(perturbed).item();
            },
            t[k], options.e2e_eps));
        analytic.push_back(grads(name)[k]);
    }

    // Coordinates far below the largest sampled gradient are compared on an
    // absolute scale tied to it.
    double scale = 0;
    for (double a : analytic) scale = std::max(scale, std::abs(a));
    const double floor = std::max(options.e2e_floor, options.e2e_relative_floor * scale);

    GradcheckLine line;
    line.name = "end_to_end";
    line.tolerance = options.e2e_tolerance;
    line.coords = coords.size();
    for (std::size_t j = 0; j < coords.size(); ++j) {
        line.worst = std::max(line.worst, relative_error(analytic[j], numeric[j], floor));
    }
    return line;
}

GradcheckReport run_gradcheck(const GradcheckOptions& o) {
    Rng rng(o.seed);
    GradcheckReport r;
    auto op = [&](const std::string& name, const ScalarFn& f, const std::vector<TD>& inputs, double tolerance = 0) {
        auto options = o;
        if (tolerance > 0) options.tolerance = tolerance;
        r.lines.push_back(check_op(name, f, inputs, options, rng));
    };

    // Elementwise.
    op("add", [](auto& x) { return ops::add(x[0], x[1]); }, {uniform(rng, {3, 4}), uniform(rng, {4})});
    op("sub", [](auto& x) { return ops::sub(x[0], x[1]); }, {uniform(rng, {3, 1}), uniform(rng, {2, 1, 4})});
    op("mul", [](auto& x) { return ops::mul(x[0], x[1]); }, {uniform(rng, {2, 3, 4}), uniform(rng, {3, 1})});
    op("div", [](auto& x) { return ops::div(x[0], x[1]); }, {uniform(rng, {3, 4}), nonzero(rng, {3, 4})});
    op("add_scalar", [](auto& x) { return ops::add(x[0], 0.7); }, {uniform(rng, {2, 3})});
    op("mul_scalar", [](auto& x) { return ops::mul(x[0], -1.3); }, {uniform(rng, {2, 3})});
    op("neg", [](auto& x) { return ops::neg(x[0]); }, {uniform(rng, {5})});
    op("square", [](auto& x) { return ops::square(x[0]); }, {uniform(rng, {2, 5})});
    op("sigmoid", [](auto& x) { return ops::sigmoid(x[0]); }, {uniform(rng, {2, 5}, -4, 4)});
    op("leaky_relu", [](auto& x) { return ops::leaky_relu(x[0], 0.2); }, {nonzero(rng, {3, 5})});
    op("exp", [](auto& x) { return ops::exp(x[0]); }, {uniform(rng, {2, 5})});
    op("sqrt", [](auto& x) { return ops::sqrt(x[0]); }, {uniform(rng, {2, 5}, 0.5, 2.0)});

    // Contractions.
    op("matmul", [](auto& x) { return ops::matmul(x[0], x[1]); }, {uniform(rng, {2, 1, 3, 4}), uniform(rng, {3, 4, 2})});
    op("linear", [](auto& x) { return ops::linear(x[0], x[1], &x[2]); },
       {uniform(rng, {2, 3, 4}), uniform(rng, {4, 5}), uniform(rng, {5})});
    op("conv3d", [](auto& x) { return ops::conv3d(x[0], x[1], 1, 1); },
       {uniform(rng, {4, 3, 5, 2}), uniform(rng, {3, 3, 3, 2, 3})});
    op("conv3d_stride2", [](auto& x) { return ops::conv3d(x[0], x[1], 2, 1); },
       {uniform(rng, {4, 4, 5, 2}), uniform(rng, {3, 3, 3, 2, 2})});

    // Normalization and reductions.
    op("layer_norm", [](auto& x) { return ops::layer_norm(x[0], x[1], x[2], 1e-5); },
       {uniform(rng, {3, 6}), uniform(rng, {6}, 0.5, 1.5), uniform(rng, {6})});
    op("softmax", [](auto& x) { return ops::softmax(x[0], 1); }, {uniform(rng, {3, 5}, -2, 2)});
    op("softmax_axis0", [](auto& x) { return ops::softmax(x[0], 0); }, {uniform(rng, {4, 3}, -2, 2)});
    op("reduce_mean", [](auto& x) { return ops::reduce_mean(x[0], {0, 2}); }, {uniform(rng, {2, 3, 4})});
    op("reduce_sum", [](auto& x) { return ops::reduce_sum(x[0], {1}); }, {uniform(rng, {2, 3, 4})});
    op("sum", [](auto& x) { return ops::sum(x[0]); }, {uniform(rng, {3, 4})});
    op("mean", [](auto& x) { return ops::mean(x[0]); }, {uniform(rng, {3, 4})});

    // Data movement.
    op("reshape", [](auto& x) { return ops::reshape(x[0], {4, 3}); }, {uniform(rng, {2, 6})});
    op("permute", [](auto& x) { return ops::permute(x[0], {2, 0, 1}); }, {uniform(rng, {2, 3, 4})});
    op("concat", [](auto& x) { return ops::concat<double>({x[0], x[1]}, 1); }, {uniform(rng, {2, 3}), uniform(rng, {2, 2})});
    op("slice", [](auto& x) { return ops::slice(x[0], 1, 1, 2); }, {uniform(rng, {3, 4})});
    op("expand", [](auto& x) { return ops::expand(x[0], {2, 3, 4}); }, {uniform(rng, {3, 1})});
    op("pad", [](auto& x) { return ops::pad(x[0], {{1, 0}, {0, 2}}); }, {uniform(rng, {2, 3})});
    op("roll", [](auto& x) { return ops::roll(x[0], {1, -2}); }, {uniform(rng, {3, 4})});
    op("index_select", [](auto& x) { return ops::index_select(x[0], {2, 0, 2, 1}); }, {uniform(rng, {3, 2})});

    // Warping.
    op("warp_trilinear", [](auto& x) { return warp_trilinear(x[0], x[1], Border::Clamp); },
       {uniform(rng, {4, 5, 3, 1}), field(rng, {4, 5, 3, 3})});
    op("warp_trilinear_zero", [](auto& x) { return warp_trilinear(x[0], x[1], Border::Zero); },
       {uniform(rng, {4, 5, 3, 2}), field(rng, {4, 5, 3, 3})});

    // Windowing.
    const WindowSpec shifted({2, 2, 2}, {1, 1, 1}, {4, 4, 2});
    op("window_partition", [&](auto& x) { return window_partition(x[0], shifted).data; }, {uniform(rng, {4, 4, 2, 3})});
    op("window_reverse", [&](auto& x) { return window_reverse(WindowSequence<double>{x[0], shifted}); },
       {uniform(rng, {4, 8, 3})});
    op("cyclic_shift", [&](auto& x) { return cyclic_shift(x[0], shifted.shift, ShiftDirection::Forward); },
       {uniform(rng, {4, 4, 2, 3})});

    // Window attention with relative position bias and shift mask.
    const std::size_t heads = 2, c = 4;
    const auto mask = shifted_window_mask<double>(shifted);
    auto attention = [&](const std::vector<TD>& x) {
        AttentionParams<double> p{x[1], x[2], x[3], x[4], x[5], relative_position_index(shifted.window), heads};
        return window_msa(WindowSequence<double>{x[0], shifted}, p, &mask).data;
    };
    op("window_attention", attention,
       {uniform(rng, {4, 8, c}), uniform(rng, {c, 3 * c}), uniform(rng, {3 * c}), uniform(rng, {c, c}),
        uniform(rng, {c}), uniform(rng, {relative_table_rows(shifted.window), heads})});

    // Weighted window attention, phase by phase.
    const WindowSpec plain({2, 2, 2}, {0, 0, 0}, {4, 4, 4});
    const std::size_t n = plain.count(), k = plain.elements(), cw = 8;
    op("wwa_channel_mean", [](auto& x) { return ops::reduce_mean(x[0], {1}); }, {uniform(rng, {n, k, cw})});
    {
        auto inputs = gate_tensors(random_gate(rng, cw));
        inputs.insert(inputs.begin(), uniform(rng, {n, k, cw}));
        op("wwa_channel_gate",
           [&](auto& x) { return cross_channel_attention(WindowSequence<double>{x[0], plain}, gate_from(x, 1)).data; },
           inputs, o.component_tolerance);
    }
    op("wwa_window_mean", [](auto& x) { return ops::permute(ops::reduce_mean(x[0], {2}), {1, 0}); },
       {uniform(rng, {n, k, cw})});
    {
        auto inputs = gate_tensors(random_gate(rng, n));
        inputs.insert(inputs.begin(), uniform(rng, {n, k, cw}));
        op("wwa_window_gate",
           [&](auto& x) { return cross_window_attention(WindowSequence<double>{x[0], plain}, gate_from(x, 1)).data; },
           inputs, o.component_tolerance);
    }
    for (bool on_original : {false, true}) {
        auto inputs = gate_tensors(random_gate(rng, cw));
        for (auto& t : gate_tensors(random_gate(rng, n))) inputs.push_back(t);
        inputs.insert(inputs.begin(), uniform(rng, {n, k, cw}));
        WwaOptions wo;
        wo.window_gate_on_original = on_original;
        op(on_original ? "wwa_gate_on_original" : "wwa",
           [&, wo](auto& x) {
               WwaParams<double> p{gate_from(x, 1), gate_from(x, 5)};
               return wwa(WindowSequence<double>{x[0], plain}, p, wo).data;
           },
           inputs, o.component_tolerance);
    }

    // Transformer block pair (regular then shifted) with weighted windows.
    {
        const std::size_t bc = 4, stage_heads = 2;
        const Dims3 dims{4, 4, 4};
        const Dims3 window{2, 2, 2};
        const auto windows = WindowSpec::for_stage(window, dims, false).count();
        std::vector<TD> inputs{uniform(rng, {dims[0], dims[1], dims[2], bc})};
        auto add_block = [&]() {
            inputs.push_back(uniform(rng, {bc}, 0.5, 1.5));
            inputs.push_back(uniform(rng, {bc}, -0.2, 0.2));
            for (auto& t : {uniform(rng, {bc, 3 * bc}, -0.5, 0.5), uniform(rng, {3 * bc}, -0.2, 0.2),
                            uniform(rng, {bc, bc}, -0.5, 0.5), uniform(rng, {bc}, -0.2, 0.2),
                            uniform(rng, {relative_table_rows(window), stage_heads}, -0.2, 0.2)}) {
                inputs.push_back(t);
            }
            inputs.push_back(uniform(rng, {bc}, 0.5, 1.5));
            inputs.push_back(uniform(rng, {bc}, -0.2, 0.2));
            for (auto& t : {uniform(rng, {bc, 4 * bc}, -0.5, 0.5), uniform(rng, {4 * bc}, -0.2, 0.2),
                            uniform(rng, {4 * bc, bc}, -0.5, 0.5), uniform(rng, {bc}, -0.2, 0.2)}) {
                inputs.push_back(t);
            }
            for (auto& t : gate_tensors(random_gate(rng, bc))) inputs.push_back(t);
            for (auto& t : gate_tensors(random_gate(rng, windows))) inputs.push_back(t);
        };
        add_block();
        add_block();
        auto view = [&](const std::vector<TD>& x, std::size_t at) {
            SwinBlockParams<double> b;
            b.norm1_gamma = x[at];
            b.norm1_beta = x[at + 1];
            b.attn = {x[at + 2], x[at + 3], x[at + 4], x[at + 5], x[at + 6], relative_position_index(window), stage_heads};
            b.norm2_gamma = x[at + 7];
            b.norm2_beta = x[at + 8];
            b.mlp_fc1_weight = x[at + 9];
            b.mlp_fc1_bias = x[at + 10];
            b.mlp_fc2_weight = x[at + 11];
            b.mlp_fc2_bias = x[at + 12];
            b.wwa = WwaParams<double>{gate_from(x, at + 13), gate_from(x, at + 17)};
            return b;
        };
        SwinOptions so;
        so.window = window;
        op("swin_block_pair",
           [&, so](auto& x) { return swin_block_pair(x[0], SwinBlockPairParams<double>{view(x, 1), view(x, 22)}, so); },
           inputs, o.block_tolerance);
    }

    // Network pieces.
    op("patch_merging", [](auto& x) { return patch_merging(x[0], x[1]); }, {uniform(rng, {2, 4, 2, 2}), uniform(rng, {16, 4})});
    op("patch_expanding", [](auto& x) { return patch_expanding(x[0], x[1]); },
       {uniform(rng, {2, 1, 2, 4}), uniform(rng, {4, 16})});
    op("conv_block", [](auto& x) { return conv_block(x[0], x[1], x[2], 1); },
       {uniform(rng, {3, 4, 3, 2}), uniform(rng, {3, 3, 3, 2, 2}), uniform(rng, {2})});

    // Objective.
    op("mse", [](auto& x) { return mse(x[0], x[1]); }, {uniform(rng, {3, 4, 2, 1}), uniform(rng, {3, 4, 2, 1})});
    op("diffusion_regularizer", [](auto& x) { return diffusion_regularizer(x[0]); }, {uniform(rng, {3, 4, 2, 3})});
    op("total_loss", [](auto& x) { return total_loss(x[0], x[1], x[2], 0.04).total; },
       {uniform(rng, {4, 3, 3, 1}), uniform(rng, {4, 3, 3, 1}), field(rng, {4, 3, 3, 3})});

    if (o.end_to_end) r.lines.push_back(end_to_end_gradcheck(o));
    return r;
}

}  // namespace morphwin
