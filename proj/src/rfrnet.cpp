#include "morphwin/rfrnet.hpp"

#include <cmath>

#include "morphwin/ops.hpp"
#include "morphwin/rng.hpp"

namespace morphwin {

namespace {

constexpr double kSlope = 0.2;
constexpr double kLinearStd = 0.02;

std::string stage_name(std::size_t s) { return "encoder.stage" + std::to_string(s + 1); }
std::string block_name(std::size_t s, std::size_t b) { return stage_name(s) + ".block" + std::to_string(b); }
std::string decoder_name(std::size_t i) { return "decoder.stage" + std::to_string(i); }

Dims3 half_up(const Dims3& d) { return {(d[0] + 1) / 2, (d[1] + 1) / 2, (d[2] + 1) / 2}; }

std::string dims_str(const Dims3& d) {
    return std::to_string(d[0]) + "x" + std::to_string(d[1]) + "x" + std::to_string(d[2]);
}

// Skip-connection widths for decoder stages 1/16 .. full.
std::array<std::size_t, 5> skip_widths(std::size_t c) { return {4 * c, 2 * c, c, c / 2, c / 4}; }

template <class T>
Tensor<T> pad_even(const Tensor<T>& x) {
    std::vector<std::pair<std::size_t, std::size_t>> pads(4, {0, 0});
    bool any = false;
    for (std::size_t a = 0; a < 3; ++a) {
        if (x.dim(a) % 2 != 0) {
            pads[a].second = 1;
            any = true;
        }
    }
    return any ? ops::pad(x, pads) : x;
}

template <class T>
Tensor<T> crop(const Tensor<T>& x, const Shape& like) {
    Tensor<T> out = x;
    for (std::size_t a = 0; a < 3; ++a) {
        if (out.dim(a) != like[a]) out = ops::slice(out, a, 0, like[a]);
    }
    return out;
}

template <class T>
GateMlp<T> gate_view(const ParamSet<T>& p, const std::string& prefix) {
    return {p(prefix + ".fc1.weight"), p(prefix + ".fc1.bias"), p(prefix + ".fc2.weight"), p(prefix + ".fc2.bias")};
}

template <class T>
SwinBlockParams<T> block_view(const ParamSet<T>& p, const std::string& prefix, const StagePlan& stage, bool wwa) {
    SwinBlockParams<T> b;
    b.norm1_gamma = p(prefix + ".norm1.gamma");
    b.norm1_beta = p(prefix + ".norm1.beta");
    b.attn.qkv_weight = p(prefix + ".attn.qkv.weight");
    b.attn.qkv_bias = p(prefix + ".attn.qkv.bias");
    b.attn.proj_weight = p(prefix + ".attn.proj.weight");
    b.attn.proj_bias = p(prefix + ".attn.proj.bias");
    b.attn.bias_table = p(prefix + ".attn.relative_bias");
    b.attn.relative_index = relative_position_index(stage.window);
    b.attn.heads = stage.heads;
    b.norm2_gamma = p(prefix + ".norm2.gamma");
    b.norm2_beta = p(prefix + ".norm2.beta");
    b.mlp_fc1_weight = p(prefix + ".mlp.fc1.weight");
    b.mlp_fc1_bias = p(prefix + ".mlp.fc1.bias");
    b.mlp_fc2_weight = p(prefix + ".mlp.fc2.weight");
    b.mlp_fc2_bias = p(prefix + ".mlp.fc2.bias");
    if (wwa) b.wwa = WwaParams<T>{gate_view(p, prefix + ".wwa.channel"), gate_view(p, prefix + ".wwa.window")};
    return b;
}

class Initializer {
public:
    explicit Initializer(std::uint64_t seed) : rng_(seed) {}

    void linear(const std::string& name, std::size_t in, std::size_t out, bool bias) {
        std::vector<float> w(in * out);
        for (auto& v : w) v = static_cast<float>(rng_.truncated_normal(kLinearStd));
        params_.add(name + ".weight", Tensor<float>({in, out}, std::move(w)));
        if (bias) params_.add(name + ".bias", Tensor<float>::zeros({out}));
    }

    void conv(const std::string& name, std::size_t k, std::size_t in, std::size_t out, bool zero = false) {
        const double fan_in = static_cast<double>(k * k * k * in);
        const double std = std::sqrt(2.0 / (1.0 + kSlope * kSlope)) / std::sqrt(fan_in);
        std::vector<float> w(k * k * k * in * out, 0.0f);
        if (!zero) {
            for (auto& v : w) v = static_cast<float>(std * rng_.normal());
        }
        params_.add(name + ".weight", Tensor<float>({k, k, k, in, out}, std::move(w)));
        params_.add(name + ".bias", Tensor<float>::zeros({out}));
    }

    void norm(const std::string& name, std::size_t c) {
        params_.add(name + ".gamma", Tensor<float>::full({c}, 1.0f));
        params_.add(name + ".beta", Tensor<float>::zeros({c}));
    }

    void table(const std::string& name, std::size_t rows, std::size_t cols) {
        std::vector<float> w(rows * cols);
        for (auto& v : w) v = static_cast<float>(rng_.truncated_normal(kLinearStd));
        params_.add(name, Tensor<float>({rows, cols}, std::move(w)));
    }

    void gate(const std::string& name, std::size_t n) {
        linear(name + ".fc1", n, gate_hidden_size(n), true);
        linear(name + ".fc2", gate_hidden_size(n), n, true);
    }

    ParamSet<float> take() { return std::move(params_); }

private:
    Rng rng_;
    ParamSet<float> params_;
};

}  // namespace

std::vector<std::size_t> default_decoder_widths(std::size_t channels) {
    return {2 * channels, channels, channels / 2, channels / 4, std::max<std::size_t>(4, channels / 6)};
}

ArchPlan plan_architecture(const ArchConfig& cfg) {
    const auto c = cfg.channels;
    if (c == 0 || c % 8 != 0) throw ValidationError("channels must be a positive multiple of 8, got " + std::to_string(c));
    if (cfg.blocks_per_stage == 0 || cfg.blocks_per_stage % 2 != 0) {
        throw ValidationError("blocks_per_stage must be a positive even number");
    }
    for (std::size_t a = 0; a < 3; ++a) {
        if (cfg.input_dims[a] == 0 || cfg.input_dims[a] % 4 != 0) {
            throw ValidationError("input dims " + dims_str(cfg.input_dims) + " must be positive multiples of 4");
        }
        if (cfg.window[a] == 0) throw ValidationError("window extents must be positive");
    }

    ArchPlan plan;
    plan.input = cfg.input_dims;
    plan.half = {cfg.input_dims[0] / 2, cfg.input_dims[1] / 2, cfg.input_dims[2] / 2};
    Dims3 dims{cfg.input_dims[0] / 4, cfg.input_dims[1] / 4, cfg.input_dims[2] / 4};
    for (std::size_t s = 0; s < 4; ++s) {
        if (s > 0) dims = half_up(dims);
        auto& st = plan.stages[s];
        st.dims = dims;
        st.channels = c << s;
        st.heads = cfg.heads[s];
        st.pairs = cfg.blocks_per_stage / 2;
        if (st.heads == 0 || st.channels % st.heads != 0) {
            throw ValidationError(stage_name(s) + ": " + std::to_string(st.channels) + " channels not divisible by " +
                                  std::to_string(st.heads) + " heads");
        }
        try {
            const auto spec = WindowSpec::for_stage(cfg.window, dims, false);
            st.window = spec.window;
            st.windows = spec.count();
        } catch (const ValidationError& e) {
            throw ValidationError(stage_name(s) + " (" + dims_str(dims) + "): " + e.what());
        }
    }

    plan.decoder_widths = cfg.decoder_widths.empty() ? default_decoder_widths(c) : cfg.decoder_widths;
    if (plan.decoder_widths.size() != 5) throw ValidationError("decoder_widths needs 5 entries");
    for (std::size_t i = 0; i < 5; ++i) {
        const auto w = plan.decoder_widths[i];
        if (w == 0 || (i < 4 && w % 2 != 0)) {
            throw ValidationError("decoder width " + std::to_string(i) + " must be positive" + (i < 4 ? " and even" : ""));
        }
    }
    return plan;
}

ArchConfig ablation_config(const ArchConfig& base, bool drop_rb, bool drop_wwa) {
    ArchConfig out = base;
    if (drop_rb) out.recovery_branch = false;
    if (drop_wwa) out.wwa = false;
    return out;
}

ParamSet<float> init_params(const ArchConfig& cfg, std::uint64_t seed) {
    const auto plan = plan_architecture(cfg);
    const auto c = cfg.channels;
    Initializer init(seed);

    init.conv("scpe.conv0", 3, 2, c / 2);
    init.conv("scpe.conv1", 3, c / 2, c);
    init.conv("scpe.conv2", 3, c, c);

    for (std::size_t s = 0; s < 4; ++s) {
        const auto& st = plan.stages[s];
        const auto ch = st.channels;
        if (s > 0) init.linear("encoder.merge" + std::to_string(s + 1), 4 * ch, ch, false);
        for (std::size_t b = 0; b < 2 * st.pairs; ++b) {
            const auto name = block_name(s, b);
            init.norm(name + ".norm1", ch);
            if (cfg.wwa) {
                init.gate(name + ".wwa.channel", ch);
                init.gate(name + ".wwa.window", st.windows);
            }
            init.linear(name + ".attn.qkv", ch, 3 * ch, true);
            init.table(name + ".attn.relative_bias", relative_table_rows(st.window), st.heads);
            init.linear(name + ".attn.proj", ch, ch, true);
            init.norm(name + ".norm2", ch);
            init.linear(name + ".mlp.fc1", ch, 4 * ch, true);
            init.linear(name + ".mlp.fc2", 4 * ch, ch, true);
        }
    }

    if (cfg.recovery_branch) {
        init.linear("recovery.expand0", c, 4 * c, false);
        init.linear("recovery.expand1", c / 2, 2 * c, false);
    } else {
        init.conv("shortcut.half", 1, c / 2, c / 2);
        init.conv("shortcut.full", 1, 2, c / 4);
    }

    const auto skips = skip_widths(c);
    std::size_t prev = 8 * c;
    for (std::size_t i = 0; i < 5; ++i) {
        const auto width = plan.decoder_widths[i];
        init.linear(decoder_name(i) + ".expand", prev, 4 * prev, false);
        init.conv(decoder_name(i) + ".conv0", 3, prev / 2 + skips[i], width);
        init.conv(decoder_name(i) + ".conv1", 3, width, width);
        prev = width;
    }
    init.conv("head", 3, prev, 3, true);
    return init.take();
}

template <class T>
Tensor<T> conv_block(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias, std::size_t stride) {
    auto y = ops::add(ops::conv3d(x, kernel, stride, kernel.dim(0) / 2), bias);
    return ops::leaky_relu(y, static_cast<T>(kSlope));
}

template <class T>
Tensor<T> scpe(const Tensor<T>& x, const ParamSet<T>& p, Tensor<T>* conv0_out) {
    if (x.rank() != 4) throw ShapeError("scpe expects [D,H,W,Cin], got " + shape_str(x.shape()));
    for (std::size_t a = 0; a < 3; ++a) {
        if (x.dim(a) % 4 != 0) throw ValidationError("scpe: input " + shape_str(x.shape()) + " spatial dims must be multiples of 4");
    }
    auto h = conv_block(x, p("scpe.conv0.weight"), p("scpe.conv0.bias"), 2);
    if (conv0_out) *conv0_out = h;
    h = conv_block(h, p("scpe.conv1.weight"), p("scpe.conv1.bias"), 2);
    return conv_block(h, p("scpe.conv2.weight"), p("scpe.conv2.bias"), 1);
}

template <class T>
Tensor<T> patch_merging(const Tensor<T>& x, const Tensor<T>& weight) {
    if (x.rank() != 4) throw ShapeError("patch_merging expects [D,H,W,C], got " + shape_str(x.shape()));
    for (std::size_t a = 0; a < 3; ++a) {
        if (x.dim(a) % 2 != 0) throw ShapeError("patch_merging: odd spatial dims in " + shape_str(x.shape()));
    }
    const auto d = x.dim(0) / 2, h = x.dim(1) / 2, w = x.dim(2) / 2, c = x.dim(3);
    auto grid = ops::reshape(x, {d, 2, h, 2, w, 2, c});
    auto gathered = ops::reshape(ops::permute(grid, {0, 2, 4, 1, 3, 5, 6}), {d, h, w, 8 * c});
    return ops::linear(gathered, weight, static_cast<const Tensor<T>*>(nullptr));
}

template <class T>
Tensor<T> patch_expanding(const Tensor<T>& x, const Tensor<T>& weight) {
    if (x.rank() != 4) throw ShapeError("patch_expanding expects [D,H,W,C], got " + shape_str(x.shape()));
    const auto d = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    if (c % 2 != 0) throw ShapeError("patch_expanding: odd channel count " + std::to_string(c));
    auto y = ops::linear(x, weight, static_cast<const Tensor<T>*>(nullptr));
    auto grid = ops::reshape(y, {d, h, w, 2, 2, 2, c / 2});
    return ops::reshape(ops::permute(grid, {0, 3, 1, 4, 2, 5, 6}), {2 * d, 2 * h, 2 * w, c / 2});
}

template <class T>
Tensor<T> forward(const Tensor<T>& moving, const Tensor<T>& fixed, const ParamSet<T>& p, const ArchConfig& cfg) {
    const auto plan = plan_architecture(cfg);
    const Shape expected{cfg.input_dims[0], cfg.input_dims[1], cfg.input_dims[2], 1};
    if (moving.shape() != expected || fixed.shape() != expected) {
        throw ShapeError("forward: images " + shape_str(moving.shape()) + " / " + shape_str(fixed.shape()) +
                         " do not match configured input " + shape_str(expected));
    }
    const auto x = ops::concat<T>({moving, fixed}, 3);

    Tensor<T> half;
    auto e = scpe(x, p, &half);

    SwinOptions options;
    options.window = cfg.window;
    options.mlp_slope = kSlope;
    options.wwa.hidden_slope = kSlope;
    options.wwa.window_gate_on_original = cfg.wwa_window_gate_on_original;

    std::array<Tensor<T>, 4> enc;
    for (std::size_t s = 0; s < 4; ++s) {
        const auto& st = plan.stages[s];
        if (s > 0) e = patch_merging(pad_even(e), p("encoder.merge" + std::to_string(s + 1) + ".weight"));
        for (std::size_t j = 0; j < st.pairs; ++j) {
            SwinBlockPairParams<T> pair{block_view(p, block_name(s, 2 * j), st, cfg.wwa),
                                        block_view(p, block_name(s, 2 * j + 1), st, cfg.wwa)};
            e = swin_block_pair(e, pair, options);
        }
        enc[s] = e;
    }

    Tensor<T> r2, r1;
    if (cfg.recovery_branch) {
        r2 = patch_expanding(enc[0], p("recovery.expand0.weight"));
        r1 = patch_expanding(r2, p("recovery.expand1.weight"));
    } else {
        r2 = conv_block(half, p("shortcut.half.weight"), p("shortcut.half.bias"), 1);
        r1 = conv_block(x, p("shortcut.full.weight"), p("shortcut.full.bias"), 1);
    }

    const std::array<const Tensor<T>*, 5> skips{&enc[2], &enc[1], &enc[0], &r2, &r1};
    auto d = enc[3];
    for (std::size_t i = 0; i < 5; ++i) {
        const auto name = decoder_name(i);
        auto up = crop(patch_expanding(d, p(name + ".expand.weight")), skips[i]->shape());
        d = ops::concat<T>({up, *skips[i]}, 3);
        d = conv_block(d, p(name + ".conv0.weight"), p(name + ".conv0.bias"), 1);
        d = conv_block(d, p(name + ".conv1.weight"), p(name + ".conv1.bias"), 1);
    }
    return ops::add(ops::conv3d(d, p("head.weight"), 1, 1), p("head.bias"));
}

#define MORPHWIN_INSTANTIATE_RFRNET(T)                                                                        \
    template Tensor<T> conv_block<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t);      \
    template Tensor<T> scpe<T>(const Tensor<T>&, const ParamSet<T>&, Tensor<T>*);                           \
    template Tensor<T> patch_merging<T>(const Tensor<T>&, const Tensor<T>&);                                  \
    template Tensor<T> patch_expanding<T>(const Tensor<T>&, const Tensor<T>&);                                \
    template Tensor<T> forward<T>(const Tensor<T>&, const Tensor<T>&, const ParamSet<T>&, const ArchConfig&);

MORPHWIN_INSTANTIATE_RFRNET(float)
MORPHWIN_INSTANTIATE_RFRNET(double)

}  // namespace morphwin
