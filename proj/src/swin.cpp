#include "morphwin/swin.hpp"

#include <cmath>

#include "morphwin/ops.hpp"

namespace morphwin {

std::size_t relative_table_rows(const Dims3& window) {
    return (2 * window[0] - 1) * (2 * window[1] - 1) * (2 * window[2] - 1);
}

std::vector<std::size_t> relative_position_index(const Dims3& window) {
    const auto k = window[0] * window[1] * window[2];
    const auto sy = 2 * window[1] - 1;
    const auto sx = 2 * window[2] - 1;
    std::vector<std::size_t> index(k * k);
    for (std::size_t i = 0; i < k; ++i) {
        const auto zi = i / (window[1] * window[2]);
        const auto yi = (i / window[2]) % window[1];
        const auto xi = i % window[2];
        for (std::size_t j = 0; j < k; ++j) {
            const auto zj = j / (window[1] * window[2]);
            const auto yj = (j / window[2]) % window[1];
            const auto xj = j % window[2];
            // Offsets shifted to start at 0.
            const auto dz = zi + window[0] - 1 - zj;
            const auto dy = yi + window[1] - 1 - yj;
            const auto dx = xi + window[2] - 1 - xj;
            index[i * k + j] = (dz * sy + dy) * sx + dx;
        }
    }
    return index;
}

template <class T>
Tensor<T> relative_position_bias(const AttentionParams<T>& p) {
    const auto kk = p.relative_index.size();
    const auto k = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(kk))));
    if (k * k != kk) throw Error("relative position index is not square");
    if (p.bias_table.rank() != 2 || p.bias_table.dim(1) != p.heads) {
        throw ShapeError("bias table " + shape_str(p.bias_table.shape()) + " does not match head count");
    }
    auto rows = ops::index_select(p.bias_table, p.relative_index);  // [K*K, heads]
    return ops::permute(ops::reshape(rows, {k, k, p.heads}), {2, 0, 1});
}

template <class T>
WindowSequence<T> window_msa(const WindowSequence<T>& w, const AttentionParams<T>& p, const Tensor<T>* mask) {
    const auto& x = w.data;
    if (x.rank() != 3) throw ShapeError("window_msa expects [N,K,C], got " + shape_str(x.shape()));
    const auto n = x.dim(0);
    const auto k = x.dim(1);
    const auto c = x.dim(2);
    if (p.qkv_weight.dim(0) != c) {
        throw ShapeError("window_msa: attention built for " + std::to_string(p.qkv_weight.dim(0)) +
                         " channels, sequence has " + std::to_string(c));
    }
    if (c % p.heads != 0) throw ShapeError("window_msa: channels not divisible by head count");
    if (p.relative_index.size() != k * k) throw ShapeError("window_msa: relative index built for another window size");
    if (mask && mask->shape() != Shape{n, k, k}) {
        throw ShapeError("window_msa: mask " + shape_str(mask->shape()) + " does not match [N,K,K] = " +
                         shape_str({n, k, k}));
    }
    const auto heads = p.heads;
    const auto hd = c / heads;

    auto qkv = ops::linear(x, p.qkv_weight, &p.qkv_bias);
    auto split = ops::permute(ops::reshape(qkv, {n, k, 3, heads, hd}), {2, 0, 3, 1, 4});  // [3,N,H,K,hd]
    auto part = [&](std::size_t i) { return ops::reshape(ops::slice(split, 0, i, 1), {n, heads, k, hd}); };
    auto q = ops::mul(part(0), static_cast<T>(1.0 / std::sqrt(static_cast<double>(hd))));
    auto key_t = ops::permute(part(1), {0, 1, 3, 2});
    auto v = part(2);

    auto logits = ops::add(ops::matmul(q, key_t), relative_position_bias(p));  // [N,H,K,K]
    if (mask) logits = ops::add(logits, ops::reshape(*mask, {n, 1, k, k}));
    auto attn = ops::softmax(logits, 3);
    auto heads_out = ops::permute(ops::matmul(attn, v), {0, 2, 1, 3});  // [N,K,H,hd]
    auto merged = ops::reshape(heads_out, {n, k, c});
    return {ops::linear(merged, p.proj_weight, &p.proj_bias), w.spec};
}

template <class T>
Tensor<T> swin_block(const Tensor<T>& x, const SwinBlockParams<T>& p, const WindowSpec& spec, const SwinOptions& options) {
    const T eps = static_cast<T>(options.norm_eps);
    auto h = ops::layer_norm(x, p.norm1_gamma, p.norm1_beta, eps);
    const bool shifted = spec.shifted();
    if (shifted) h = cyclic_shift(h, spec.shift, ShiftDirection::Forward);
    auto seq = window_partition(h, spec);
    if (p.wwa) seq = wwa(seq, *p.wwa, options.wwa);
    std::optional<Tensor<T>> mask;
    if (shifted) mask = shifted_window_mask<T>(spec);
    seq = window_msa(seq, p.attn, mask ? &*mask : nullptr);
    auto y = window_reverse(seq);
    if (shifted) y = cyclic_shift(y, spec.shift, ShiftDirection::Inverse);
    auto mid = ops::add(x, y);

    auto m = ops::layer_norm(mid, p.norm2_gamma, p.norm2_beta, eps);
    m = ops::leaky_relu(ops::linear(m, p.mlp_fc1_weight, &p.mlp_fc1_bias), static_cast<T>(options.mlp_slope));
    m = ops::linear(m, p.mlp_fc2_weight, &p.mlp_fc2_bias);
    return ops::add(mid, m);
}

template <class T>
Tensor<T> swin_block_pair(const Tensor<T>& x, const SwinBlockPairParams<T>& p, const SwinOptions& options) {
    if (x.rank() != 4) throw ShapeError("swin_block_pair expects [D,H,W,C], got " + shape_str(x.shape()));
    const Dims3 dims{x.dim(0), x.dim(1), x.dim(2)};
    const auto regular = WindowSpec::for_stage(options.window, dims, false);
    const auto shifted = WindowSpec::for_stage(options.window, dims, true);
    auto y = swin_block(x, p.regular, regular, options);
    return swin_block(y, p.shifted, shifted, options);
}

#define MORPHWIN_INSTANTIATE_SWIN(T)                                                                           \
    template Tensor<T> relative_position_bias<T>(const AttentionParams<T>&);                                   \
    template WindowSequence<T> window_msa<T>(const WindowSequence<T>&, const AttentionParams<T>&, const Tensor<T>*); \
    template Tensor<T> swin_block<T>(const Tensor<T>&, const SwinBlockParams<T>&, const WindowSpec&, const SwinOptions&); \
    template Tensor<T> swin_block_pair<T>(const Tensor<T>&, const SwinBlockPairParams<T>&, const SwinOptions&);

MORPHWIN_INSTANTIATE_SWIN(float)
MORPHWIN_INSTANTIATE_SWIN(double)

}  // namespace morphwin
