#pragma once

#include <optional>
#include <vector>

#include "morphwin/tensor.hpp"
#include "morphwin/windowing.hpp"
#include "morphwin/wwa.hpp"

namespace morphwin {

/// Rows in the relative-position bias table of a (d,h,w) window:
/// (2d-1)(2h-1)(2w-1).
std::size_t relative_table_rows(const Dims3& window);

/// [K*K] map from an element pair (i, j) of a window to the table row of
/// their offset i - j.
std::vector<std::size_t> relative_position_index(const Dims3& window);

template <class T>
struct AttentionParams {
    Tensor<T> qkv_weight;   // [C, 3C]
    Tensor<T> qkv_bias;     // [3C]
    Tensor<T> proj_weight;  // [C, C]
    Tensor<T> proj_bias;    // [C]
    Tensor<T> bias_table;   // [rows, heads]
    std::vector<std::size_t> relative_index;
    std::size_t heads = 1;
};

/// B[h, i, j] = table[index(i, j), h].
template <class T>
Tensor<T> relative_position_bias(const AttentionParams<T>& p);

/// Multi-head self-attention inside each window:
/// softmax(Q K^T / sqrt(C / heads) + B + mask) V, heads concatenated, then
/// the output projection. `mask` is [N, K, K] when given.
template <class T>
WindowSequence<T> window_msa(const WindowSequence<T>& w, const AttentionParams<T>& p, const Tensor<T>* mask = nullptr);

template <class T>
struct SwinBlockParams {
    Tensor<T> norm1_gamma, norm1_beta;
    AttentionParams<T> attn;
    Tensor<T> norm2_gamma, norm2_beta;
    Tensor<T> mlp_fc1_weight, mlp_fc1_bias, mlp_fc2_weight, mlp_fc2_bias;
    std::optional<WwaParams<T>> wwa;  // absent when WWA is ablated
};

/// W-MSA block followed by SW-MSA block at one stage.
template <class T>
struct SwinBlockPairParams {
    SwinBlockParams<T> regular;
    SwinBlockParams<T> shifted;
};

struct SwinOptions {
    Dims3 window{6, 4, 2};
    double mlp_slope = 0.2;
    double norm_eps = 1e-5;
    WwaOptions wwa;
};

/// One pre-norm transformer block on [D,H,W,C] with the given window
/// geometry (shifted specs roll the map, mask the attention, and roll back).
template <class T>
Tensor<T> swin_block(const Tensor<T>& x, const SwinBlockParams<T>& p, const WindowSpec& spec, const SwinOptions& options);

template <class T>
Tensor<T> swin_block_pair(const Tensor<T>& x, const SwinBlockPairParams<T>& p, const SwinOptions& options);

}  // namespace morphwin
