#pragma once

#include <cstddef>

#include "morphwin/tensor.hpp"
#include "morphwin/windowing.hpp"

namespace morphwin {

/// Two-layer perceptron in -> hidden -> in. Weights are [in, out].
template <class T>
struct GateMlp {
    Tensor<T> fc1_weight, fc1_bias, fc2_weight, fc2_bias;

    std::size_t inputs() const { return fc1_weight.dim(0); }
};

/// Hidden width of a gate MLP: a quarter of the input width, at least 1.
inline std::size_t gate_hidden_size(std::size_t inputs) { return inputs / 4 > 0 ? inputs / 4 : 1; }

/// Parameters of one weighted-window-attention block: a channel gate sized
/// by C and a window gate sized by N.
template <class T>
struct WwaParams {
    GateMlp<T> channel;
    GateMlp<T> window;
};

struct WwaOptions {
    double hidden_slope = 0.2;  // leaky-relu slope inside the gate MLPs
    // Apply the window gate to the block input instead of the channel-gated
    // sequence.
    bool window_gate_on_original = false;
};

/// sigmoid(fc2(leaky(fc1(x)))) over the last axis.
template <class T>
Tensor<T> gate(const Tensor<T>& x, const GateMlp<T>& mlp, double hidden_slope);

/// Channel phase: per-window channel means [N, C] are gated and the gate
/// is broadcast over the K elements of each window.
template <class T>
WindowSequence<T> cross_channel_attention(const WindowSequence<T>& w, const GateMlp<T>& mlp, double hidden_slope = 0.2);

/// Window phase: channel means give a [K, N] map whose window axis is
/// gated; the gate is broadcast over channels and multiplies `target`
/// (defaults to `w`).
template <class T>
WindowSequence<T> cross_window_attention(const WindowSequence<T>& w, const GateMlp<T>& mlp, double hidden_slope = 0.2,
                                         const WindowSequence<T>* target = nullptr);

template <class T>
WindowSequence<T> wwa(const WindowSequence<T>& w, const WwaParams<T>& p, const WwaOptions& options = {});

}  // namespace morphwin
