#include "morphwin/wwa.hpp"

#include "morphwin/ops.hpp"

namespace morphwin {

template <class T>
Tensor<T> gate(const Tensor<T>& x, const GateMlp<T>& mlp, double hidden_slope) {
    auto hidden = ops::leaky_relu(ops::linear(x, mlp.fc1_weight, &mlp.fc1_bias), static_cast<T>(hidden_slope));
    return ops::sigmoid(ops::linear(hidden, mlp.fc2_weight, &mlp.fc2_bias));
}

template <class T>
WindowSequence<T> cross_channel_attention(const WindowSequence<T>& w, const GateMlp<T>& mlp, double hidden_slope) {
    const auto& x = w.data;
    if (x.rank() != 3) throw ShapeError("cross_channel_attention expects [N,K,C], got " + shape_str(x.shape()));
    const auto n = x.dim(0);
    const auto c = x.dim(2);
    if (mlp.inputs() != c) {
        throw ShapeError("cross_channel_attention: channel gate built for " + std::to_string(mlp.inputs()) +
                         " channels, sequence has " + std::to_string(c));
    }
    auto means = ops::reduce_mean(x, {1});  // [N, C]
    auto alpha = ops::reshape(gate(means, mlp, hidden_slope), {n, 1, c});
    return {ops::mul(x, alpha), w.spec};
}

template <class T>
WindowSequence<T> cross_window_attention(const WindowSequence<T>& w, const GateMlp<T>& mlp, double hidden_slope,
                                         const WindowSequence<T>* target) {
    const auto& x = w.data;
    if (x.rank() != 3) throw ShapeError("cross_window_attention expects [N,K,C], got " + shape_str(x.shape()));
    const auto n = x.dim(0);
    const auto k = x.dim(1);
    if (mlp.inputs() != n) {
        throw ShapeError("cross_window_attention: window gate built for " + std::to_string(mlp.inputs()) +
                         " windows, sequence has " + std::to_string(n));
    }
    const auto& multiplicand = target ? target->data : x;
    if (multiplicand.shape() != x.shape()) throw ShapeError("cross_window_attention: target shape differs from input");
    auto means = ops::permute(ops::reduce_mean(x, {2}), {1, 0});  // [K, N]
    auto beta = ops::permute(gate(means, mlp, hidden_slope), {1, 0});
    return {ops::mul(multiplicand, ops::reshape(beta, {n, k, 1})), w.spec};
}

template <class T>
WindowSequence<T> wwa(const WindowSequence<T>& w, const WwaParams<T>& p, const WwaOptions& options) {
    auto weighted = cross_channel_attention(w, p.channel, options.hidden_slope);
    return cross_window_attention(weighted, p.window, options.hidden_slope,
                                  options.window_gate_on_original ? &w : nullptr);
}

#define MORPHWIN_INSTANTIATE_WWA(T)                                                                          \
    template Tensor<T> gate<T>(const Tensor<T>&, const GateMlp<T>&, double);                                 \
    template WindowSequence<T> cross_channel_attention<T>(const WindowSequence<T>&, const GateMlp<T>&, double); \
    template WindowSequence<T> cross_window_attention<T>(const WindowSequence<T>&, const GateMlp<T>&, double, \
                                                         const WindowSequence<T>*);                          \
    template WindowSequence<T> wwa<T>(const WindowSequence<T>&, const WwaParams<T>&, const WwaOptions&);

MORPHWIN_INSTANTIATE_WWA(float)
MORPHWIN_INSTANTIATE_WWA(double)

}  // namespace morphwin
