#include <algorithm>
#include <cmath>

#include "morphwin/ops.hpp"
#include "ops_internal.hpp"

namespace morphwin::ops {

Shape broadcast_shape(const Shape& a, const Shape& b) {
    const auto rank = std::max(a.size(), b.size());
    Shape out(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
        const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
        if (da != db && da != 1 && db != 1) {
            throw ShapeError("shapes " + shape_str(a) + " and " + shape_str(b) + " are not broadcast-compatible");
        }
        out[i] = std::max(da, db);
    }
    return out;
}

namespace {

template <class T, class Fwd, class GradA, class GradB>
Tensor<T> binary(const char* name, const Tensor<T>& a, const Tensor<T>& b, Fwd fwd, GradA grad_a, GradB grad_b) {
    Shape out_shape = broadcast_shape(a.shape(), b.shape());
    const auto n = shape_numel(out_shape);
    std::vector<T> out(n);
    const T* pa = a.data().data();
    const T* pb = b.data().data();
    detail::for_each_broadcast(out_shape, a.shape(), b.shape(),
                               [&](std::size_t i, std::size_t ia, std::size_t ib) { out[i] = fwd(pa[ia], pb[ib]); });
    return make_result<T>(name, out_shape, std::move(out), {&a, &b},
                          [a, b, out_shape, grad_a, grad_b](std::span<const T> g, std::span<T* const> gin) {
                              const T* pa = a.data().data();
                              const T* pb = b.data().data();
                              T* ga = gin[0];
                              T* gb = gin[1];
                              detail::for_each_broadcast(out_shape, a.shape(), b.shape(),
                                                         [&](std::size_t i, std::size_t ia, std::size_t ib) {
                                                             if (ga) ga[ia] += g[i] * grad_a(pa[ia], pb[ib]);
                                                             if (gb) gb[ib] += g[i] * grad_b(pa[ia], pb[ib]);
                                                         });
                          });
}

// y = f(x); dy/dx computed from (x, y).
template <class T, class Fwd, class Deriv>
Tensor<T> unary(const char* name, const Tensor<T>& x, Fwd fwd, Deriv deriv) {
    const auto n = x.numel();
    std::vector<T> out(n);
    const T* px = x.data().data();
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(px[i]);
    auto y = std::make_shared<std::vector<T>>(out);
    return make_result<T>(name, x.shape(), std::move(out), {&x},
                          [x, y, deriv](std::span<const T> g, std::span<T* const> gin) {
                              const T* px = x.data().data();
                              const T* py = y->data();
                              T* gx = gin[0];
                              for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv(px[i], py[i]);
                          });
}

}  // namespace

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return binary<T>(
        "add", a, b, [](T x, T y) { return x + y; }, [](T, T) { return T(1); }, [](T, T) { return T(1); });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return binary<T>(
        "sub", a, b, [](T x, T y) { return x - y; }, [](T, T) { return T(1); }, [](T, T) { return T(-1); });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return binary<T>(
        "mul", a, b, [](T x, T y) { return x * y; }, [](T, T y) { return y; }, [](T x, T) { return x; });
}

template <class T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
    for (auto v : b.data()) {
        if (v == T(0)) throw Error("div: zero denominator");
    }
    return binary<T>(
        "div", a, b, [](T x, T y) { return x / y; }, [](T, T y) { return T(1) / y; },
        [](T x, T y) { return -x / (y * y); });
}

template <class T>
Tensor<T> add(const Tensor<T>& a, T b) {
    return unary<T>(
        "add_scalar", a, [b](T x) { return x + b; }, [](T, T) { return T(1); });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, T b) {
    return unary<T>(
        "mul_scalar", a, [b](T x) { return x * b; }, [b](T, T) { return b; });
}

template <class T>
Tensor<T> neg(const Tensor<T>& x) {
    return unary<T>(
        "neg", x, [](T v) { return -v; }, [](T, T) { return T(-1); });
}

template <class T>
Tensor<T> square(const Tensor<T>& x) {
    return unary<T>(
        "square", x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    return unary<T>(
        "sigmoid", x,
        [](T v) {
            if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
            const T e = std::exp(v);
            return e / (T(1) + e);
        },
        [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Tensor<T> leaky_relu(const Tensor<T>& x, T negative_slope) {
    // Right-continuous at zero: slope 1 for x >= 0.
    return unary<T>(
        "leaky_relu", x, [negative_slope](T v) { return v >= T(0) ? v : negative_slope * v; },
        [negative_slope](T v, T) { return v >= T(0) ? T(1) : negative_slope; });
}

template <class T>
Tensor<T> exp(const Tensor<T>& x) {
    return unary<T>(
        "exp", x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <class T>
Tensor<T> sqrt(const Tensor<T>& x) {
    return unary<T>(
        "sqrt", x, [](T v) { return std::sqrt(v); }, [](T, T y) { return T(0.5) / y; });
}

#define MORPHWIN_INSTANTIATE_ELEMENTWISE(T)                        \
    template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&); \
    template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&); \
    template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&); \
    template Tensor<T> div<T>(const Tensor<T>&, const Tensor<T>&); \
    template Tensor<T> add<T>(const Tensor<T>&, T);                \
    template Tensor<T> mul<T>(const Tensor<T>&, T);                \
    template Tensor<T> neg<T>(const Tensor<T>&);                   \
    template Tensor<T> square<T>(const Tensor<T>&);                \
    template Tensor<T> sigmoid<T>(const Tensor<T>&);               \
    template Tensor<T> leaky_relu<T>(const Tensor<T>&, T);         \
    template Tensor<T> exp<T>(const Tensor<T>&);                   \
    template Tensor<T> sqrt<T>(const Tensor<T>&);

MORPHWIN_INSTANTIATE_ELEMENTWISE(float)
MORPHWIN_INSTANTIATE_ELEMENTWISE(double)

}  // namespace morphwin::ops
