#include <algorithm>
#include <cmath>
#include <memory>
#include <set>

#include "morphwin/ops.hpp"
#include "ops_internal.hpp"

namespace morphwin::ops {

template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
    if (x.rank() < 1) throw ShapeError("layer_norm needs rank >= 1 input");
    const auto c = x.shape().back();
    if (c == 0) throw ShapeError("layer_norm: channel axis has length 0");
    if (gamma.numel() != c || beta.numel() != c) {
        throw ShapeError("layer_norm: gamma/beta " + shape_str(gamma.shape()) + "/" + shape_str(beta.shape()) +
                         " do not match channel count of " + shape_str(x.shape()));
    }
    if (!(eps > T(0))) throw Error("layer_norm: eps must be positive");
    const auto rows = x.numel() / c;
    // Normalized values and per-row reciprocal std are saved for the adjoint.
    auto xhat = std::make_shared<std::vector<T>>(x.numel());
    auto rstd = std::make_shared<std::vector<T>>(rows);
    std::vector<T> out(x.numel());
    const T* px = x.data().data();
    const T* pg = gamma.data().data();
    const T* pb = beta.data().data();
    for (std::size_t r = 0; r < rows; ++r) {
        const T* row = px + r * c;
        T mean = 0;
        for (std::size_t j = 0; j < c; ++j) mean += row[j];
        mean /= static_cast<T>(c);
        T var = 0;
        for (std::size_t j = 0; j < c; ++j) var += (row[j] - mean) * (row[j] - mean);
        var /= static_cast<T>(c);
        const T rs = T(1) / std::sqrt(var + eps);
        (*rstd)[r] = rs;
        for (std::size_t j = 0; j < c; ++j) {
            const T h = (row[j] - mean) * rs;
            (*xhat)[r * c + j] = h;
            out[r * c + j] = h * pg[j] + pb[j];
        }
    }
    return make_result<T>("layer_norm", x.shape(), std::move(out), {&x, &gamma, &beta},
                          [gamma, xhat, rstd, rows, c](std::span<const T> g, std::span<T* const> gin) {
                              const T* pg = gamma.data().data();
                              const T* ph = xhat->data();
                              for (std::size_t r = 0; r < rows; ++r) {
                                  const T* grow = g.data() + r * c;
                                  const T* hrow = ph + r * c;
                                  if (gin[1] || gin[2]) {
                                      for (std::size_t j = 0; j < c; ++j) {
                                          if (gin[1]) gin[1][j] += grow[j] * hrow[j];
                                          if (gin[2]) gin[2][j] += grow[j];
                                      }
                                  }
                                  if (gin[0]) {
                                      T sum_dh = 0;
                                      T sum_dh_h = 0;
                                      for (std::size_t j = 0; j < c; ++j) {
                                          const T dh = grow[j] * pg[j];
                                          sum_dh += dh;
                                          sum_dh_h += dh * hrow[j];
                                      }
                                      const T inv_c = T(1) / static_cast<T>(c);
                                      const T rs = (*rstd)[r];
                                      for (std::size_t j = 0; j < c; ++j) {
                                          const T dh = grow[j] * pg[j];
                                          gin[0][r * c + j] += rs * (dh - inv_c * sum_dh - hrow[j] * inv_c * sum_dh_h);
                                      }
                                  }
                              }
                          });
}

template <class T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
    if (axis >= x.rank()) {
        throw ShapeError("softmax: axis " + std::to_string(axis) + " invalid for shape " + shape_str(x.shape()));
    }
    const auto len = x.dim(axis);
    std::size_t inner = 1;
    for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
    const auto outer = x.numel() / (len * inner);
    std::vector<T> out(x.numel());
    const T* px = x.data().data();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            T mx = px[base];
            for (std::size_t k = 1; k < len; ++k) mx = std::max(mx, px[base + k * inner]);
            T total = 0;
            for (std::size_t k = 0; k < len; ++k) {
                const T e = std::exp(px[base + k * inner] - mx);
                out[base + k * inner] = e;
                total += e;
            }
            const T inv = T(1) / total;
            for (std::size_t k = 0; k < len; ++k) out[base + k * inner] *= inv;
        }
    }
    auto y = std::make_shared<std::vector<T>>(out);
    return make_result<T>("softmax", x.shape(), std::move(out), {&x},
                          [y, outer, len, inner](std::span<const T> g, std::span<T* const> gin) {
                              const T* py = y->data();
                              for (std::size_t o = 0; o < outer; ++o) {
                                  for (std::size_t in = 0; in < inner; ++in) {
                                      const std::size_t base = o * len * inner + in;
                                      T dot = 0;
                                      for (std::size_t k = 0; k < len; ++k) dot += g[base + k * inner] * py[base + k * inner];
                                      for (std::size_t k = 0; k < len; ++k) {
                                          const auto idx = base + k * inner;
                                          gin[0][idx] += py[idx] * (g[idx] - dot);
                                      }
                                  }
                              }
                          });
}

namespace {

// Maps each input element to its output slot for a reduction over `axes`.
struct Reduction {
    Shape out_shape;
    std::vector<std::size_t> target;  // per input element
    std::size_t count = 1;            // elements folded into each output
};

Reduction plan_reduction(const Shape& in, const std::vector<std::size_t>& axes) {
    std::set<std::size_t> unique(axes.begin(), axes.end());
    if (unique.size() != axes.size()) throw ShapeError("reduction axes must be distinct");
    Reduction r;
    std::vector<bool> reduced(in.size(), false);
    for (auto a : axes) {
        if (a >= in.size()) throw ShapeError("reduction axis " + std::to_string(a) + " invalid for " + shape_str(in));
        reduced[a] = true;
        r.count *= in[a];
    }
    for (std::size_t i = 0; i < in.size(); ++i) {
        if (!reduced[i]) r.out_shape.push_back(in[i]);
    }
    // Output strides expressed on the input axes (0 for reduced axes).
    std::vector<std::size_t> ostride(in.size(), 0);
    std::size_t s = 1;
    for (std::size_t i = in.size(); i-- > 0;) {
        if (!reduced[i]) {
            ostride[i] = s;
            s *= in[i];
        }
    }
    const auto n = shape_numel(in);
    r.target.resize(n);
    std::vector<std::size_t> idx(in.size(), 0);
    std::size_t t = 0;
    for (std::size_t i = 0; i < n; ++i) {
        r.target[i] = t;
        for (std::size_t ax = in.size(); ax-- > 0;) {
            ++idx[ax];
            t += ostride[ax];
            if (idx[ax] < in[ax]) break;
            t -= ostride[ax] * in[ax];
            idx[ax] = 0;
        }
    }
    return r;
}

template <class T>
Tensor<T> reduce(const char* name, const Tensor<T>& x, const std::vector<std::size_t>& axes, bool average) {
    auto plan = std::make_shared<Reduction>(plan_reduction(x.shape(), axes));
    const T scale = average ? T(1) / static_cast<T>(plan->count) : T(1);
    std::vector<T> out(shape_numel(plan->out_shape), T(0));
    const T* px = x.data().data();
    for (std::size_t i = 0; i < x.numel(); ++i) out[plan->target[i]] += px[i];
    if (average) {
        for (auto& v : out) v *= scale;
    }
    return make_result<T>(name, plan->out_shape, std::move(out), {&x},
                          [plan, scale](std::span<const T> g, std::span<T* const> gin) {
                              for (std::size_t i = 0; i < plan->target.size(); ++i) gin[0][i] += g[plan->target[i]] * scale;
                          });
}

}  // namespace

template <class T>
Tensor<T> reduce_mean(const Tensor<T>& x, const std::vector<std::size_t>& axes) {
    return reduce<T>("reduce_mean", x, axes, true);
}

template <class T>
Tensor<T> reduce_sum(const Tensor<T>& x, const std::vector<std::size_t>& axes) {
    return reduce<T>("reduce_sum", x, axes, false);
}

namespace {

template <class T>
Tensor<T> total(const char* name, const Tensor<T>& x, T scale) {
    T acc = 0;
    for (auto v : x.data()) acc += v;
    const auto n = x.numel();
    return make_result<T>(name, Shape{}, std::vector<T>{acc * scale}, {&x},
                          [n, scale](std::span<const T> g, std::span<T* const> gin) {
                              const T gv = g[0] * scale;
                              for (std::size_t i = 0; i < n; ++i) gin[0][i] += gv;
                          });
}

}  // namespace

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
    return total<T>("sum", x, T(1));
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
    return total<T>("mean", x, T(1) / static_cast<T>(x.numel()));
}

#define MORPHWIN_INSTANTIATE_NN(T)                                                           \
    template Tensor<T> layer_norm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T); \
    template Tensor<T> softmax<T>(const Tensor<T>&, std::size_t);                            \
    template Tensor<T> reduce_mean<T>(const Tensor<T>&, const std::vector<std::size_t>&);    \
    template Tensor<T> reduce_sum<T>(const Tensor<T>&, const std::vector<std::size_t>&);     \
    template Tensor<T> sum<T>(const Tensor<T>&);                                             \
    template Tensor<T> mean<T>(const Tensor<T>&);

MORPHWIN_INSTANTIATE_NN(float)
MORPHWIN_INSTANTIATE_NN(double)

}  // namespace morphwin::ops
