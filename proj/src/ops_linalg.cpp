#include <algorithm>

#include "morphwin/ops.hpp"
#include "ops_internal.hpp"

namespace morphwin::ops {

namespace {

// c[m,n] += a[m,k] * b[k,n]
template <class T>
void gemm_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        T* crow = c + i * n;
        const T* arow = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = arow[p];
            const T* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// da[m,k] += g[m,n] * b[k,n]^T
template <class T>
void gemm_nt_acc(const T* g, const T* b, T* da, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const T* grow = g + i * n;
        T* darow = da + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const T* brow = b + p * n;
            T acc = 0;
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            darow[p] += acc;
        }
    }
}

// db[k,n] += a[m,k]^T * g[m,n]
template <class T>
void gemm_tn_acc(const T* a, const T* g, T* db, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = a + i * k;
        const T* grow = g + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = arow[p];
            T* dbrow = db + p * n;
            for (std::size_t j = 0; j < n; ++j) dbrow[j] += av * grow[j];
        }
    }
}

}  // namespace

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() < 2 || b.rank() < 2) {
        throw ShapeError("matmul needs rank >= 2 operands, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    }
    const auto m = a.shape()[a.rank() - 2];
    const auto k = a.shape()[a.rank() - 1];
    const auto k2 = b.shape()[b.rank() - 2];
    const auto n = b.shape()[b.rank() - 1];
    if (k != k2) {
        throw ShapeError("matmul inner dimensions differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    const Shape a_batch(a.shape().begin(), a.shape().end() - 2);
    const Shape b_batch(b.shape().begin(), b.shape().end() - 2);
    const Shape batch = broadcast_shape(a_batch, b_batch);
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    pairs.reserve(shape_numel(batch));
    detail::for_each_broadcast(batch, a_batch, b_batch,
                               [&](std::size_t, std::size_t ia, std::size_t ib) { pairs.emplace_back(ia, ib); });

    Shape out_shape = batch;
    out_shape.push_back(m);
    out_shape.push_back(n);
    std::vector<T> out(shape_numel(out_shape), T(0));
    const T* pa = a.data().data();
    const T* pb = b.data().data();
    for (std::size_t bi = 0; bi < pairs.size(); ++bi) {
        gemm_acc(pa + pairs[bi].first * m * k, pb + pairs[bi].second * k * n, out.data() + bi * m * n, m, k, n);
    }
    return make_result<T>("matmul", std::move(out_shape), std::move(out), {&a, &b},
                          [a, b, pairs, m, k, n](std::span<const T> g, std::span<T* const> gin) {
                              const T* pa = a.data().data();
                              const T* pb = b.data().data();
                              for (std::size_t bi = 0; bi < pairs.size(); ++bi) {
                                  const T* gp = g.data() + bi * m * n;
                                  if (gin[0]) gemm_nt_acc(gp, pb + pairs[bi].second * k * n, gin[0] + pairs[bi].first * m * k, m, k, n);
                                  if (gin[1]) gemm_tn_acc(pa + pairs[bi].first * m * k, gp, gin[1] + pairs[bi].second * k * n, m, k, n);
                              }
                          });
}

template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias) {
    if (weight.rank() != 2 || x.rank() < 1 || x.shape().back() != weight.dim(0)) {
        throw ShapeError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                         shape_str(weight.shape()));
    }
    const auto in = weight.dim(0);
    const auto out_features = weight.dim(1);
    if (bias && (bias->rank() != 1 || bias->dim(0) != out_features)) {
        throw ShapeError("linear: bias " + shape_str(bias->shape()) + " does not match weight " +
                         shape_str(weight.shape()));
    }
    const auto rows = x.numel() / in;
    Shape out_shape = x.shape();
    out_shape.back() = out_features;
    std::vector<T> out(rows * out_features, T(0));
    if (bias) {
        const T* pbias = bias->data().data();
        for (std::size_t r = 0; r < rows; ++r) std::copy(pbias, pbias + out_features, out.begin() + r * out_features);
    }
    gemm_acc(x.data().data(), weight.data().data(), out.data(), rows, in, out_features);

    std::vector<const Tensor<T>*> inputs{&x, &weight};
    if (bias) inputs.push_back(bias);
    return make_result<T>("linear", std::move(out_shape), std::move(out), inputs,
                          [x, weight, rows, in, out_features](std::span<const T> g, std::span<T* const> gin) {
                              if (gin[0]) gemm_nt_acc(g.data(), weight.data().data(), gin[0], rows, in, out_features);
                              if (gin[1]) gemm_tn_acc(x.data().data(), g.data(), gin[1], rows, in, out_features);
                              if (gin.size() > 2 && gin[2]) {
                                  for (std::size_t r = 0; r < rows; ++r) {
                                      const T* grow = g.data() + r * out_features;
                                      for (std::size_t j = 0; j < out_features; ++j) gin[2][j] += grow[j];
                                  }
                              }
                          });
}

std::array<std::size_t, 3> conv3d_output_dims(const std::array<std::size_t, 3>& in, const std::array<std::size_t, 3>& k,
                                              std::size_t stride, std::size_t padding) {
    if (stride < 1) throw ShapeError("conv3d: stride must be >= 1");
    std::array<std::size_t, 3> out{};
    for (int i = 0; i < 3; ++i) {
        const auto padded = in[i] + 2 * padding;
        if (padded < k[i]) {
            throw ShapeError("conv3d: kernel extent " + std::to_string(k[i]) + " exceeds padded input extent " +
                             std::to_string(padded) + " on axis " + std::to_string(i));
        }
        out[i] = (padded - k[i]) / stride + 1;
    }
    return out;
}

template <class T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& kernel, std::size_t stride, std::size_t padding) {
    if (x.rank() != 4 || kernel.rank() != 5 || kernel.dim(3) != x.dim(3)) {
        throw ShapeError("conv3d: input " + shape_str(x.shape()) + " incompatible with kernel " +
                         shape_str(kernel.shape()));
    }
    const std::array<std::size_t, 3> in{x.dim(0), x.dim(1), x.dim(2)};
    const std::array<std::size_t, 3> ks{kernel.dim(0), kernel.dim(1), kernel.dim(2)};
    for (auto e : ks) {
        if (e % 2 == 0) throw ShapeError("conv3d: kernel extents must be odd, got " + shape_str(kernel.shape()));
    }
    const auto od = conv3d_output_dims(in, ks, stride, padding);
    const auto ci = x.dim(3);
    const auto co = kernel.dim(4);
    const auto tap = ci * co;

    // Visits every (output voxel, kernel tap, input voxel) triple that lies inside the input.
    auto visit = [in, ks, od, stride, padding, ci, co, tap](auto&& f) {
        const long pad = static_cast<long>(padding);
        for (std::size_t z = 0; z < od[0]; ++z) {
            for (std::size_t y = 0; y < od[1]; ++y) {
                for (std::size_t xx = 0; xx < od[2]; ++xx) {
                    const std::size_t o = ((z * od[1] + y) * od[2] + xx) * co;
                    for (std::size_t a = 0; a < ks[0]; ++a) {
                        const long iz = static_cast<long>(z * stride + a) - pad;
                        if (iz < 0 || iz >= static_cast<long>(in[0])) continue;
                        for (std::size_t b = 0; b < ks[1]; ++b) {
                            const long iy = static_cast<long>(y * stride + b) - pad;
                            if (iy < 0 || iy >= static_cast<long>(in[1])) continue;
                            for (std::size_t c = 0; c < ks[2]; ++c) {
                                const long ix = static_cast<long>(xx * stride + c) - pad;
                                if (ix < 0 || ix >= static_cast<long>(in[2])) continue;
                                const std::size_t i =
                                    ((static_cast<std::size_t>(iz) * in[1] + static_cast<std::size_t>(iy)) * in[2] +
                                     static_cast<std::size_t>(ix)) *
                                    ci;
                                const std::size_t kofs = ((a * ks[1] + b) * ks[2] + c) * tap;
                                f(o, i, kofs);
                            }
                        }
                    }
                }
            }
        }
    };

    Shape out_shape{od[0], od[1], od[2], co};
    std::vector<T> out(shape_numel(out_shape), T(0));
    {
        const T* px = x.data().data();
        const T* pk = kernel.data().data();
        T* po = out.data();
        visit([&](std::size_t o, std::size_t i, std::size_t kofs) {
            T* orow = po + o;
            const T* xrow = px + i;
            const T* krow = pk + kofs;
            for (std::size_t c = 0; c < ci; ++c) {
                const T xv = xrow[c];
                const T* kr = krow + c * co;
                for (std::size_t j = 0; j < co; ++j) orow[j] += xv * kr[j];
            }
        });
    }
    return make_result<T>("conv3d", std::move(out_shape), std::move(out), {&x, &kernel},
                          [x, kernel, visit, ci, co](std::span<const T> g, std::span<T* const> gin) {
                              const T* px = x.data().data();
                              const T* pk = kernel.data().data();
                              T* gx = gin[0];
                              T* gk = gin[1];
                              visit([&](std::size_t o, std::size_t i, std::size_t kofs) {
                                  const T* grow = g.data() + o;
                                  const T* xrow = px + i;
                                  const T* krow = pk + kofs;
                                  for (std::size_t c = 0; c < ci; ++c) {
                                      const T* kr = krow + c * co;
                                      if (gx) {
                                          T acc = 0;
                                          for (std::size_t j = 0; j < co; ++j) acc += grow[j] * kr[j];
                                          gx[i + c] += acc;
                                      }
                                      if (gk) {
                                          const T xv = xrow[c];
                                          T* gkr = gk + kofs + c * co;
                                          for (std::size_t j = 0; j < co; ++j) gkr[j] += xv * grow[j];
                                      }
                                  }
                              });
                          });
}

#define MORPHWIN_INSTANTIATE_LINALG(T)                                             \
    template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);              \
    template Tensor<T> linear<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*); \
    template Tensor<T> conv3d<T>(const Tensor<T>&, const Tensor<T>&, std::size_t, std::size_t);

MORPHWIN_INSTANTIATE_LINALG(float)
MORPHWIN_INSTANTIATE_LINALG(double)

}  // namespace morphwin::ops
