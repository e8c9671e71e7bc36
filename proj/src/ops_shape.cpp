#include <algorithm>
#include <limits>
#include <memory>

#include "morphwin/ops.hpp"
#include "ops_internal.hpp"

namespace morphwin::ops {

namespace {

constexpr std::size_t kZero = std::numeric_limits<std::size_t>::max();

// out[i] = x[src[i]], or 0 where src[i] == kZero. The adjoint scatters back.
template <class T>
Tensor<T> gather(const char* name, const Tensor<T>& x, Shape out_shape, std::shared_ptr<const std::vector<std::size_t>> src) {
    const T* px = x.data().data();
    std::vector<T> out(src->size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto s = (*src)[i];
        out[i] = s == kZero ? T(0) : px[s];
    }
    return make_result<T>(name, std::move(out_shape), std::move(out), {&x},
                          [src](std::span<const T> g, std::span<T* const> gin) {
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                  const auto s = (*src)[i];
                                  if (s != kZero) gin[0][s] += g[i];
                              }
                          });
}

// Iterates the output index space and computes a source offset per element.
// `source` receives the multi-index and returns the flat source index.
template <class F>
std::shared_ptr<const std::vector<std::size_t>> build_map(const Shape& out_shape, F&& source) {
    const auto n = shape_numel(out_shape);
    auto map = std::make_shared<std::vector<std::size_t>>(n);
    std::vector<std::size_t> idx(out_shape.size(), 0);
    for (std::size_t i = 0; i < n; ++i) {
        (*map)[i] = source(idx);
        for (std::size_t ax = out_shape.size(); ax-- > 0;) {
            if (++idx[ax] < out_shape[ax]) break;
            idx[ax] = 0;
        }
    }
    return map;
}

}  // namespace

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw ShapeError("reshape: cannot reshape " + shape_str(x.shape()) + " into " + shape_str(shape));
    }
    std::vector<T> out(x.data().begin(), x.data().end());
    return make_result<T>("reshape", std::move(shape), std::move(out), {&x},
                          [](std::span<const T> g, std::span<T* const> gin) {
                              for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i];
                          });
}

template <class T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& perm) {
    const auto rank = x.rank();
    if (perm.size() != rank) throw ShapeError("permute: permutation length does not match rank of " + shape_str(x.shape()));
    std::vector<bool> seen(rank, false);
    for (auto p : perm) {
        if (p >= rank || seen[p]) throw ShapeError("permute: invalid permutation for " + shape_str(x.shape()));
        seen[p] = true;
    }
    Shape out_shape(rank);
    for (std::size_t i = 0; i < rank; ++i) out_shape[i] = x.dim(perm[i]);
    const auto strides = detail::row_major_strides(x.shape());
    auto map = build_map(out_shape, [&](const std::vector<std::size_t>& idx) {
        std::size_t s = 0;
        for (std::size_t i = 0; i < rank; ++i) s += idx[i] * strides[perm[i]];
        return s;
    });
    return gather<T>("permute", x, std::move(out_shape), std::move(map));
}

template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, std::size_t axis) {
    if (xs.empty()) throw ShapeError("concat: no inputs");
    const auto& first = xs.front().shape();
    if (axis >= first.size()) throw ShapeError("concat: axis out of range for " + shape_str(first));
    Shape out_shape = first;
    out_shape[axis] = 0;
    for (const auto& x : xs) {
        if (x.rank() != first.size()) throw ShapeError("concat: rank mismatch " + shape_str(first) + " vs " + shape_str(x.shape()));
        for (std::size_t i = 0; i < first.size(); ++i) {
            if (i != axis && x.dim(i) != first[i]) {
                throw ShapeError("concat: shapes " + shape_str(first) + " and " + shape_str(x.shape()) +
                                 " differ off the concatenation axis");
            }
        }
        out_shape[axis] += x.dim(axis);
    }
    std::size_t outer = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
    std::size_t inner = 1;
    for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];

    std::vector<std::size_t> chunk(xs.size());
    for (std::size_t k = 0; k < xs.size(); ++k) chunk[k] = xs[k].dim(axis) * inner;
    const auto row = out_shape[axis] * inner;
    std::vector<T> out(shape_numel(out_shape));
    for (std::size_t o = 0; o < outer; ++o) {
        std::size_t ofs = o * row;
        for (std::size_t k = 0; k < xs.size(); ++k) {
            const T* src = xs[k].data().data() + o * chunk[k];
            std::copy(src, src + chunk[k], out.begin() + static_cast<std::ptrdiff_t>(ofs));
            ofs += chunk[k];
        }
    }
    std::vector<const Tensor<T>*> inputs;
    for (const auto& x : xs) inputs.push_back(&x);
    return make_result<T>("concat", std::move(out_shape), std::move(out), inputs,
                          [chunk, outer, row](std::span<const T> g, std::span<T* const> gin) {
                              for (std::size_t o = 0; o < outer; ++o) {
                                  std::size_t ofs = o * row;
                                  for (std::size_t k = 0; k < chunk.size(); ++k) {
                                      if (gin[k]) {
                                          T* dst = gin[k] + o * chunk[k];
                                          for (std::size_t j = 0; j < chunk[k]; ++j) dst[j] += g[ofs + j];
                                      }
                                      ofs += chunk[k];
                                  }
                              }
                          });
}

template <class T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t length) {
    if (axis >= x.rank()) throw ShapeError("slice: axis out of range for " + shape_str(x.shape()));
    if (length == 0 || start + length > x.dim(axis)) {
        throw ShapeError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") out of bounds for axis " + std::to_string(axis) + " of " + shape_str(x.shape()));
    }
    Shape out_shape = x.shape();
    out_shape[axis] = length;
    const auto strides = detail::row_major_strides(x.shape());
    auto map = build_map(out_shape, [&](const std::vector<std::size_t>& idx) {
        std::size_t s = 0;
        for (std::size_t i = 0; i < idx.size(); ++i) s += (i == axis ? idx[i] + start : idx[i]) * strides[i];
        return s;
    });
    return gather<T>("slice", x, std::move(out_shape), std::move(map));
}

template <class T>
Tensor<T> expand(const Tensor<T>& x, const Shape& shape) {
    if (broadcast_shape(x.shape(), shape) != shape) {
        throw ShapeError("expand: " + shape_str(x.shape()) + " cannot broadcast to " + shape_str(shape));
    }
    const auto strides = detail::broadcast_strides(shape, x.shape());
    auto map = build_map(shape, [&](const std::vector<std::size_t>& idx) {
        std::size_t s = 0;
        for (std::size_t i = 0; i < idx.size(); ++i) s += idx[i] * strides[i];
        return s;
    });
    return gather<T>("expand", x, shape, std::move(map));
}

template <class T>
Tensor<T> pad(const Tensor<T>& x, const std::vector<std::pair<std::size_t, std::size_t>>& pads) {
    if (pads.size() != x.rank()) throw ShapeError("pad: need one (before, after) pair per axis of " + shape_str(x.shape()));
    Shape out_shape = x.shape();
    for (std::size_t i = 0; i < pads.size(); ++i) out_shape[i] += pads[i].first + pads[i].second;
    const auto strides = detail::row_major_strides(x.shape());
    auto map = build_map(out_shape, [&](const std::vector<std::size_t>& idx) {
        std::size_t s = 0;
        for (std::size_t i = 0; i < idx.size(); ++i) {
            if (idx[i] < pads[i].first || idx[i] >= pads[i].first + x.dim(i)) return kZero;
            s += (idx[i] - pads[i].first) * strides[i];
        }
        return s;
    });
    return gather<T>("pad", x, std::move(out_shape), std::move(map));
}

template <class T>
Tensor<T> roll(const Tensor<T>& x, const std::vector<long>& shifts) {
    if (shifts.size() != x.rank()) throw ShapeError("roll: need one shift per axis of " + shape_str(x.shape()));
    const auto strides = detail::row_major_strides(x.shape());
    std::vector<std::size_t> norm(shifts.size());
    for (std::size_t i = 0; i < shifts.size(); ++i) {
        const long n = static_cast<long>(x.dim(i));
        norm[i] = static_cast<std::size_t>(((shifts[i] % n) + n) % n);
    }
    auto map = build_map(x.shape(), [&](const std::vector<std::size_t>& idx) {
        std::size_t s = 0;
        for (std::size_t i = 0; i < idx.size(); ++i) {
            const auto n = x.dim(i);
            s += ((idx[i] + n - norm[i]) % n) * strides[i];
        }
        return s;
    });
    return gather<T>("roll", x, x.shape(), std::move(map));
}

template <class T>
Tensor<T> index_select(const Tensor<T>& x, const std::vector<std::size_t>& indices) {
    if (x.rank() < 1) throw ShapeError("index_select needs rank >= 1");
    const auto rows = x.dim(0);
    const auto width = x.numel() / rows;
    auto map = std::make_shared<std::vector<std::size_t>>(indices.size() * width);
    for (std::size_t r = 0; r < indices.size(); ++r) {
        if (indices[r] >= rows) {
            throw ShapeError("index_select: index " + std::to_string(indices[r]) + " out of range for " +
                             std::to_string(rows) + " rows");
        }
        for (std::size_t j = 0; j < width; ++j) (*map)[r * width + j] = indices[r] * width + j;
    }
    Shape out_shape = x.shape();
    out_shape[0] = indices.size();
    return gather<T>("index_select", x, std::move(out_shape), std::move(map));
}

#define MORPHWIN_INSTANTIATE_SHAPE(T)                                                                        \
    template Tensor<T> reshape<T>(const Tensor<T>&, Shape);                                                   \
    template Tensor<T> permute<T>(const Tensor<T>&, const std::vector<std::size_t>&);                         \
    template Tensor<T> concat<T>(const std::vector<Tensor<T>>&, std::size_t);                                 \
    template Tensor<T> slice<T>(const Tensor<T>&, std::size_t, std::size_t, std::size_t);                      \
    template Tensor<T> expand<T>(const Tensor<T>&, const Shape&);                                             \
    template Tensor<T> pad<T>(const Tensor<T>&, const std::vector<std::pair<std::size_t, std::size_t>>&);     \
    template Tensor<T> roll<T>(const Tensor<T>&, const std::vector<long>&);                                   \
    template Tensor<T> index_select<T>(const Tensor<T>&, const std::vector<std::size_t>&);

MORPHWIN_INSTANTIATE_SHAPE(float)
MORPHWIN_INSTANTIATE_SHAPE(double)

}  // namespace morphwin::ops
