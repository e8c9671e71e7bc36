#pragma once

#include <cstddef>
#include <vector>

#include "morphwin/tensor.hpp"

namespace morphwin::ops::detail {

inline std::vector<std::size_t> row_major_strides(const Shape& shape) {
    std::vector<std::size_t> strides(shape.size(), 1);
    for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
    return strides;
}

// Strides of `in` aligned to `out` (rank-padded on the left); broadcast axes get 0.
inline std::vector<std::size_t> broadcast_strides(const Shape& out, const Shape& in) {
    std::vector<std::size_t> strides(out.size(), 0);
    const auto native = row_major_strides(in);
    const auto offset = out.size() - in.size();
    for (std::size_t i = 0; i < in.size(); ++i) {
        if (in[i] != 1) strides[offset + i] = native[i];
    }
    return strides;
}

inline bool is_suffix(const Shape& full, const Shape& tail) {
    if (tail.size() > full.size()) return false;
    for (std::size_t i = 0; i < tail.size(); ++i) {
        if (tail[tail.size() - 1 - i] != full[full.size() - 1 - i]) return false;
    }
    return true;
}

// Calls f(out_index, a_index, b_index) for every element of the broadcast result.
template <class F>
void for_each_broadcast(const Shape& out, const Shape& a, const Shape& b, F&& f) {
    const auto n = shape_numel(out);
    const auto na = shape_numel(a);
    const auto nb = shape_numel(b);
    if (na == n && nb == n) {
        for (std::size_t i = 0; i < n; ++i) f(i, i, i);
        return;
    }
    if (na == n && nb == 1) {
        for (std::size_t i = 0; i < n; ++i) f(i, i, 0);
        return;
    }
    if (nb == n && na == 1) {
        for (std::size_t i = 0; i < n; ++i) f(i, 0, i);
        return;
    }
    if (na == n && is_suffix(out, b)) {
        for (std::size_t i = 0, j = 0; i < n; ++i) {
            f(i, i, j);
            if (++j == nb) j = 0;
        }
        return;
    }
    if (nb == n && is_suffix(out, a)) {
        for (std::size_t i = 0, j = 0; i < n; ++i) {
            f(i, j, i);
            if (++j == na) j = 0;
        }
        return;
    }
    const auto sa = broadcast_strides(out, a);
    const auto sb = broadcast_strides(out, b);
    const auto rank = out.size();
    std::vector<std::size_t> idx(rank, 0);
    std::size_t ia = 0;
    std::size_t ib = 0;
    for (std::size_t i = 0; i < n; ++i) {
        f(i, ia, ib);
        for (std::size_t ax = rank; ax-- > 0;) {
            ++idx[ax];
            ia += sa[ax];
            ib += sb[ax];
            if (idx[ax] < out[ax]) break;
            ia -= sa[ax] * out[ax];
            ib -= sb[ax] * out[ax];
            idx[ax] = 0;
        }
    }
}

}  // namespace morphwin::ops::detail
