#include "morphwin/windowing.hpp"

#include <algorithm>

#include "morphwin/ops.hpp"

namespace morphwin {

namespace {
const char* kAxisNames[3] = {"depth", "height", "width"};
}

WindowSpec::WindowSpec(Dims3 window_, Dims3 shift_, Dims3 dims_) : window(window_), shift(shift_), dims(dims_) {
    for (int a = 0; a < 3; ++a) {
        if (window[a] == 0 || dims[a] == 0) throw ValidationError("window and feature dims must be positive");
        if (dims[a] % window[a] != 0) {
            throw ValidationError(std::string("feature ") + kAxisNames[a] + " " + std::to_string(dims[a]) +
                                  " is not divisible by window extent " + std::to_string(window[a]));
        }
        if (shift[a] >= window[a]) {
            throw ValidationError(std::string("shift along ") + kAxisNames[a] + " must be smaller than the window");
        }
    }
}

WindowSpec WindowSpec::for_stage(const Dims3& configured, const Dims3& stage_dims, bool shifted) {
    Dims3 window{};
    Dims3 shift{};
    for (int a = 0; a < 3; ++a) {
        window[a] = std::min(configured[a], stage_dims[a]);
        shift[a] = (shifted && stage_dims[a] > configured[a]) ? configured[a] / 2 : 0;
    }
    return WindowSpec(window, shift, stage_dims);
}

std::size_t WindowSpec::count() const {
    return (dims[0] / window[0]) * (dims[1] / window[1]) * (dims[2] / window[2]);
}

std::size_t WindowSpec::elements() const { return window[0] * window[1] * window[2]; }

template <class T>
WindowSequence<T> window_partition(const Tensor<T>& x, const WindowSpec& spec) {
    if (x.rank() != 4 || x.dim(0) != spec.dims[0] || x.dim(1) != spec.dims[1] || x.dim(2) != spec.dims[2]) {
        throw ShapeError("window_partition: feature " + shape_str(x.shape()) + " does not match window spec dims");
    }
    const auto& d = spec.dims;
    const auto& w = spec.window;
    const auto c = x.dim(3);
    auto grid = ops::reshape(x, {d[0] / w[0], w[0], d[1] / w[1], w[1], d[2] / w[2], w[2], c});
    auto windows = ops::permute(grid, {0, 2, 4, 1, 3, 5, 6});
    return {ops::reshape(windows, {spec.count(), spec.elements(), c}), spec};
}

template <class T>
Tensor<T> window_reverse(const WindowSequence<T>& seq) {
    const auto& spec = seq.spec;
    const auto& x = seq.data;
    if (x.rank() != 3 || x.dim(0) != spec.count() || x.dim(1) != spec.elements()) {
        throw ShapeError("window_reverse: sequence " + shape_str(x.shape()) + " inconsistent with its window spec");
    }
    const auto& d = spec.dims;
    const auto& w = spec.window;
    const auto c = x.dim(2);
    auto grid = ops::reshape(x, {d[0] / w[0], d[1] / w[1], d[2] / w[2], w[0], w[1], w[2], c});
    auto volume = ops::permute(grid, {0, 3, 1, 4, 2, 5, 6});
    return ops::reshape(volume, {d[0], d[1], d[2], c});
}

template <class T>
Tensor<T> cyclic_shift(const Tensor<T>& x, const Dims3& shifts, ShiftDirection direction) {
    if (x.rank() != 4) throw ShapeError("cyclic_shift expects [D,H,W,C], got " + shape_str(x.shape()));
    const long sign = direction == ShiftDirection::Forward ? 1 : -1;
    return ops::roll(x, {sign * static_cast<long>(shifts[0]), sign * static_cast<long>(shifts[1]),
                         sign * static_cast<long>(shifts[2]), 0});
}

template <class T>
Tensor<T> shifted_window_mask(const WindowSpec& spec) {
    const auto n = spec.count();
    const auto k = spec.elements();
    std::vector<T> mask(n * k * k, T(0));
    if (spec.shifted()) {
        // After a forward roll by s, positions [0, s) hold content wrapped
        // from the far end of the axis; a region is the wrap side per axis.
        std::vector<int> region(spec.dims[0] * spec.dims[1] * spec.dims[2]);
        for (std::size_t z = 0; z < spec.dims[0]; ++z) {
            for (std::size_t y = 0; y < spec.dims[1]; ++y) {
                for (std::size_t x = 0; x < spec.dims[2]; ++x) {
                    const int rz = z < spec.shift[0] ? 1 : 0;
                    const int ry = y < spec.shift[1] ? 1 : 0;
                    const int rx = x < spec.shift[2] ? 1 : 0;
                    region[(z * spec.dims[1] + y) * spec.dims[2] + x] = rz * 4 + ry * 2 + rx;
                }
            }
        }
        Tensor<T> labels(Shape{spec.dims[0], spec.dims[1], spec.dims[2], 1},
                         std::vector<T>(region.begin(), region.end()));
        const auto seq = window_partition(labels, spec).data;
        const auto v = seq.data();
        for (std::size_t w = 0; w < n; ++w) {
            for (std::size_t i = 0; i < k; ++i) {
                for (std::size_t j = 0; j < k; ++j) {
                    if (v[w * k + i] != v[w * k + j]) mask[(w * k + i) * k + j] = static_cast<T>(kMaskValue);
                }
            }
        }
    }
    return Tensor<T>(Shape{n, k, k}, std::move(mask));
}

#define MORPHWIN_INSTANTIATE_WINDOWING(T)                                                       \
    template WindowSequence<T> window_partition<T>(const Tensor<T>&, const WindowSpec&);       \
    template Tensor<T> window_reverse<T>(const WindowSequence<T>&);                            \
    template Tensor<T> cyclic_shift<T>(const Tensor<T>&, const Dims3&, ShiftDirection);        \
    template Tensor<T> shifted_window_mask<T>(const WindowSpec&);

MORPHWIN_INSTANTIATE_WINDOWING(float)
MORPHWIN_INSTANTIATE_WINDOWING(double)

}  // namespace morphwin
