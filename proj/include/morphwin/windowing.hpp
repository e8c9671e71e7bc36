#pragma once

#include <array>
#include <cstddef>

#include "morphwin/tensor.hpp"

namespace morphwin {

using Dims3 = std::array<std::size_t, 3>;

/// Window geometry of one stage: window extents, cyclic shift, and the
/// feature dims being partitioned.
struct WindowSpec {
    Dims3 window{};
    Dims3 shift{};
    Dims3 dims{};

    /// Validates divisibility of `dims` by `window` (naming the offending
    /// axis) and that shifts lie in [0, window).
    WindowSpec(Dims3 window, Dims3 shift, Dims3 dims);

    /// Stage geometry for a configured window: extents are clamped to the
    /// stage dims, and a shifted spec moves by floor(window/2) only along
    /// axes where the stage is larger than the window.
    static WindowSpec for_stage(const Dims3& configured, const Dims3& stage_dims, bool shifted);

    std::size_t count() const;     // N
    std::size_t elements() const;  // K
    bool shifted() const { return shift[0] + shift[1] + shift[2] > 0; }
};

/// [N, K, C] attention-ready layout. Windows are ordered row-major over the
/// window grid, elements row-major over (d, h, w) inside each window.
template <class T>
struct WindowSequence {
    Tensor<T> data;
    WindowSpec spec;
};

template <class T>
WindowSequence<T> window_partition(const Tensor<T>& x, const WindowSpec& spec);

template <class T>
Tensor<T> window_reverse(const WindowSequence<T>& w);

enum class ShiftDirection { Forward, Inverse };

/// Toroidal roll of the three spatial axes of [D, H, W, C]. Forward moves
/// content towards higher indices (out[i] = x[i - s]); Inverse undoes it.
template <class T>
Tensor<T> cyclic_shift(const Tensor<T>& x, const Dims3& shifts, ShiftDirection direction);

/// Additive attention mask [N, K, K] for a sequence partitioned from a
/// Forward-shifted feature map: 0 where both elements come from the same
/// side of every wrap seam, kMaskValue otherwise. All zeros when the spec
/// has no shift.
template <class T>
Tensor<T> shifted_window_mask(const WindowSpec& spec);

inline constexpr double kMaskValue = -1e9;

}  // namespace morphwin
