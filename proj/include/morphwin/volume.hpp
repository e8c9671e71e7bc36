#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "morphwin/tensor.hpp"
#include "morphwin/windowing.hpp"

namespace morphwin {

using Label = std::uint16_t;
using Spacing = std::array<double, 3>;

/// Integer segmentation volume, row-major over (D, H, W). 0 is background.
struct LabelMap {
    Dims3 dims{};
    std::vector<Label> values;

    LabelMap() = default;
    LabelMap(Dims3 d, std::vector<Label> v) : dims(d), values(std::move(v)) {
        if (values.size() != dims[0] * dims[1] * dims[2]) throw ShapeError("label map size does not match its dims");
    }
    static LabelMap zeros(Dims3 d) { return LabelMap(d, std::vector<Label>(d[0] * d[1] * d[2], 0)); }

    std::size_t size() const { return values.size(); }
    std::size_t index(std::size_t z, std::size_t y, std::size_t x) const { return (z * dims[1] + y) * dims[2] + x; }
    Label at(std::size_t z, std::size_t y, std::size_t x) const { return values[index(z, y, x)]; }

    /// Sorted distinct non-zero labels.
    std::vector<Label> foreground_labels() const;

    bool operator==(const LabelMap&) const = default;
};

/// Intensity image [D,H,W,1] with optional labels and voxel spacing (mm).
struct LabeledVolume {
    Tensor<float> intensity;
    LabelMap labels;
    Spacing spacing{1.0, 1.0, 1.0};

    Dims3 dims() const { return {intensity.dim(0), intensity.dim(1), intensity.dim(2)}; }
};

}  // namespace morphwin
