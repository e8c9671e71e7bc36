#pragma once

#include "morphwin/tensor.hpp"
#include "morphwin/volume.hpp"

namespace morphwin {

enum class Border {
    Clamp,  // sample positions are clamped to the volume (edge replication)
    Zero,   // corners outside the volume contribute zero
};

/// Identity sampling grid [D,H,W,3]: grid[z,y,x] = (z, y, x).
template <class T>
Tensor<T> sampling_grid(const Dims3& dims);

/// out[v] = trilinear sample of img at v + phi[v]. img is [D,H,W,C] and
/// phi is [D,H,W,3] in voxels, ordered (dz, dy, dx). Differentiable in both
/// arguments. At integer coordinates the derivative w.r.t. phi is taken
/// from the cell on the upper side; clamped coordinates have zero
/// derivative.
template <class T>
Tensor<T> warp_trilinear(const Tensor<T>& img, const Tensor<T>& phi, Border border = Border::Clamp);

/// Nearest-neighbour resampling of labels at v + phi[v] (rounded half up,
/// clamped to the volume).
template <class T>
LabelMap warp_nearest(const LabelMap& labels, const Tensor<T>& phi);

}  // namespace morphwin
