#pragma once

#include <array>
#include <cstddef>
#include <utility>
#include <vector>

#include "morphwin/tensor.hpp"

// Differentiable primitives. Every function works on Tensor<float> and
// Tensor<double>; results are recorded on the inputs' tape when any input
// is attached to one.
namespace morphwin::ops {

// ---- elementwise -------------------------------------------------------
// Binary ops broadcast under trailing-dimension rules.

template <class T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);

template <class T> Tensor<T> add(const Tensor<T>& a, T b);
template <class T> Tensor<T> mul(const Tensor<T>& a, T b);

template <class T> Tensor<T> neg(const Tensor<T>& x);
template <class T> Tensor<T> square(const Tensor<T>& x);
template <class T> Tensor<T> sigmoid(const Tensor<T>& x);
template <class T> Tensor<T> leaky_relu(const Tensor<T>& x, T negative_slope);
template <class T> Tensor<T> exp(const Tensor<T>& x);
template <class T> Tensor<T> sqrt(const Tensor<T>& x);

Shape broadcast_shape(const Shape& a, const Shape& b);

// ---- contractions ------------------------------------------------------

/// Batched product of [..., m, k] and [..., k, n]; batch dims broadcast.
template <class T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// x @ weight + bias over the last axis; weight is [in, out], bias [out].
template <class T> Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias);

/// Direct 3D cross-correlation. x: [D,H,W,Cin], kernel: [kd,kh,kw,Cin,Cout]
/// with odd extents, zero padding on every side.
template <class T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& kernel, std::size_t stride, std::size_t padding);

std::array<std::size_t, 3> conv3d_output_dims(const std::array<std::size_t, 3>& in, const std::array<std::size_t, 3>& k,
                                              std::size_t stride, std::size_t padding);

// ---- normalization and reductions --------------------------------------

/// Normalizes the last axis, then applies gamma/beta (both [C]).
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps);

template <class T> Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);

/// Mean over `axes` (removed from the shape). An empty list is the identity.
template <class T> Tensor<T> reduce_mean(const Tensor<T>& x, const std::vector<std::size_t>& axes);
template <class T> Tensor<T> reduce_sum(const Tensor<T>& x, const std::vector<std::size_t>& axes);
template <class T> Tensor<T> sum(const Tensor<T>& x);
template <class T> Tensor<T> mean(const Tensor<T>& x);

// ---- data movement -----------------------------------------------------

template <class T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <class T> Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& perm);
template <class T> Tensor<T> concat(const std::vector<Tensor<T>>& xs, std::size_t axis);
template <class T> Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t length);
template <class T> Tensor<T> expand(const Tensor<T>& x, const Shape& shape);

/// Zero padding; `pads[axis] = {before, after}`, one entry per axis.
template <class T> Tensor<T> pad(const Tensor<T>& x, const std::vector<std::pair<std::size_t, std::size_t>>& pads);

/// Toroidal roll: out[i] = x[(i - shift) mod n] along each axis.
template <class T> Tensor<T> roll(const Tensor<T>& x, const std::vector<long>& shifts);

/// Rows of x (axis 0) selected by `indices`.
template <class T> Tensor<T> index_select(const Tensor<T>& x, const std::vector<std::size_t>& indices);

}  // namespace morphwin::ops
