#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "morphwin/params.hpp"
#include "morphwin/swin.hpp"
#include "morphwin/tensor.hpp"
#include "morphwin/windowing.hpp"

namespace morphwin {

struct ArchConfig {
    std::size_t channels = 96;  // C
    Dims3 window{6, 4, 2};
    std::array<std::size_t, 4> heads{4, 4, 8, 8};
    std::size_t blocks_per_stage = 2;  // even: W-MSA/SW-MSA pairs
    // Output widths of the decoder stages at 1/16, 1/8, 1/4, 1/2 and full
    // resolution. Empty selects default_decoder_widths(channels).
    std::vector<std::size_t> decoder_widths;
    bool recovery_branch = true;
    bool wwa = true;
    bool wwa_window_gate_on_original = false;
    Dims3 input_dims{192, 128, 64};
};

/// (2C, C, C/2, C/4, max(4, C/6)).
std::vector<std::size_t> default_decoder_widths(std::size_t channels);

/// Resolved geometry of one encoder stage.
struct StagePlan {
    Dims3 dims{};
    std::size_t channels = 0;
    std::size_t heads = 0;
    std::size_t pairs = 0;
    Dims3 window{};       // clamped to dims
    std::size_t windows = 0;  // N of this stage
};

struct ArchPlan {
    Dims3 input{};
    Dims3 half{};
    std::array<StagePlan, 4> stages{};  // 1/4, 1/8, 1/16, 1/32
    std::vector<std::size_t> decoder_widths;
};

/// Validates `cfg` (throwing ValidationError with the offending field)
/// and resolves every stage. Deeper stages use ceil(dims/2); odd dims are
/// zero-padded before merging and the decoder crops back.
ArchPlan plan_architecture(const ArchConfig& cfg);

/// Copy of `base` with the recovery branch and/or WWA removed.
ArchConfig ablation_config(const ArchConfig& base, bool drop_rb, bool drop_wwa);

/// Fresh parameters: truncated normal (std 0.02) linears and bias tables,
/// He-normal convolutions (leaky slope 0.2), unit/zero norms, zero biases
/// and a zero deformation head.
ParamSet<float> init_params(const ArchConfig& cfg, std::uint64_t seed);

// ---- building blocks ----------------------------------------------------

/// Conv(k3) + bias + leaky ReLU(0.2).
template <class T>
Tensor<T> conv_block(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias, std::size_t stride);

/// [D,H,W,2] -> [D/4,H/4,W/4,C] through three convolution blocks.
/// `conv0_out` receives the 1/2-resolution activation when non-null.
template <class T>
Tensor<T> scpe(const Tensor<T>& x, const ParamSet<T>& params, Tensor<T>* conv0_out = nullptr);

/// 2x2x2 neighbours (row-major over dz, dy, dx) concatenated channel-wise
/// and projected 8C -> 2C by `weight` [8C, 2C].
template <class T>
Tensor<T> patch_merging(const Tensor<T>& x, const Tensor<T>& weight);

/// Linear C -> 4C by `weight` [C, 4C], channels rearranged into the 2x2x2
/// sub-voxels (row-major over dz, dy, dx) with C/2 channels each.
template <class T>
Tensor<T> patch_expanding(const Tensor<T>& x, const Tensor<T>& weight);

/// Deformation field [D,H,W,3], components (dz, dy, dx) in voxels.
template <class T>
Tensor<T> forward(const Tensor<T>& moving, const Tensor<T>& fixed, const ParamSet<T>& params, const ArchConfig& cfg);

}  // namespace morphwin
