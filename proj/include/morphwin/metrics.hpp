#pragma once

#include <optional>
#include <string>
#include <vector>

#include "morphwin/tensor.hpp"
#include "morphwin/volume.hpp"
#include "morphwin/warp.hpp"

namespace morphwin {

// ---- training objective ----------------------------------------------

/// Mean squared difference over all elements.
template <class T>
Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b);

/// Sum of squared forward differences of phi along z, y and x, divided by
/// D*H*W*3. Differences across the far boundary are not taken.
template <class T>
Tensor<T> diffusion_regularizer(const Tensor<T>& phi);

template <class T>
struct LossBreakdown {
    Tensor<T> similarity;  // mse(moving o phi, fixed)
    Tensor<T> regularity;  // diffusion energy of phi
    double lambda = 0.04;
    Tensor<T> total;
};

/// Warps `moving` by `phi`, then similarity + lambda * regularity, all on
/// the tape of the inputs.
template <class T>
LossBreakdown<T> total_loss(const Tensor<T>& moving, const Tensor<T>& fixed, const Tensor<T>& phi, double lambda = 0.04,
                            Border border = Border::Clamp);

// ---- evaluation ------------------------------------------------------

/// 2|A n B| / (|A| + |B|) for the voxels carrying `label`; 1 when both are
/// empty.
double dice(const LabelMap& a, const LabelMap& b, Label label);

/// Voxels of `label` with at least one 6-neighbour outside the label (the
/// volume exterior counts as outside). Row-major voxel indices.
std::vector<std::size_t> surface_voxels(const LabelMap& m, Label label);

/// 95th percentile (linear interpolation between order statistics) of the
/// directed surface distances A->B and B->A pooled, in millimetres.
/// nullopt when either mask is empty.
std::optional<double> hd95(const LabelMap& a, const LabelMap& b, Label label, const Spacing& spacing = {1, 1, 1});

/// Percentage of interior voxels where det(I + grad phi), by central
/// differences, is <= 0. Volumes without interior voxels give 0.
template <class T>
double folding_ratio(const Tensor<T>& phi);

struct TTest {
    double t = 0;
    double p = 1;  // two-sided
    std::size_t dof = 0;
};

/// Paired two-sided t-test on a[i] - b[i]. nullopt when the differences
/// have zero variance. Throws ValidationError on length mismatch or n < 2.
std::optional<TTest> paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

/// Linear-interpolation percentile (q in [0, 100]) of unsorted values.
double percentile(std::vector<double> values, double q);

struct LabelScore {
    Label label = 0;
    double dice = 0;
    std::optional<double> hd95;
    std::string warning;  // set when the label is missing from one side
};

struct EvalReport {
    std::vector<LabelScore> labels;
    double folding_percent = 0;

    double mean_dice() const;
    double std_dice() const;
    std::optional<double> mean_hd95() const;
    std::optional<double> std_hd95() const;
};

/// Scores every foreground label present in either map.
EvalReport evaluate(const LabelMap& warped, const LabelMap& fixed, const Tensor<float>& phi,
                    const Spacing& spacing = {1, 1, 1});

std::string report_text(const EvalReport& r);

/// label,dice,hd95_mm rows, then mean and std rows, then folding_percent.
std::string report_csv(const EvalReport& r);

}  // namespace morphwin
