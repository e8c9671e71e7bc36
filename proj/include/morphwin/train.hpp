#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "morphwin/adam.hpp"
#include "morphwin/params.hpp"
#include "morphwin/rfrnet.hpp"
#include "morphwin/warp.hpp"

namespace morphwin {

struct ImagePair {
    Tensor<float> moving;  // [D,H,W,1]
    Tensor<float> fixed;
};

struct TrainOptions {
    double lambda = 0.04;
    AdamOptions adam;
    std::size_t iterations = 200;
    std::uint64_t seed = 0;  // initialization and pair order
    std::size_t checkpoint_every = 0;  // 0: only at the end
    std::string checkpoint_path;       // empty: no checkpoints
    Border border = Border::Clamp;
    bool double_precision = false;  // run the model in float64
};

struct LossRecord {
    std::size_t iter = 0;  // 1-based
    double sim = 0;
    double reg = 0;
    double total = 0;
};

/// Raised when a loss becomes NaN or infinite. Carries the state needed
/// for a diagnostic dump.
class NonFiniteLoss : public Error {
public:
    NonFiniteLoss(std::size_t iteration, std::size_t pair, LossRecord record, Tensor<float> field);

    std::size_t iteration;
    std::size_t pair;
    LossRecord record;
    Tensor<float> field;
};

struct TrainResult {
    ParamSet<float> params;
    std::vector<LossRecord> log;
};

using IterationHook = std::function<void(const LossRecord&)>;

/// Adam on the unsupervised registration loss, one pair per iteration. Pairs
/// are visited in a seed-determined order, reshuffled after each pass.
/// Single-threaded and deterministic for a given seed.
TrainResult train_model(const ArchConfig& arch, const std::vector<ImagePair>& pairs, const TrainOptions& options,
                        const IterationHook& on_iteration = {});

/// Same, continuing from `initial` parameters.
TrainResult train_model(const ArchConfig& arch, ParamSet<float> initial, const std::vector<ImagePair>& pairs,
                        const TrainOptions& options, const IterationHook& on_iteration = {});

/// Network output for one pair (no tape).
Tensor<float> predict_field(const ParamSet<float>& params, const ArchConfig& arch, const Tensor<float>& moving,
                            const Tensor<float>& fixed, bool double_precision = false);

}  // namespace morphwin
