#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "morphwin/config.hpp"
#include "morphwin/data_io.hpp"
#include "morphwin/metrics.hpp"
#include "morphwin/train.hpp"

namespace morphwin {

/// Seed of pair `index`: the index-th output of splitmix64 started at
/// `base`.
std::uint64_t pair_seed(std::uint64_t base, std::size_t index);

/// Mean Dice over the foreground labels of `fixed` (labels missing from
/// `warped` score 0).
double mean_organ_dice(const LabelMap& warped, const LabelMap& fixed);

struct ManifestEntry {
    std::size_t index = 0;
    std::uint64_t seed = 0;
    std::string moving;  // file names relative to the dataset directory
    std::string fixed;
    std::string field;
    double pre_dice = 0;
    std::string warnings;  // '; '-separated
};

struct Dataset {
    std::string dir;
    std::vector<ManifestEntry> entries;

    LabeledVolume moving(std::size_t i) const;
    LabeledVolume fixed(std::size_t i) const;
    Tensor<float> ground_truth(std::size_t i) const;
    Dims3 dims() const;  // of the first pair
    std::vector<ImagePair> image_pairs() const;
    std::vector<RegistrationPair> pairs() const;  // with ground truth
};

/// Pairs for seeds pair_seed(cfg.seed, 0..cfg.pairs-1) from cfg.phantom,
/// in memory.
std::vector<RegistrationPair> synthesize_pairs(const RunConfig& cfg);

/// Writes the pairs into `dir` (created if needed) with manifest.csv.
/// The manifest starts with the resolved config as '#' comment lines.
Dataset write_dataset(const RunConfig& cfg, const std::string& dir);

/// Throws ValidationError when the manifest is missing or malformed.
Dataset read_dataset(const std::string& dir);

std::vector<ImagePair> image_pairs(const std::vector<RegistrationPair>& pairs);

struct Registration {
    Tensor<float> field;
    Tensor<float> warped;  // moving intensity, trilinear
    LabelMap warped_labels;
};

Registration register_pair(const ParamSet<float>& params, const ArchConfig& arch, const LabeledVolume& moving,
                           const LabeledVolume& fixed, Border border = Border::Clamp, bool double_precision = false);

struct PairScore {
    std::size_t pair = 0;
    double pre_dice = 0;
    EvalReport report;  // after registration
};

/// Registers and scores every pair, `threads` at a time.
std::vector<PairScore> score_pairs(const ParamSet<float>& params, const ArchConfig& arch,
                                   const std::vector<RegistrationPair>& pairs, std::size_t threads = 1,
                                   Border border = Border::Clamp, bool double_precision = false);

/// MORPHWIN_THREADS when set to a positive integer, else the hardware
/// concurrency.
std::size_t thread_count_from_env();

}  // namespace morphwin
