#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "morphwin/params.hpp"

namespace morphwin {

struct AdamOptions {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <class T>
struct AdamState {
    std::uint64_t step = 0;
    std::unordered_map<std::string, std::vector<T>> first_moment;
    std::unordered_map<std::string, std::vector<T>> second_moment;
};

/// One bias-corrected Adam update of every entry of `params`, using the
/// same-named entry of `grads`.
template <class T>
void adam_step(ParamSet<T>& params, const ParamSet<T>& grads, AdamState<T>& state, const AdamOptions& options = {});

}  // namespace morphwin
