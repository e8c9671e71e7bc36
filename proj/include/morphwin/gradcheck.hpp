#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "morphwin/rng.hpp"
#include "morphwin/tensor.hpp"

namespace morphwin {

/// |analytic - numeric| / max(|analytic|, |numeric|, floor).
double relative_error(double analytic, double numeric, double floor);

struct GradcheckLine {
    std::string name;
    double worst = 0;  // worst relative error
    std::size_t coords = 0;
    double tolerance = 0;
    bool pass() const { return worst <= tolerance; }
};

struct GradcheckOptions {
    double eps = 1e-5;
    double tolerance = 1e-6;
    double floor = 1e-7;
    double component_tolerance = 1e-5;  // gating lines
    double block_tolerance = 1e-4;      // transformer block pair
    std::size_t max_coords = 48;  // per input tensor

    bool end_to_end = true;
    double e2e_eps = 1e-5;
    double e2e_tolerance = 1e-4;
    double e2e_floor = 1e-7;
    double e2e_relative_floor = 1e-4;  // times the largest sampled gradient
    std::size_t e2e_min_coords = 20;

    std::uint64_t seed = 0;
};

using ScalarFn = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

/// Central finite differences of `f` (which must return a scalar) against
/// reverse-mode gradients for every input; up to `max_coords` coordinates
/// per input, chosen at random when the input is larger.
GradcheckLine check_gradient(const std::string& name, const ScalarFn& f, const std::vector<Tensor<double>>& inputs,
                             const GradcheckOptions& options, Rng& rng);

/// Same for a tensor-valued `f`, reduced to sum(f(x) * R) with fixed
/// random weights R.
GradcheckLine check_op(const std::string& name, const ScalarFn& f, const std::vector<Tensor<double>>& inputs,
                       const GradcheckOptions& options, Rng& rng);

struct GradcheckReport {
    std::vector<GradcheckLine> lines;

    bool pass() const;
    std::string text() const;
};

/// Every differentiable primitive, the attention and gating components,
/// and (optionally) the whole network loss at a toy configuration.
GradcheckReport run_gradcheck(const GradcheckOptions& options = {});

/// End-to-end line alone.
GradcheckLine end_to_end_gradcheck(const GradcheckOptions& options);

}  // namespace morphwin
