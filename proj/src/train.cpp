#include "morphwin/train.hpp"

#include <cmath>
#include <numeric>

#include "morphwin/metrics.hpp"
#include "morphwin/rng.hpp"

namespace morphwin {

namespace {

constexpr std::uint64_t kOrderStream = 0x0bde5eedULL;

template <class T>
LossRecord step(ParamSet<T>& params, AdamState<T>& state, const ArchConfig& arch, const Tensor<T>& moving,
                const Tensor<T>& fixed, const TrainOptions& options, Tensor<T>& field) {
    Tape<T> tape;
    const auto attached = params.attach(tape);
    auto phi = forward(moving, fixed, attached, arch);
    auto loss = total_loss(moving, fixed, phi, options.lambda, options.border);
    LossRecord r;
    r.sim = static_cast<double>(loss.similarity.item());
    r.reg = static_cast<double>(loss.regularity.item());
    r.total = static_cast<double>(loss.total.item());
    field = phi.detach();
    if (!std::isfinite(r.total)) return r;
    const auto grads = attached.gradients(tape.backward(loss.total));
    adam_step(params, grads, state, options.adam);
    return r;
}

template <class T>
TrainResult run(const ArchConfig& arch, ParamSet<float> initial, const std::vector<ImagePair>& pairs,
                const TrainOptions& options, const IterationHook& hook) {
    if (pairs.empty()) throw ValidationError("training needs at least one pair");
    check_compatible(init_params(arch, 0), initial);
    std::vector<Tensor<T>> moving, fixed;
    for (const auto& p : pairs) {
        moving.push_back(p.moving.template cast<T>());
        fixed.push_back(p.fixed.template cast<T>());
    }

    auto params = initial.template cast<T>();
    AdamState<T> state;
    Rng order_rng(options.seed ^ kOrderStream);
    std::vector<std::size_t> order(pairs.size());
    std::size_t cursor = order.size();

    TrainResult result;
    for (std::size_t it = 1; it <= options.iterations; ++it) {
        if (cursor == order.size()) {
            std::iota(order.begin(), order.end(), 0);
            for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[order_rng.below(i)]);
            cursor = 0;
        }
        const auto k = order[cursor++];
        Tensor<T> field;
        auto record = step(params, state, arch, moving[k], fixed[k], options, field);
        record.iter = it;
        if (!std::isfinite(record.total)) throw NonFiniteLoss(it, k, record, field.template cast<float>());
        result.log.push_back(record);
        if (hook) hook(record);
        if (!options.checkpoint_path.empty() && options.checkpoint_every > 0 && it % options.checkpoint_every == 0) {
            save_checkpoint(options.checkpoint_path, params.template cast<float>());
        }
    }
    result.params = params.template cast<float>();
    if (!options.checkpoint_path.empty()) save_checkpoint(options.checkpoint_path, result.params);
    return result;
}

}  // namespace

NonFiniteLoss::NonFiniteLoss(std::size_t iteration_, std::size_t pair_, LossRecord record_, Tensor<float> field_)
    : Error("non-finite loss at iteration " + std::to_string(iteration_) + " (pair " + std::to_string(pair_) +
            "): sim " + std::to_string(record_.sim) + ", reg " + std::to_string(record_.reg)),
      iteration(iteration_),
      pair(pair_),
      record(record_),
      field(std::move(field_)) {}

TrainResult train_model(const ArchConfig& arch, const std::vector<ImagePair>& pairs, const TrainOptions& options,
                        const IterationHook& on_iteration) {
    return train_model(arch, init_params(arch, options.seed), pairs, options, on_iteration);
}

TrainResult train_model(const ArchConfig& arch, ParamSet<float> initial, const std::vector<ImagePair>& pairs,
                        const TrainOptions& options, const IterationHook& on_iteration) {
    if (options.double_precision) return run<double>(arch, std::move(initial), pairs, options, on_iteration);
    return run<float>(arch, std::move(initial), pairs, options, on_iteration);
}

Tensor<float> predict_field(const ParamSet<float>& params, const ArchConfig& arch, const Tensor<float>& moving,
                            const Tensor<float>& fixed, bool double_precision) {
    if (double_precision) {
        const auto p = params.cast<double>();
        return forward(moving.cast<double>(), fixed.cast<double>(), p, arch).cast<float>();
    }
    return forward(moving, fixed, params, arch);
}

}  // namespace morphwin
