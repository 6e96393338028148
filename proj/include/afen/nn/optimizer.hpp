#pragma once

#include <cstdint>
#include <vector>

#include "afen/nn/tensor.hpp"

namespace afen::nn {

enum class OptimizerKind { Adam, SgdMomentum };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::Adam;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double momentum = 0.9;  // SgdMomentum only
};

/// Bias-corrected Adam, or heavy-ball SGD. Moments are held in double and
/// keyed by position in the parameter list, which must not change between steps.
template <typename T>
class Optimizer {
public:
    explicit Optimizer(OptimizerConfig config = {}) : config_(config) {}

    void step(const std::vector<Param<T>*>& params);
    std::uint64_t steps() const noexcept { return steps_; }
    const OptimizerConfig& config() const noexcept { return config_; }

private:
    OptimizerConfig config_;
    std::uint64_t steps_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

extern template class Optimizer<float>;
extern template class Optimizer<double>;

}  // namespace afen::nn
