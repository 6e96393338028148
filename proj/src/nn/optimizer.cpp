#include "afen/nn/optimizer.hpp"

#include <cmath>

#include "afen/error.hpp"

namespace afen::nn {

template <typename T>
void Optimizer<T>::step(const std::vector<Param<T>*>& params) {
    if (m_.empty()) {
        m_.resize(params.size());
        v_.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i].assign(params[i]->value.size(), 0.0);
            if (config_.kind == OptimizerKind::Adam) v_[i].assign(params[i]->value.size(), 0.0);
        }
    }
    if (m_.size() != params.size()) throw Error(Errc::ShapeMismatch, "optimizer parameter list changed");
    ++steps_;
    const double lr = config_.learning_rate;
    if (config_.kind == OptimizerKind::SgdMomentum) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& p = *params[i];
            for (std::size_t j = 0; j < p.value.size(); ++j) {
                m_[i][j] = config_.momentum * m_[i][j] + p.grad[j];
                p.value[j] = static_cast<T>(p.value[j] - lr * m_[i][j]);
            }
        }
        return;
    }
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = *params[i];
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t j = 0; j < p.value.size(); ++j) {
            const double g = p.grad[j];
            m[j] = b1 * m[j] + (1.0 - b1) * g;
            v[j] = b2 * v[j] + (1.0 - b2) * g * g;
            const double mhat = m[j] / c1, vhat = v[j] / c2;
            p.value[j] = static_cast<T>(p.value[j] - lr * mhat / (std::sqrt(vhat) + config_.epsilon));
        }
    }
}

template class Optimizer<float>;
template class Optimizer<double>;

}  // namespace afen::nn
