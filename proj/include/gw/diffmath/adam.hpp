#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "gw/common/error.hpp"
#include "gw/diffmath/graph.hpp"

namespace gw::diff {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Adam with bias correction. Moments are created lazily on the first step and
// bound to the shapes of the parameters seen then.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    const AdamConfig& config() const noexcept { return cfg_; }
    std::size_t step_count() const noexcept { return step_; }
    const std::vector<Matrix>& first_moment() const noexcept { return m_; }
    const std::vector<Matrix>& second_moment() const noexcept { return v_; }

    void step(std::span<Parameter* const> params, std::span<const Matrix> grads) {
        require(params.size() == grads.size(), "adam: parameter/gradient count mismatch");
        for (std::size_t i = 0; i < params.size(); ++i) {
            require(!params[i]->frozen, "adam: refusing to update a frozen parameter");
            require(params[i]->value.same_shape(grads[i]), "adam: parameter/gradient shape mismatch");
        }
        if (m_.empty()) {
            for (const Parameter* p : params) {
                m_.emplace_back(p->value.rows(), p->value.cols());
                v_.emplace_back(p->value.rows(), p->value.cols());
            }
        }
        require(m_.size() == params.size(), "adam: parameter set changed between steps");
        for (std::size_t i = 0; i < params.size(); ++i)
            require(m_[i].same_shape(params[i]->value), "adam: parameter shape changed between steps");

        ++step_;
        const double t = static_cast<double>(step_);
        const double bc1 = 1.0 - std::pow(cfg_.beta1, t);
        const double bc2 = 1.0 - std::pow(cfg_.beta2, t);
        const double lr = cfg_.learning_rate, b1 = cfg_.beta1, b2 = cfg_.beta2, eps = cfg_.epsilon;
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto w = as_eigen(params[i]->value).array();
            auto m = as_eigen(m_[i]).array();
            auto v = as_eigen(v_[i]).array();
            const auto g = as_eigen(grads[i]).array();
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            w -= lr * (m / bc1) / ((v / bc2).sqrt() + eps);
        }
    }

private:
    AdamConfig cfg_;
    std::size_t step_ = 0;
    std::vector<Matrix> m_;
    std::vector<Matrix> v_;
};

}  // namespace gw::diff
