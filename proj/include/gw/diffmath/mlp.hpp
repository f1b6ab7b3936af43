#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "gw/common/rng.hpp"
#include "gw/diffmath/graph.hpp"

namespace gw::diff {

enum class Activation { relu, tanh };

// Fully connected stack; the activation is applied after every layer except
// the last. Weights are stored [out, in].
class Mlp {
public:
    Mlp() = default;

    Mlp(const std::string& name, const std::vector<std::size_t>& widths, Activation act) : act_(act) {
        require(widths.size() >= 2, "Mlp: need at least input and output widths");
        for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
            weights_.push_back({name + ".w" + std::to_string(l), Matrix(widths[l + 1], widths[l]), false});
            biases_.push_back({name + ".b" + std::to_string(l), Matrix(1, widths[l + 1]), false});
        }
    }

    std::size_t layers() const noexcept { return weights_.size(); }
    std::size_t in_width() const { return weights_.front().value.cols(); }
    std::size_t out_width() const { return weights_.back().value.rows(); }
    Activation activation() const noexcept { return act_; }

    Parameter& weight(std::size_t l) { return weights_.at(l); }
    Parameter& bias(std::size_t l) { return biases_.at(l); }
    const Parameter& weight(std::size_t l) const { return weights_.at(l); }
    const Parameter& bias(std::size_t l) const { return biases_.at(l); }

    // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
    void init_uniform(Rng& rng) {
        for (std::size_t l = 0; l < layers(); ++l) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(weights_[l].value.cols()));
            for (double& w : weights_[l].value.values()) w = uniform(rng, -bound, bound);
            for (double& b : biases_[l].value.values()) b = uniform(rng, -bound, bound);
        }
    }

    // Normal(0, 1/sqrt(fan_in)) weights, zero biases.
    void init_normal(Rng& rng) {
        for (std::size_t l = 0; l < layers(); ++l) {
            const double sd = 1.0 / std::sqrt(static_cast<double>(weights_[l].value.cols()));
            for (double& w : weights_[l].value.values()) w = normal(rng, 0.0, sd);
            biases_[l].value.fill(0.0);
        }
    }

    void set_frozen(bool frozen) {
        for (auto& p : weights_) p.frozen = frozen;
        for (auto& p : biases_) p.frozen = frozen;
    }

    Var forward(Graph& g, Var x) const {
        Var h = x;
        for (std::size_t l = 0; l < layers(); ++l) {
            h = g.add_bias(g.matmul_t(h, g.param(weights_[l])), g.param(biases_[l]));
            if (l + 1 < layers()) h = act_ == Activation::relu ? g.relu(h) : g.tanh(h);
        }
        return h;
    }

    Matrix apply(const Matrix& x) const {
        Graph g(false);
        return g.value(forward(g, g.constant(x)));
    }

    std::vector<Parameter*> parameters() {
        std::vector<Parameter*> out;
        for (std::size_t l = 0; l < layers(); ++l) {
            out.push_back(&weights_[l]);
            out.push_back(&biases_[l]);
        }
        return out;
    }
    std::vector<const Parameter*> parameters() const {
        std::vector<const Parameter*> out;
        for (std::size_t l = 0; l < layers(); ++l) {
            out.push_back(&weights_[l]);
            out.push_back(&biases_[l]);
        }
        return out;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const Parameter* p : parameters()) n += p->value.size();
        return n;
    }

private:
    Activation act_ = Activation::relu;
    std::vector<Parameter> weights_;
    std::vector<Parameter> biases_;
};

}  // namespace gw::diff
