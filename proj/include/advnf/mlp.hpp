#pragma once

#include <cstddef>
#include <vector>

#include "autodiff.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace advnf {

// Fully connected net with ReLU hidden layers. The final layer is linear,
// optionally followed by tanh. Hidden weights start uniform in +-1/sqrt(fan_in);
// zero_final zeroes the last layer so the net starts as the constant 0 (used by
// coupling nets so a fresh flow is the identity map).
class Mlp {
  public:
    enum class Output { linear, tanh };

    Mlp() = default;

    Mlp(std::size_t in_dim, const std::vector<std::size_t>& hidden, std::size_t out_dim,
        Output output, Rng& rng, bool zero_final) : output_(output) {
        std::vector<std::size_t> dims;
        dims.push_back(in_dim);
        for (std::size_t h : hidden) dims.push_back(h);
        dims.push_back(out_dim);
        for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
            const std::size_t fan_in = dims[l], fan_out = dims[l + 1];
            Tensor w({fan_in, fan_out});
            const bool last = (l + 2 == dims.size());
            if (!(last && zero_final)) {
                const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
                for (std::size_t i = 0; i < w.size(); ++i)
                    w[i] = rng.uniform(-bound, bound);
            }
            weights_.push_back(param(std::move(w)));
            biases_.push_back(param(Tensor({fan_out}, 0.0)));
        }
    }

    // x: (m, in_dim) -> (m, out_dim)
    NodePtr forward(const NodePtr& x) const {
        NodePtr h = x;
        for (std::size_t l = 0; l < weights_.size(); ++l) {
            h = op_add(op_matmul(h, weights_[l]), biases_[l]);
            const bool last = (l + 1 == weights_.size());
            if (!last)
                h = op_relu(h);
            else if (output_ == Output::tanh)
                h = op_tanh(h);
        }
        return h;
    }

    std::vector<NodePtr> params() const {
        std::vector<NodePtr> out;
        for (std::size_t l = 0; l < weights_.size(); ++l) {
            out.push_back(weights_[l]);
            out.push_back(biases_[l]);
        }
        return out;
    }

    std::size_t n_layers() const { return weights_.size(); }
    const NodePtr& weight(std::size_t l) const { return weights_[l]; }
    const NodePtr& bias(std::size_t l) const { return biases_[l]; }
    Output output_kind() const { return output_; }

  private:
    Output output_ = Output::linear;
    std::vector<NodePtr> weights_;
    std::vector<NodePtr> biases_;
};

}  // namespace advnf
