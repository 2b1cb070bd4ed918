#pragma once

#include <cmath>
#include <vector>

#include "autodiff.hpp"
#include "tensor.hpp"

namespace advnf {

// Adam with bias correction. step() descends along the stored gradients;
// grad_sign = -1 turns the same update into ascent (used for the
// discriminator, which maximizes the shared objective). Gradients are not
// cleared here -- callers reset them explicitly between steps.
class AdamState {
  public:
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    explicit AdamState(const std::vector<NodePtr>& params) : params_(params) {
        for (const auto& p : params_) {
            m_.emplace_back(p->value.shape(), 0.0);
            v_.emplace_back(p->value.shape(), 0.0);
        }
    }

    void step(double lr, double grad_sign = 1.0) {
        ++t_;
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
        for (std::size_t k = 0; k < params_.size(); ++k) {
            GraphNode& p = *params_[k];
            if (!p.has_grad) continue;  // parameter untouched by this objective
            Tensor& m = m_[k];
            Tensor& v = v_[k];
            for (std::size_t i = 0; i < m.size(); ++i) {
                const double g = grad_sign * p.grad[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                const double mhat = m[i] / c1;
                const double vhat = v[i] / c2;
                p.value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
        }
    }

    long steps_taken() const { return t_; }
    const std::vector<NodePtr>& params() const { return params_; }

    // Moment buffers are exposed for checkpointing.
    std::vector<Tensor>& m() { return m_; }
    std::vector<Tensor>& v() { return v_; }
    void set_steps(long t) { t_ = t; }

  private:
    std::vector<NodePtr> params_;
    std::vector<Tensor> m_, v_;
    long t_ = 0;
};

}  // namespace advnf
