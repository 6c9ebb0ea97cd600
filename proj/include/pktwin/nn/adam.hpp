#pragma once
// Adam with bias correction. beta1 = 0.9, beta2 = 0.999, eps = 1e-8.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "pktwin/nn/tensor.hpp"

namespace pktwin::nn {

template <class T>
class Adam {
public:
    Adam(std::vector<Tensor<T>*> params, std::vector<Tensor<T>*> grads, double lr,
         double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : params_(std::move(params)), grads_(std::move(grads)), lr_(lr), beta1_(beta1),
          beta2_(beta2), eps_(eps) {
        if (params_.size() != grads_.size())
            throw std::invalid_argument("adam: params/grads size mismatch");
        m_.reserve(params_.size());
        v_.reserve(params_.size());
        for (auto* p : params_) {
            m_.emplace_back(p->shape);
            v_.emplace_back(p->shape);
        }
    }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, double(t_));
        const double bc2 = 1.0 - std::pow(beta2_, double(t_));
        for (size_t k = 0; k < params_.size(); ++k) {
            Tensor<T>& p = *params_[k];
            const Tensor<T>& g = *grads_[k];
            Tensor<T>& m = m_[k];
            Tensor<T>& v = v_[k];
            for (size_t i = 0; i < p.size(); ++i) {
                m[i] = T(beta1_) * m[i] + T(1.0 - beta1_) * g[i];
                v[i] = T(beta2_) * v[i] + T(1.0 - beta2_) * g[i] * g[i];
                const double mhat = double(m[i]) / bc1;
                const double vhat = double(v[i]) / bc2;
                p[i] -= T(lr_ * mhat / (std::sqrt(vhat) + eps_));
            }
        }
    }

    uint64_t steps() const { return t_; }
    void set_learning_rate(double lr) { lr_ = lr; }

private:
    std::vector<Tensor<T>*> params_;
    std::vector<Tensor<T>*> grads_;
    std::vector<Tensor<T>> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    uint64_t t_ = 0;
};

} // namespace pktwin::nn
