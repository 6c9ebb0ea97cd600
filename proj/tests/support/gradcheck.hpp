#pragma once
// Central-difference gradient harness shared by the unit suite and the
// acceptance suite. The objective for a layer is sum(c * forward(x)) for fixed
// random coefficients c; backward(c) must reproduce its gradient with respect
// to the input and every parameter.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "pktwin/nn/layers.hpp"
#include "pktwin/nn/tensor.hpp"
#include "pktwin/rng.hpp"

namespace gradcheck {

using pktwin::Xoshiro256;
using pktwin::nn::Layer;
using pktwin::nn::Tensor;

constexpr double kH = 1e-5;

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-2});
}

inline double fd(const std::function<double()>& f, double& slot, double h = kH) {
    const double orig = slot;
    slot = orig + h;
    const double fp = f();
    slot = orig - h;
    const double fm = f();
    slot = orig;
    return (fp - fm) / (2 * h);
}

inline Tensor<double> random_tensor(std::vector<size_t> shape, Xoshiro256& rng, double lo = -1,
                                    double hi = 1) {
    Tensor<double> t(std::move(shape));
    for (auto& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

// Inputs bounded away from zero, for layers with a kink at the origin.
inline Tensor<double> random_tensor_off_zero(std::vector<size_t> shape, Xoshiro256& rng) {
    Tensor<double> t(std::move(shape));
    for (auto& v : t.data) {
        const double mag = rng.uniform(0.05, 1.0);
        v = rng.bounded(2) ? mag : -mag;
    }
    return t;
}

// Max relative error between analytic and central-difference gradients over
// every input element and every parameter element.
inline double check_layer(Layer<double>& layer, Tensor<double> x, bool training) {
    Xoshiro256 rng(4242, 9);
    Tensor<double> y0 = layer.forward(x, training);
    const Tensor<double> c = random_tensor(y0.shape, rng);

    auto objective = [&] {
        const Tensor<double> y = layer.forward(x, training);
        double s = 0;
        for (size_t i = 0; i < y.size(); ++i) s += c[i] * y[i];
        return s;
    };

    layer.forward(x, training);
    const Tensor<double> dx = layer.backward(c);
    std::vector<Tensor<double>*> params, grads;
    layer.collect_params(params, grads);
    // Re-forwarding during fd overwrites the cached grads, so copy them now.
    std::vector<Tensor<double>> grad_copies;
    for (auto* g : grads) grad_copies.push_back(*g);

    double worst = 0;
    for (size_t i = 0; i < x.size(); ++i)
        worst = std::max(worst, rel_err(dx[i], fd(objective, x[i])));
    for (size_t k = 0; k < params.size(); ++k)
        for (size_t i = 0; i < params[k]->size(); ++i)
            worst = std::max(worst, rel_err(grad_copies[k][i], fd(objective, params[k]->data[i])));
    return worst;
}

} // namespace gradcheck
