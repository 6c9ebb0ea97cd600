#pragma once
// The four training objectives over per-packet sigmoid outputs: binary
// cross-entropy, focal loss, Dice loss and IoU loss. All of them honor the row
// validity mask: masked entries are excluded from every sum and from N.
// Probabilities are clamped to [eps, 1-eps] before any logarithm.

#include <cmath>
#include <stdexcept>

#include "pktwin/nn/tensor.hpp"

namespace pktwin::nn {

enum class LossKind : uint8_t { bce = 0, focal = 1, dice = 2, iou = 3 };

struct LossConfig {
    LossKind kind = LossKind::bce;
    double alpha = 0.25; // focal class-imbalance weighting, in (0,1)
    double gamma = 2.0;  // focal focusing parameter, >= 0
};

template <class T>
struct LossResult {
    T value = 0;
    Tensor<T> grad; // dL/dp, zero at masked entries
    size_t valid_count = 0;
};

constexpr double kProbEps = 1e-7;

template <class T>
LossResult<T> compute_loss(const Tensor<T>& p, const Tensor<T>& y, const Tensor<T>& mask,
                           const LossConfig& cfg) {
    if (p.size() != y.size() || p.size() != mask.size())
        throw std::invalid_argument("loss: shape mismatch");
    if (cfg.kind == LossKind::focal &&
        (cfg.alpha <= 0.0 || cfg.alpha >= 1.0 || cfg.gamma < 0.0))
        throw std::invalid_argument("loss: focal needs alpha in (0,1) and gamma >= 0");

    LossResult<T> out;
    out.grad = Tensor<T>(p.shape);
    size_t n = 0;
    for (size_t i = 0; i < mask.size(); ++i)
        if (mask[i] != T(0)) ++n;
    if (n == 0) throw std::runtime_error("loss: all entries masked");
    out.valid_count = n;

    const T eps = T(kProbEps);
    const T lo = eps, hi = T(1) - eps;

    switch (cfg.kind) {
        case LossKind::bce: {
            double acc = 0;
            for (size_t i = 0; i < p.size(); ++i) {
                if (mask[i] == T(0)) continue;
                const T pc = std::min(hi, std::max(lo, p[i]));
                const bool clamped = p[i] < lo || p[i] > hi;
                if (y[i] != T(0)) {
                    acc -= std::log(double(pc));
                    out.grad[i] = clamped ? T(0) : T(-1) / (T(n) * pc);
                } else {
                    acc -= std::log(1.0 - double(pc));
                    out.grad[i] = clamped ? T(0) : T(1) / (T(n) * (T(1) - pc));
                }
            }
            out.value = T(acc / double(n));
            break;
        }
        case LossKind::focal: {
            const T alpha = T(cfg.alpha), gamma = T(cfg.gamma);
            double acc = 0;
            for (size_t i = 0; i < p.size(); ++i) {
                if (mask[i] == T(0)) continue;
                const T pc = std::min(hi, std::max(lo, p[i]));
                const bool clamped = p[i] < lo || p[i] > hi;
                T g;
                if (y[i] != T(0)) {
                    const T q = T(1) - pc;
                    const T qg = std::pow(q, gamma);
                    acc -= double(alpha * qg * std::log(pc));
                    g = alpha * qg / pc;
                    if (gamma > T(0)) // the gamma * q^(gamma-1) term vanishes at gamma = 0
                        g -= alpha * gamma * std::pow(q, gamma - T(1)) * std::log(pc);
                    g = -g / T(n);
                } else {
                    const T pg = std::pow(pc, gamma);
                    acc -= double((T(1) - alpha) * pg * std::log(T(1) - pc));
                    g = -(T(1) - alpha) * pg / (T(1) - pc);
                    if (gamma > T(0))
                        g += (T(1) - alpha) * gamma * std::pow(pc, gamma - T(1)) *
                             std::log(T(1) - pc);
                    g = -g / T(n);
                }
                out.grad[i] = clamped ? T(0) : g;
            }
            out.value = T(acc / double(n));
            break;
        }
        case LossKind::dice: {
            double s_yp = 0, s_y = 0, s_p = 0;
            for (size_t i = 0; i < p.size(); ++i) {
                if (mask[i] == T(0)) continue;
                s_yp += double(y[i] * p[i]);
                s_y += double(y[i]);
                s_p += double(p[i]);
            }
            const double denom = s_y + s_p;
            if (denom == 0) { out.value = T(0); break; } // empty overlap of empties
            out.value = T(1.0 - 2.0 * s_yp / denom);
            for (size_t i = 0; i < p.size(); ++i) {
                if (mask[i] == T(0)) continue;
                out.grad[i] = T(-2.0 * (double(y[i]) * denom - s_yp) / (denom * denom));
            }
            break;
        }
        case LossKind::iou: {
            double s_yp = 0, s_y = 0, s_p = 0;
            for (size_t i = 0; i < p.size(); ++i) {
                if (mask[i] == T(0)) continue;
                s_yp += double(y[i] * p[i]);
                s_y += double(y[i]);
                s_p += double(p[i]);
            }
            const double uni = s_y + s_p - s_yp;
            if (uni == 0) { out.value = T(0); break; }
            out.value = T(1.0 - s_yp / uni);
            for (size_t i = 0; i < p.size(); ++i) {
                if (mask[i] == T(0)) continue;
                out.grad[i] =
                    T(-(double(y[i]) * uni - s_yp * (1.0 - double(y[i]))) / (uni * uni));
            }
            break;
        }
    }
    return out;
}

} // namespace pktwin::nn
