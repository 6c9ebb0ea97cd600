#pragma once
// Layer zoo for the packet-window models: dense, 2D convolution (stride 1,
// same padding), max pooling, batch normalization, dropout, ReLU, sigmoid,
// LSTM, and the reshape/permute plumbing between them. Every layer caches what
// its backward pass needs; backward overwrites (never accumulates into) the
// parameter gradients, and returns the gradient with respect to its input so
// saliency can chain all the way back to the window bytes.
//
// Parameter init is Glorot uniform drawn from the model's init RNG in layer
// construction order, weights first (row-major), biases zero. The LSTM forget
// gate bias starts at 1.

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pktwin/nn/tensor.hpp"
#include "pktwin/rng.hpp"

namespace pktwin::nn {

template <class T>
class Layer {
public:
    virtual ~Layer() = default;
    virtual Tensor<T> forward(const Tensor<T>& x, bool training) = 0;
    virtual Tensor<T> backward(const Tensor<T>& dy) = 0;
    // Trainable parameters and their gradients, in matching order.
    virtual void collect_params(std::vector<Tensor<T>*>&, std::vector<Tensor<T>*>&) {}
    // Everything that must persist in a checkpoint (parameters plus running
    // statistics), with stable names under the given prefix.
    virtual void collect_state(const std::string&, std::vector<std::pair<std::string, Tensor<T>*>>&) {}
    virtual const char* kind() const = 0;
};

namespace detail {

template <class T>
void glorot_uniform(Tensor<T>& w, size_t fan_in, size_t fan_out, Xoshiro256& rng) {
    const double limit = std::sqrt(6.0 / double(fan_in + fan_out));
    for (auto& v : w.data) v = T(rng.uniform(-limit, limit));
}

} // namespace detail

// Affine map over the last axis; leading axes are treated as rows, so the same
// layer serves (B, F) inputs and per-timestep (B, T, F) inputs.
template <class T>
class Dense : public Layer<T> {
public:
    Dense(size_t in, size_t out, Xoshiro256& rng)
        : in_(in), out_(out), w_({in, out}), b_({out}), dw_({in, out}), db_({out}) {
        detail::glorot_uniform(w_, in, out, rng);
    }

    Tensor<T> forward(const Tensor<T>& x, bool) override {
        if (x.shape.empty() || x.shape.back() != in_)
            throw std::invalid_argument("dense: input width != " + std::to_string(in_));
        x_ = x;
        const size_t rows = x.size() / in_;
        auto shape = x.shape;
        shape.back() = out_;
        Tensor<T> y(shape);
        for (size_t r = 0; r < rows; ++r) {
            T* yr = y.data.data() + r * out_;
            for (size_t o = 0; o < out_; ++o) yr[o] = b_[o];
            const T* xr = x.data.data() + r * in_;
            for (size_t i = 0; i < in_; ++i) {
                const T xi = xr[i];
                const T* wi = w_.data.data() + i * out_;
                for (size_t o = 0; o < out_; ++o) yr[o] += xi * wi[o];
            }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        const size_t rows = x_.size() / in_;
        dw_.zero();
        db_.zero();
        Tensor<T> dx(x_.shape);
        for (size_t r = 0; r < rows; ++r) {
            const T* dyr = dy.data.data() + r * out_;
            const T* xr = x_.data.data() + r * in_;
            T* dxr = dx.data.data() + r * in_;
            for (size_t o = 0; o < out_; ++o) db_[o] += dyr[o];
            for (size_t i = 0; i < in_; ++i) {
                const T* wi = w_.data.data() + i * out_;
                T* dwi = dw_.data.data() + i * out_;
                T acc = 0;
                const T xi = xr[i];
                for (size_t o = 0; o < out_; ++o) {
                    acc += dyr[o] * wi[o];
                    dwi[o] += xi * dyr[o];
                }
                dxr[i] = acc;
            }
        }
        return dx;
    }

    void collect_params(std::vector<Tensor<T>*>& p, std::vector<Tensor<T>*>& g) override {
        p.push_back(&w_); g.push_back(&dw_);
        p.push_back(&b_); g.push_back(&db_);
    }

    void collect_state(const std::string& prefix,
                       std::vector<std::pair<std::string, Tensor<T>*>>& out) override {
        out.emplace_back(prefix + ".w", &w_);
        out.emplace_back(prefix + ".b", &b_);
    }

    const char* kind() const override { return "dense"; }

    size_t input_size() const { return in_; }
    Tensor<T>& weights() { return w_; }
    Tensor<T>& bias() { return b_; }

private:
    size_t in_, out_;
    Tensor<T> w_, b_, dw_, db_, x_;
};

template <class T>
class Relu : public Layer<T> {
public:
    Tensor<T> forward(const Tensor<T>& x, bool) override {
        x_ = x;
        Tensor<T> y(x.shape);
        for (size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        Tensor<T> dx(x_.shape);
        for (size_t i = 0; i < dx.size(); ++i) dx[i] = x_[i] > T(0) ? dy[i] : T(0);
        return dx;
    }

    const char* kind() const override { return "relu"; }

private:
    Tensor<T> x_;
};

template <class T>
class Sigmoid : public Layer<T> {
public:
    Tensor<T> forward(const Tensor<T>& x, bool) override {
        y_ = Tensor<T>(x.shape);
        for (size_t i = 0; i < x.size(); ++i) y_[i] = T(1) / (T(1) + std::exp(-x[i]));
        return y_;
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        Tensor<T> dx(y_.shape);
        for (size_t i = 0; i < dx.size(); ++i) dx[i] = dy[i] * y_[i] * (T(1) - y_[i]);
        return dx;
    }

    const char* kind() const override { return "sigmoid"; }

private:
    Tensor<T> y_;
};

// Inverted dropout: surviving activations are scaled by 1/keep during
// training so inference is a plain identity.
template <class T>
class Dropout : public Layer<T> {
public:
    Dropout(double rate, Xoshiro256* rng) : rate_(rate), rng_(rng) {}

    Tensor<T> forward(const Tensor<T>& x, bool training) override {
        training_ = training && rate_ > 0.0;
        if (!training_) return x;
        const T scale = T(1.0 / (1.0 - rate_));
        mask_ = Tensor<T>(x.shape);
        Tensor<T> y(x.shape);
        for (size_t i = 0; i < x.size(); ++i) {
            mask_[i] = rng_->next_double() >= rate_ ? scale : T(0);
            y[i] = x[i] * mask_[i];
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        if (!training_) return dy;
        Tensor<T> dx(dy.shape);
        for (size_t i = 0; i < dx.size(); ++i) dx[i] = dy[i] * mask_[i];
        return dx;
    }

    const char* kind() const override { return "dropout"; }

private:
    double rate_;
    Xoshiro256* rng_;
    bool training_ = false;
    Tensor<T> mask_;
};

// Batch normalization over the last axis. Training normalizes with batch
// statistics (biased variance) and folds them into the running estimates;
// inference normalizes with the running estimates.
template <class T>
class BatchNorm : public Layer<T> {
public:
    explicit BatchNorm(size_t features, double momentum = 0.1, double eps = 1e-5)
        : f_(features), momentum_(momentum), eps_(eps), gamma_({features}), beta_({features}),
          dgamma_({features}), dbeta_({features}), running_mean_({features}),
          running_var_({features}) {
        gamma_.fill(T(1));
        running_var_.fill(T(1)); // sane inference on a model that never trained
    }

    Tensor<T> forward(const Tensor<T>& x, bool training) override {
        if (x.shape.empty() || x.shape.back() != f_)
            throw std::invalid_argument("batchnorm: feature width != " + std::to_string(f_));
        training_ = training;
        const size_t rows = x.size() / f_;
        Tensor<T> y(x.shape);
        if (training) {
            mean_ = Tensor<T>({f_});
            var_ = Tensor<T>({f_});
            for (size_t r = 0; r < rows; ++r)
                for (size_t j = 0; j < f_; ++j) mean_[j] += x[r * f_ + j];
            for (size_t j = 0; j < f_; ++j) mean_[j] /= T(rows);
            for (size_t r = 0; r < rows; ++r)
                for (size_t j = 0; j < f_; ++j) {
                    const T d = x[r * f_ + j] - mean_[j];
                    var_[j] += d * d;
                }
            for (size_t j = 0; j < f_; ++j) var_[j] /= T(rows);
            inv_std_ = Tensor<T>({f_});
            for (size_t j = 0; j < f_; ++j)
                inv_std_[j] = T(1) / std::sqrt(var_[j] + T(eps_));
            xhat_ = Tensor<T>(x.shape);
            for (size_t r = 0; r < rows; ++r)
                for (size_t j = 0; j < f_; ++j) {
                    const size_t k = r * f_ + j;
                    xhat_[k] = (x[k] - mean_[j]) * inv_std_[j];
                    y[k] = gamma_[j] * xhat_[k] + beta_[j];
                }
            for (size_t j = 0; j < f_; ++j) {
                running_mean_[j] = T(1.0 - momentum_) * running_mean_[j] + T(momentum_) * mean_[j];
                running_var_[j] = T(1.0 - momentum_) * running_var_[j] + T(momentum_) * var_[j];
            }
        } else {
            inv_std_ = Tensor<T>({f_});
            for (size_t j = 0; j < f_; ++j)
                inv_std_[j] = T(1) / std::sqrt(running_var_[j] + T(eps_));
            xhat_ = Tensor<T>(x.shape);
            for (size_t r = 0; r < rows; ++r)
                for (size_t j = 0; j < f_; ++j) {
                    const size_t k = r * f_ + j;
                    xhat_[k] = (x[k] - running_mean_[j]) * inv_std_[j];
                    y[k] = gamma_[j] * xhat_[k] + beta_[j];
                }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        const size_t rows = dy.size() / f_;
        dgamma_.zero();
        dbeta_.zero();
        for (size_t r = 0; r < rows; ++r)
            for (size_t j = 0; j < f_; ++j) {
                const size_t k = r * f_ + j;
                dgamma_[j] += dy[k] * xhat_[k];
                dbeta_[j] += dy[k];
            }
        Tensor<T> dx(dy.shape);
        if (training_) {
            // Full Jacobian through the batch mean and variance.
            for (size_t r = 0; r < rows; ++r)
                for (size_t j = 0; j < f_; ++j) {
                    const size_t k = r * f_ + j;
                    dx[k] = gamma_[j] * inv_std_[j] / T(rows) *
                            (T(rows) * dy[k] - dbeta_[j] - xhat_[k] * dgamma_[j]);
                }
        } else {
            for (size_t r = 0; r < rows; ++r)
                for (size_t j = 0; j < f_; ++j) {
                    const size_t k = r * f_ + j;
                    dx[k] = dy[k] * gamma_[j] * inv_std_[j];
                }
        }
        return dx;
    }

    void collect_params(std::vector<Tensor<T>*>& p, std::vector<Tensor<T>*>& g) override {
        p.push_back(&gamma_); g.push_back(&dgamma_);
        p.push_back(&beta_); g.push_back(&dbeta_);
    }

    void collect_state(const std::string& prefix,
                       std::vector<std::pair<std::string, Tensor<T>*>>& out) override {
        out.emplace_back(prefix + ".gamma", &gamma_);
        out.emplace_back(prefix + ".beta", &beta_);
        out.emplace_back(prefix + ".running_mean", &running_mean_);
        out.emplace_back(prefix + ".running_var", &running_var_);
    }

    const char* kind() const override { return "batchnorm"; }

    Tensor<T>& running_mean() { return running_mean_; }
    Tensor<T>& running_var() { return running_var_; }

private:
    size_t f_;
    double momentum_, eps_;
    bool training_ = false;
    Tensor<T> gamma_, beta_, dgamma_, dbeta_, running_mean_, running_var_;
    Tensor<T> mean_, var_, inv_std_, xhat_;
};

// Stride-1 2D convolution with same padding (odd kernels). A 1-by-k kernel
// gives the per-row 1D convolution the hybrid model uses.
template <class T>
class Conv2d : public Layer<T> {
public:
    Conv2d(size_t in_ch, size_t out_ch, size_t kh, size_t kw, Xoshiro256& rng)
        : in_ch_(in_ch), out_ch_(out_ch), kh_(kh), kw_(kw), ph_((kh - 1) / 2), pw_((kw - 1) / 2),
          w_({out_ch, in_ch, kh, kw}), b_({out_ch}), dw_({out_ch, in_ch, kh, kw}), db_({out_ch}) {
        detail::glorot_uniform(w_, in_ch * kh * kw, out_ch * kh * kw, rng);
    }

    Tensor<T> forward(const Tensor<T>& x, bool) override {
        if (x.shape.size() != 4 || x.dim(1) != in_ch_)
            throw std::invalid_argument("conv2d: want (B, " + std::to_string(in_ch_) + ", H, W)");
        x_ = x;
        const size_t b = x.dim(0), h = x.dim(2), w = x.dim(3);
        Tensor<T> y({b, out_ch_, h, w});
        for (size_t n = 0; n < b; ++n)
            for (size_t oc = 0; oc < out_ch_; ++oc)
                for (size_t oh = 0; oh < h; ++oh)
                    for (size_t ow = 0; ow < w; ++ow) {
                        T acc = b_[oc];
                        for (size_t ic = 0; ic < in_ch_; ++ic)
                            for (size_t r = 0; r < kh_; ++r) {
                                const size_t ih = oh + r;
                                if (ih < ph_ || ih - ph_ >= h) continue;
                                const T* xrow = x.data.data() +
                                                ((n * in_ch_ + ic) * h + (ih - ph_)) * w;
                                const T* wrow = w_.data.data() +
                                                ((oc * in_ch_ + ic) * kh_ + r) * kw_;
                                for (size_t c = 0; c < kw_; ++c) {
                                    const size_t iw = ow + c;
                                    if (iw < pw_ || iw - pw_ >= w) continue;
                                    acc += xrow[iw - pw_] * wrow[c];
                                }
                            }
                        y.data[((n * out_ch_ + oc) * h + oh) * w + ow] = acc;
                    }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        const size_t b = x_.dim(0), h = x_.dim(2), w = x_.dim(3);
        dw_.zero();
        db_.zero();
        Tensor<T> dx(x_.shape);
        for (size_t n = 0; n < b; ++n)
            for (size_t oc = 0; oc < out_ch_; ++oc)
                for (size_t oh = 0; oh < h; ++oh)
                    for (size_t ow = 0; ow < w; ++ow) {
                        const T g = dy.data[((n * out_ch_ + oc) * h + oh) * w + ow];
                        db_[oc] += g;
                        for (size_t ic = 0; ic < in_ch_; ++ic)
                            for (size_t r = 0; r < kh_; ++r) {
                                const size_t ih = oh + r;
                                if (ih < ph_ || ih - ph_ >= h) continue;
                                T* dxrow = dx.data.data() +
                                           ((n * in_ch_ + ic) * h + (ih - ph_)) * w;
                                const T* xrow = x_.data.data() +
                                                ((n * in_ch_ + ic) * h + (ih - ph_)) * w;
                                const T* wrow = w_.data.data() +
                                                ((oc * in_ch_ + ic) * kh_ + r) * kw_;
                                T* dwrow = dw_.data.data() +
                                           ((oc * in_ch_ + ic) * kh_ + r) * kw_;
                                for (size_t c = 0; c < kw_; ++c) {
                                    const size_t iw = ow + c;
                                    if (iw < pw_ || iw - pw_ >= w) continue;
                                    dxrow[iw - pw_] += g * wrow[c];
                                    dwrow[c] += g * xrow[iw - pw_];
                                }
                            }
                    }
        return dx;
    }

    void collect_params(std::vector<Tensor<T>*>& p, std::vector<Tensor<T>*>& g) override {
        p.push_back(&w_); g.push_back(&dw_);
        p.push_back(&b_); g.push_back(&db_);
    }

    void collect_state(const std::string& prefix,
                       std::vector<std::pair<std::string, Tensor<T>*>>& out) override {
        out.emplace_back(prefix + ".w", &w_);
        out.emplace_back(prefix + ".b", &b_);
    }

    const char* kind() const override { return "conv2d"; }

private:
    size_t in_ch_, out_ch_, kh_, kw_, ph_, pw_;
    Tensor<T> w_, b_, dw_, db_, x_;
};

// Non-overlapping max pooling; output dims are floored, trailing rows/columns
// that do not fill a window are dropped.
template <class T>
class MaxPool2d : public Layer<T> {
public:
    MaxPool2d(size_t kh, size_t kw) : kh_(kh), kw_(kw) {}

    Tensor<T> forward(const Tensor<T>& x, bool) override {
        in_shape_ = x.shape;
        const size_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
        const size_t oh = h / kh_, ow = w / kw_;
        Tensor<T> y({b, c, oh, ow});
        argmax_.assign(y.size(), 0);
        for (size_t n = 0; n < b; ++n)
            for (size_t ch = 0; ch < c; ++ch)
                for (size_t i = 0; i < oh; ++i)
                    for (size_t j = 0; j < ow; ++j) {
                        size_t best = ((n * c + ch) * h + i * kh_) * w + j * kw_;
                        T best_v = x.data[best];
                        for (size_t r = 0; r < kh_; ++r)
                            for (size_t s = 0; s < kw_; ++s) {
                                const size_t k = ((n * c + ch) * h + i * kh_ + r) * w + j * kw_ + s;
                                if (x.data[k] > best_v) { best_v = x.data[k]; best = k; }
                            }
                        const size_t o = ((n * c + ch) * oh + i) * ow + j;
                        y.data[o] = best_v;
                        argmax_[o] = best;
                    }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        Tensor<T> dx(in_shape_);
        for (size_t o = 0; o < dy.size(); ++o) dx.data[argmax_[o]] += dy.data[o];
        return dx;
    }

    const char* kind() const override { return "maxpool"; }

private:
    size_t kh_, kw_;
    std::vector<size_t> in_shape_;
    std::vector<size_t> argmax_;
};

// Changes the per-sample shape; the batch axis is preserved and data is not
// touched.
template <class T>
class Reshape : public Layer<T> {
public:
    explicit Reshape(std::vector<size_t> sample_shape) : sample_shape_(std::move(sample_shape)) {}

    Tensor<T> forward(const Tensor<T>& x, bool) override {
        in_shape_ = x.shape;
        Tensor<T> y = x;
        y.shape.assign(1, x.dim(0));
        y.shape.insert(y.shape.end(), sample_shape_.begin(), sample_shape_.end());
        if (Tensor<T>::count(y.shape) != x.size())
            throw std::runtime_error("reshape: element count mismatch");
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        Tensor<T> dx = dy;
        dx.shape = in_shape_;
        return dx;
    }

    const char* kind() const override { return "reshape"; }

private:
    std::vector<size_t> sample_shape_;
    std::vector<size_t> in_shape_;
};

// (B, C, H, W) -> (B, H, C*W): folds the channel maps of each packet row into
// one per-row feature vector, turning conv output into an LSTM step sequence.
template <class T>
class RowFeatures : public Layer<T> {
public:
    Tensor<T> forward(const Tensor<T>& x, bool) override {
        in_shape_ = x.shape;
        const size_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
        Tensor<T> y({b, h, c * w});
        for (size_t n = 0; n < b; ++n)
            for (size_t ch = 0; ch < c; ++ch)
                for (size_t i = 0; i < h; ++i)
                    for (size_t j = 0; j < w; ++j)
                        y.data[(n * h + i) * (c * w) + ch * w + j] =
                            x.data[((n * c + ch) * h + i) * w + j];
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        const size_t b = in_shape_[0], c = in_shape_[1], h = in_shape_[2], w = in_shape_[3];
        Tensor<T> dx(in_shape_);
        for (size_t n = 0; n < b; ++n)
            for (size_t ch = 0; ch < c; ++ch)
                for (size_t i = 0; i < h; ++i)
                    for (size_t j = 0; j < w; ++j)
                        dx.data[((n * c + ch) * h + i) * w + j] =
                            dy.data[(n * h + i) * (c * w) + ch * w + j];
        return dx;
    }

    const char* kind() const override { return "rowfeatures"; }

private:
    std::vector<size_t> in_shape_;
};

// Single-layer unidirectional LSTM over (B, T, F), emitting the hidden state
// at every step. Gate order in the packed weight matrices is i, f, g, o.
template <class T>
class Lstm : public Layer<T> {
public:
    Lstm(size_t input, size_t hidden, Xoshiro256& rng)
        : f_(input), h_(hidden), w_({input, 4 * hidden}), u_({hidden, 4 * hidden}),
          b_({4 * hidden}), dw_({input, 4 * hidden}), du_({hidden, 4 * hidden}),
          db_({4 * hidden}) {
        detail::glorot_uniform(w_, input, 4 * hidden, rng);
        detail::glorot_uniform(u_, hidden, 4 * hidden, rng);
        for (size_t j = 0; j < hidden; ++j) b_[hidden + j] = T(1); // forget gate
    }

    Tensor<T> forward(const Tensor<T>& x, bool) override {
        if (x.shape.size() != 3 || x.dim(2) != f_)
            throw std::invalid_argument("lstm: want (B, T, " + std::to_string(f_) + ")");
        x_ = x;
        const size_t b = x.dim(0), t_steps = x.dim(1);
        gates_.assign(t_steps, Tensor<T>({b, 4 * h_}));
        cells_.assign(t_steps, Tensor<T>({b, h_}));
        tanh_c_.assign(t_steps, Tensor<T>({b, h_}));
        hidden_.assign(t_steps + 1, Tensor<T>({b, h_})); // hidden_[0] = h at t=-1

        Tensor<T> y({b, t_steps, h_});
        Tensor<T> c_prev({b, h_});
        for (size_t t = 0; t < t_steps; ++t) {
            Tensor<T>& z = gates_[t];
            const Tensor<T>& h_prev = hidden_[t];
            for (size_t n = 0; n < b; ++n) {
                T* zr = z.data.data() + n * 4 * h_;
                for (size_t j = 0; j < 4 * h_; ++j) zr[j] = b_[j];
                const T* xr = x.data.data() + (n * t_steps + t) * f_;
                for (size_t i = 0; i < f_; ++i) {
                    const T xi = xr[i];
                    const T* wi = w_.data.data() + i * 4 * h_;
                    for (size_t j = 0; j < 4 * h_; ++j) zr[j] += xi * wi[j];
                }
                const T* hr = h_prev.data.data() + n * h_;
                for (size_t i = 0; i < h_; ++i) {
                    const T hi = hr[i];
                    const T* ui = u_.data.data() + i * 4 * h_;
                    for (size_t j = 0; j < 4 * h_; ++j) zr[j] += hi * ui[j];
                }
            }
            for (size_t n = 0; n < b; ++n)
                for (size_t j = 0; j < h_; ++j) {
                    T* zr = z.data.data() + n * 4 * h_;
                    const T ig = sigmoid(zr[j]);
                    const T fg = sigmoid(zr[h_ + j]);
                    const T gg = std::tanh(zr[2 * h_ + j]);
                    const T og = sigmoid(zr[3 * h_ + j]);
                    zr[j] = ig; // cache activated gates in place
                    zr[h_ + j] = fg;
                    zr[2 * h_ + j] = gg;
                    zr[3 * h_ + j] = og;
                    const T c = fg * c_prev[n * h_ + j] + ig * gg;
                    cells_[t][n * h_ + j] = c;
                    const T tc = std::tanh(c);
                    tanh_c_[t][n * h_ + j] = tc;
                    const T hv = og * tc;
                    hidden_[t + 1][n * h_ + j] = hv;
                    y.data[(n * t_steps + t) * h_ + j] = hv;
                }
            c_prev = cells_[t];
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        const size_t b = x_.dim(0), t_steps = x_.dim(1);
        dw_.zero();
        du_.zero();
        db_.zero();
        Tensor<T> dx(x_.shape);
        Tensor<T> dh_next({b, h_}), dc_next({b, h_});
        Tensor<T> dz({b, 4 * h_});
        const Tensor<T> zero_cell({b, h_});

        for (size_t t = t_steps; t-- > 0;) {
            const Tensor<T>& z = gates_[t];
            const Tensor<T>& c_prev_t = t > 0 ? cells_[t - 1] : zero_cell;
            for (size_t n = 0; n < b; ++n)
                for (size_t j = 0; j < h_; ++j) {
                    const size_t k = n * h_ + j;
                    const T* zr = z.data.data() + n * 4 * h_;
                    const T ig = zr[j], fg = zr[h_ + j], gg = zr[2 * h_ + j], og = zr[3 * h_ + j];
                    const T tc = tanh_c_[t][k];
                    const T dh = dy.data[(n * t_steps + t) * h_ + j] + dh_next[k];
                    const T dc = dc_next[k] + dh * og * (T(1) - tc * tc);
                    const T d_i = dc * gg;
                    const T d_f = dc * c_prev_t.data[k];
                    const T d_g = dc * ig;
                    const T d_o = dh * tc;
                    T* dzr = dz.data.data() + n * 4 * h_;
                    dzr[j] = d_i * ig * (T(1) - ig);
                    dzr[h_ + j] = d_f * fg * (T(1) - fg);
                    dzr[2 * h_ + j] = d_g * (T(1) - gg * gg);
                    dzr[3 * h_ + j] = d_o * og * (T(1) - og);
                    dc_next[k] = dc * fg;
                }
            // Parameter grads and the carries into step t-1.
            dh_next.zero();
            const Tensor<T>& h_prev = hidden_[t];
            for (size_t n = 0; n < b; ++n) {
                const T* dzr = dz.data.data() + n * 4 * h_;
                for (size_t j = 0; j < 4 * h_; ++j) db_[j] += dzr[j];
                const T* xr = x_.data.data() + (n * t_steps + t) * f_;
                T* dxr = dx.data.data() + (n * t_steps + t) * f_;
                for (size_t i = 0; i < f_; ++i) {
                    const T* wi = w_.data.data() + i * 4 * h_;
                    T* dwi = dw_.data.data() + i * 4 * h_;
                    T acc = 0;
                    for (size_t j = 0; j < 4 * h_; ++j) {
                        acc += dzr[j] * wi[j];
                        dwi[j] += xr[i] * dzr[j];
                    }
                    dxr[i] = acc;
                }
                const T* hr = h_prev.data.data() + n * h_;
                T* dhr = dh_next.data.data() + n * h_;
                for (size_t i = 0; i < h_; ++i) {
                    const T* ui = u_.data.data() + i * 4 * h_;
                    T* dui = du_.data.data() + i * 4 * h_;
                    T acc = 0;
                    for (size_t j = 0; j < 4 * h_; ++j) {
                        acc += dzr[j] * ui[j];
                        dui[j] += hr[i] * dzr[j];
                    }
                    dhr[i] = acc;
                }
            }
        }
        return dx;
    }

    void collect_params(std::vector<Tensor<T>*>& p, std::vector<Tensor<T>*>& g) override {
        p.push_back(&w_); g.push_back(&dw_);
        p.push_back(&u_); g.push_back(&du_);
        p.push_back(&b_); g.push_back(&db_);
    }

    void collect_state(const std::string& prefix,
                       std::vector<std::pair<std::string, Tensor<T>*>>& out) override {
        out.emplace_back(prefix + ".w", &w_);
        out.emplace_back(prefix + ".u", &u_);
        out.emplace_back(prefix + ".b", &b_);
    }

    const char* kind() const override { return "lstm"; }

private:
    static T sigmoid(T v) { return T(1) / (T(1) + std::exp(-v)); }

    size_t f_, h_;
    Tensor<T> w_, u_, b_, dw_, du_, db_;
    Tensor<T> x_;
    std::vector<Tensor<T>> gates_, cells_, tanh_c_, hidden_;
};

} // namespace pktwin::nn
