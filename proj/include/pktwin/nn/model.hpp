#pragma once
// The three packet-window architectures as sequential layer stacks, plus the
// PKWM checkpoint format.
//
//   fcnn      351 -> dense 256 -> BN -> ReLU -> dropout
//                 -> dense 356 -> BN -> ReLU -> dropout
//                 -> dense 32 -> ReLU -> dense 1 -> sigmoid
//   cnn       (150,351) -> [conv 9x9x8, conv 7x7x16, conv 7x7x32; each
//                 same-padded + ReLU + 2x2 maxpool] -> flatten
//                 -> dense 150 -> sigmoid (one score per packet row)
//   cnn_lstm  (150,351) -> per-row conv 1x3 with 6 filters -> ReLU
//                 -> per-row maxpool 1x2 -> per-row feature fold
//                 -> LSTM(128) over the 150-row sequence -> per-step dense 1
//                 -> sigmoid
//
// RNG streams: parameter init draws from (seed, 0) in layer construction
// order; dropout masks draw from (seed, 1).
//
// PKWM checkpoint layout (little-endian):
//   magic "PKWM", u16 version=1, u8 kind, u32 input_rows, u32 input_cols,
//   f64 learning_rate, u32 batch_size, f64 dropout_rate, u64 seed,
//   u8 labeling, u8 loss_kind, f64 alpha, f64 gamma, u32 tensor_count,
//   then per tensor: u16 name_len, name bytes, u8 rank, u32 dims[rank],
//   f32 data[] (row-major).

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "pktwin/bytes.hpp"
#include "pktwin/nn/layers.hpp"
#include "pktwin/nn/loss.hpp"
#include "pktwin/rng.hpp"
#include "pktwin/window.hpp"

namespace pktwin::nn {

enum class ModelKind : uint8_t { fcnn = 0, cnn = 1, cnn_lstm = 2, custom = 255 };

struct ModelConfig {
    ModelKind kind = ModelKind::fcnn;
    size_t input_rows = 1; // 1 for single-packet input, 150 for windows
    size_t input_cols = kVectorWidth;
    double learning_rate = 0.001;
    size_t batch_size = 8096;
    double dropout_rate = 0.2;
    uint64_t seed = 0;
    // Provenance of the training data, carried through to reports.
    uint8_t labeling = 0; // 0 unspecified, 1 forward_only, 2 both_sides
};

inline ModelConfig default_config(ModelKind kind, uint64_t seed) {
    ModelConfig cfg;
    cfg.kind = kind;
    cfg.seed = seed;
    switch (kind) {
        case ModelKind::fcnn:
            cfg.input_rows = 1;
            cfg.learning_rate = 0.001;
            cfg.batch_size = 8096;
            break;
        case ModelKind::cnn:
            cfg.input_rows = kWindowRows;
            cfg.learning_rate = 0.001;
            cfg.batch_size = 64;
            break;
        case ModelKind::cnn_lstm:
            cfg.input_rows = kWindowRows;
            cfg.learning_rate = 0.0005;
            cfg.batch_size = 64;
            break;
        default:
            throw std::invalid_argument("model: unknown kind");
    }
    return cfg;
}

template <class T>
class Model {
public:
    explicit Model(const ModelConfig& cfg)
        : cfg_(cfg), init_rng_(std::make_unique<Xoshiro256>(cfg.seed, 0)),
          dropout_rng_(std::make_unique<Xoshiro256>(cfg.seed, 1)) {
        // RNGs live on the heap so layers can keep pointers to them across
        // moves of the model.
        switch (cfg.kind) {
            case ModelKind::fcnn: build_fcnn(); break;
            case ModelKind::cnn: build_cnn(); break;
            case ModelKind::cnn_lstm: build_cnn_lstm(); break;
            case ModelKind::custom: break; // layers added by hand
            default: throw std::invalid_argument("model: unknown kind");
        }
    }

    const ModelConfig& config() const { return cfg_; }

    void add_layer(std::unique_ptr<Layer<T>> layer) { layers_.push_back(std::move(layer)); }

    Tensor<T> forward(const Tensor<T>& x, bool training) {
        Tensor<T> cur = x;
        for (auto& l : layers_) {
            cur = l->forward(cur, training);
            assert(cur.finite());
        }
        return cur;
    }

    // Chains grad-output back through every layer; the return value is the
    // gradient with respect to the model input.
    Tensor<T> backward(const Tensor<T>& dy) {
        Tensor<T> cur = dy;
        for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
            cur = (*it)->backward(cur);
            assert(cur.finite());
        }
        return cur;
    }

    void collect_params(std::vector<Tensor<T>*>& p, std::vector<Tensor<T>*>& g) {
        for (auto& l : layers_) l->collect_params(p, g);
    }

    std::vector<std::pair<std::string, Tensor<T>*>> state() {
        std::vector<std::pair<std::string, Tensor<T>*>> out;
        for (size_t i = 0; i < layers_.size(); ++i)
            layers_[i]->collect_state("l" + std::to_string(i) + "." + layers_[i]->kind(), out);
        return out;
    }

    size_t parameter_count() {
        std::vector<Tensor<T>*> p, g;
        collect_params(p, g);
        size_t n = 0;
        for (auto* t : p) n += t->size();
        return n;
    }

    std::vector<Tensor<T>> snapshot() {
        std::vector<Tensor<T>> out;
        for (auto& [name, t] : state()) out.push_back(*t);
        return out;
    }

    void restore(const std::vector<Tensor<T>>& snap) {
        auto st = state();
        if (st.size() != snap.size()) throw std::runtime_error("model: snapshot mismatch");
        for (size_t i = 0; i < st.size(); ++i) *st[i].second = snap[i];
    }

    Xoshiro256& dropout_rng() { return *dropout_rng_; }
    Xoshiro256& init_rng() { return *init_rng_; }

private:
    void build_fcnn() {
        layers_.emplace_back(new Dense<T>(cfg_.input_cols, 256, *init_rng_));
        layers_.emplace_back(new BatchNorm<T>(256));
        layers_.emplace_back(new Relu<T>());
        layers_.emplace_back(new Dropout<T>(cfg_.dropout_rate, dropout_rng_.get()));
        layers_.emplace_back(new Dense<T>(256, 356, *init_rng_));
        layers_.emplace_back(new BatchNorm<T>(356));
        layers_.emplace_back(new Relu<T>());
        layers_.emplace_back(new Dropout<T>(cfg_.dropout_rate, dropout_rng_.get()));
        layers_.emplace_back(new Dense<T>(356, 32, *init_rng_));
        layers_.emplace_back(new Relu<T>());
        layers_.emplace_back(new Dense<T>(32, 1, *init_rng_));
        layers_.emplace_back(new Sigmoid<T>());
    }

    void build_cnn() {
        const size_t rows = cfg_.input_rows, cols = cfg_.input_cols;
        layers_.emplace_back(new Reshape<T>({1, rows, cols}));
        layers_.emplace_back(new Conv2d<T>(1, 8, 9, 9, *init_rng_));
        layers_.emplace_back(new Relu<T>());
        layers_.emplace_back(new MaxPool2d<T>(2, 2));
        layers_.emplace_back(new Conv2d<T>(8, 16, 7, 7, *init_rng_));
        layers_.emplace_back(new Relu<T>());
        layers_.emplace_back(new MaxPool2d<T>(2, 2));
        layers_.emplace_back(new Conv2d<T>(16, 32, 7, 7, *init_rng_));
        layers_.emplace_back(new Relu<T>());
        layers_.emplace_back(new MaxPool2d<T>(2, 2));
        const size_t ph = rows / 2 / 2 / 2, pw = cols / 2 / 2 / 2;
        layers_.emplace_back(new Reshape<T>({32 * ph * pw}));
        layers_.emplace_back(new Dense<T>(32 * ph * pw, rows, *init_rng_));
        layers_.emplace_back(new Sigmoid<T>());
    }

    void build_cnn_lstm() {
        const size_t rows = cfg_.input_rows, cols = cfg_.input_cols;
        layers_.emplace_back(new Reshape<T>({1, rows, cols}));
        layers_.emplace_back(new Conv2d<T>(1, 6, 1, 3, *init_rng_)); // per-row 1D conv
        layers_.emplace_back(new Relu<T>());
        layers_.emplace_back(new MaxPool2d<T>(1, 2));
        layers_.emplace_back(new RowFeatures<T>());
        layers_.emplace_back(new Lstm<T>(6 * (cols / 2), 128, *init_rng_));
        layers_.emplace_back(new Dense<T>(128, 1, *init_rng_));
        layers_.emplace_back(new Reshape<T>({rows}));
        layers_.emplace_back(new Sigmoid<T>());
    }

    ModelConfig cfg_;
    std::unique_ptr<Xoshiro256> init_rng_;
    std::unique_ptr<Xoshiro256> dropout_rng_;
    std::vector<std::unique_ptr<Layer<T>>> layers_;
};

template <class T>
Model<T> build_model(const ModelConfig& cfg) {
    return Model<T>(cfg);
}

// --- checkpoint IO -----------------------------------------------------------

namespace detail {

inline void put_bytes(std::ofstream& out, const void* p, size_t n) {
    out.write(reinterpret_cast<const char*>(p), std::streamsize(n));
}

inline void get_bytes(std::ifstream& in, void* p, size_t n, const char* what) {
    in.read(reinterpret_cast<char*>(p), std::streamsize(n));
    if (in.gcount() != std::streamsize(n))
        throw std::runtime_error(std::string("checkpoint: truncated ") + what);
}

inline void put_f64(std::ofstream& out, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    uint8_t buf[8];
    store_le64(buf, bits);
    put_bytes(out, buf, 8);
}

inline double get_f64(std::ifstream& in, const char* what) {
    uint8_t buf[8];
    get_bytes(in, buf, 8, what);
    const uint64_t bits = load_le64(buf);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

} // namespace detail

struct CheckpointMeta {
    ModelConfig config;
    LossConfig loss;
};

template <class T>
void save_checkpoint(const std::filesystem::path& path, Model<T>& model,
                     const LossConfig& loss = {}) {
    const ModelConfig& cfg = model.config();
    if (cfg.kind == ModelKind::custom)
        throw std::runtime_error("checkpoint: custom models are not serializable");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + path.string());

    out.write("PKWM", 4);
    uint8_t buf[8];
    store_le16(buf, 1);
    detail::put_bytes(out, buf, 2);
    const uint8_t kind = uint8_t(cfg.kind);
    detail::put_bytes(out, &kind, 1);
    store_le32(buf, uint32_t(cfg.input_rows));
    detail::put_bytes(out, buf, 4);
    store_le32(buf, uint32_t(cfg.input_cols));
    detail::put_bytes(out, buf, 4);
    detail::put_f64(out, cfg.learning_rate);
    store_le32(buf, uint32_t(cfg.batch_size));
    detail::put_bytes(out, buf, 4);
    detail::put_f64(out, cfg.dropout_rate);
    store_le64(buf, cfg.seed);
    detail::put_bytes(out, buf, 8);
    detail::put_bytes(out, &cfg.labeling, 1);
    const uint8_t loss_kind = uint8_t(loss.kind);
    detail::put_bytes(out, &loss_kind, 1);
    detail::put_f64(out, loss.alpha);
    detail::put_f64(out, loss.gamma);

    auto state = model.state();
    store_le32(buf, uint32_t(state.size()));
    detail::put_bytes(out, buf, 4);
    for (auto& [name, tensor] : state) {
        store_le16(buf, uint16_t(name.size()));
        detail::put_bytes(out, buf, 2);
        detail::put_bytes(out, name.data(), name.size());
        const uint8_t rank = uint8_t(tensor->shape.size());
        detail::put_bytes(out, &rank, 1);
        for (size_t d : tensor->shape) {
            store_le32(buf, uint32_t(d));
            detail::put_bytes(out, buf, 4);
        }
        for (T v : tensor->data) {
            const float f = float(v);
            uint32_t bits;
            std::memcpy(&bits, &f, 4);
            store_le32(buf, bits);
            detail::put_bytes(out, buf, 4);
        }
    }
    if (!out) throw std::runtime_error("checkpoint: short write to " + path.string());
}

template <class T>
std::pair<Model<T>, CheckpointMeta> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());

    char magic[4];
    detail::get_bytes(in, magic, 4, "magic");
    if (std::memcmp(magic, "PKWM", 4) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path.string());
    uint8_t buf[8];
    detail::get_bytes(in, buf, 2, "version");
    if (load_le16(buf) != 1) throw std::runtime_error("checkpoint: unsupported version");

    CheckpointMeta meta;
    uint8_t kind;
    detail::get_bytes(in, &kind, 1, "kind");
    meta.config.kind = ModelKind(kind);
    detail::get_bytes(in, buf, 4, "input_rows");
    meta.config.input_rows = load_le32(buf);
    detail::get_bytes(in, buf, 4, "input_cols");
    meta.config.input_cols = load_le32(buf);
    meta.config.learning_rate = detail::get_f64(in, "learning_rate");
    detail::get_bytes(in, buf, 4, "batch_size");
    meta.config.batch_size = load_le32(buf);
    meta.config.dropout_rate = detail::get_f64(in, "dropout_rate");
    detail::get_bytes(in, buf, 8, "seed");
    meta.config.seed = load_le64(buf);
    detail::get_bytes(in, &meta.config.labeling, 1, "labeling");
    uint8_t loss_kind;
    detail::get_bytes(in, &loss_kind, 1, "loss_kind");
    meta.loss.kind = LossKind(loss_kind);
    meta.loss.alpha = detail::get_f64(in, "alpha");
    meta.loss.gamma = detail::get_f64(in, "gamma");

    Model<T> model(meta.config);
    auto state = model.state();

    detail::get_bytes(in, buf, 4, "tensor count");
    const uint32_t count = load_le32(buf);
    if (count != state.size()) throw std::runtime_error("checkpoint: tensor count mismatch");
    for (uint32_t k = 0; k < count; ++k) {
        detail::get_bytes(in, buf, 2, "name length");
        std::string name(load_le16(buf), '\0');
        detail::get_bytes(in, name.data(), name.size(), "name");
        if (name != state[k].first)
            throw std::runtime_error("checkpoint: unexpected tensor '" + name + "'");
        uint8_t rank;
        detail::get_bytes(in, &rank, 1, "rank");
        std::vector<size_t> shape(rank);
        for (auto& d : shape) {
            detail::get_bytes(in, buf, 4, "dim");
            d = load_le32(buf);
        }
        Tensor<T>& t = *state[k].second;
        if (shape != t.shape) throw std::runtime_error("checkpoint: shape mismatch in " + name);
        for (auto& v : t.data) {
            detail::get_bytes(in, buf, 4, "tensor data");
            const uint32_t bits = load_le32(buf);
            float f;
            std::memcpy(&f, &bits, 4);
            v = T(f);
        }
    }
    return {std::move(model), meta};
}

} // namespace pktwin::nn
