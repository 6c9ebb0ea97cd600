#pragma once
// Confusion counts, the three reported metrics, and batch-averaged gradient
// saliency maps. The saliency of a batch is |mean over the batch of
// d max(y)/d x|: the absolute value is applied after the mean (|mean|, not
// mean|.|). For the single-output model the "max" is the output itself, so
// row i of its map is the gradient of row i's own score.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "pktwin/nn/model.hpp"
#include "pktwin/nn/tensor.hpp"

namespace pktwin::nn {

struct ConfusionMatrix {
    uint64_t tp = 0, fp = 0, tn = 0, fn = 0;

    uint64_t total() const { return tp + fp + tn + fn; }
};

// p >= threshold counts as a positive prediction; masked entries are never
// tallied.
template <class T>
ConfusionMatrix confusion(const Tensor<T>& p, const Tensor<T>& y, const Tensor<T>& mask,
                          double threshold = 0.5) {
    if (p.size() != y.size() || p.size() != mask.size())
        throw std::invalid_argument("confusion: shape mismatch");
    ConfusionMatrix cm;
    for (size_t i = 0; i < p.size(); ++i) {
        if (mask[i] == T(0)) continue;
        const bool predicted = double(p[i]) >= threshold;
        const bool actual = y[i] != T(0);
        if (predicted && actual) ++cm.tp;
        else if (predicted && !actual) ++cm.fp;
        else if (!predicted && actual) ++cm.fn;
        else ++cm.tn;
    }
    return cm;
}

struct Metrics {
    double accuracy = 0;
    std::optional<double> precision; // absent when tp+fp = 0
    std::optional<double> recall;    // absent when tp+fn = 0
};

inline Metrics metrics(const ConfusionMatrix& cm) {
    if (cm.total() == 0) throw std::runtime_error("metrics: empty confusion matrix");
    Metrics m;
    m.accuracy = double(cm.tp + cm.tn) / double(cm.total());
    if (cm.tp + cm.fp > 0) m.precision = double(cm.tp) / double(cm.tp + cm.fp);
    if (cm.tp + cm.fn > 0) m.recall = double(cm.tp) / double(cm.tp + cm.fn);
    return m;
}

struct SaliencyMap {
    size_t rows = 0;
    size_t cols = 0;
    size_t batch_size = 0;
    std::vector<double> values; // row-major, all >= 0

    double at(size_t r, size_t c) const { return values[r * cols + c]; }
};

// x is a batch in the model's input shape: (B, cols) for single-packet models
// or (B, rows, cols) for window models. Runs in inference mode.
template <class T>
SaliencyMap saliency(Model<T>& model, const Tensor<T>& x) {
    if (x.dim(0) == 0) throw std::invalid_argument("saliency: empty batch");
    const size_t batch = x.dim(0);
    const Tensor<T> y = model.forward(x, false);

    Tensor<T> dy(y.shape);
    if (y.shape.size() == 2 && y.dim(1) > 1) {
        // One gradient source per window: its highest output score.
        const size_t outputs = y.dim(1);
        for (size_t k = 0; k < batch; ++k) {
            size_t best = 0;
            for (size_t i = 1; i < outputs; ++i)
                if (y.data[k * outputs + i] > y.data[k * outputs + best]) best = i;
            dy.data[k * outputs + best] = T(1);
        }
    } else {
        dy.fill(T(1)); // single score per sample
    }

    const Tensor<T> dx = model.backward(dy);
    const size_t sample = dx.size() / batch;

    SaliencyMap map;
    map.batch_size = batch;
    map.cols = dx.shape.back();
    map.rows = sample / map.cols;
    map.values.assign(sample, 0.0);
    for (size_t k = 0; k < batch; ++k)
        for (size_t i = 0; i < sample; ++i) map.values[i] += double(dx.data[k * sample + i]);
    for (auto& v : map.values) v = std::abs(v / double(batch));
    return map;
}

// Rendered export: per-map min-max scaled to 0..255, binary PGM (P5),
// row-major. Raw values stay canonical in the CSV export.
inline void write_saliency_pgm(const std::filesystem::path& path, const SaliencyMap& map) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double v : map.values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double span = hi > lo ? hi - lo : 1.0;

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("saliency: cannot write " + path.string());
    out << "P5\n" << map.cols << " " << map.rows << "\n255\n";
    for (double v : map.values) {
        const auto byte = uint8_t(std::lround(255.0 * (v - lo) / span));
        out.write(reinterpret_cast<const char*>(&byte), 1);
    }
}

inline void write_saliency_csv(const std::filesystem::path& path, const SaliencyMap& map) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("saliency: cannot write " + path.string());
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (size_t r = 0; r < map.rows; ++r) {
        for (size_t c = 0; c < map.cols; ++c) {
            if (c) out << ',';
            out << map.at(r, c);
        }
        out << '\n';
    }
}

} // namespace pktwin::nn
