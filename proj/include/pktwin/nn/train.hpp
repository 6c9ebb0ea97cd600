#pragma once
// Seeded mini-batch training with per-epoch validation. The parameter snapshot
// with the highest validation accuracy is restored at the end (ties keep the
// earlier epoch). Batch order reshuffles every epoch from the shuffle RNG
// (stream 2 of the training seed); dropout masks draw from the model's own
// stream, so a fixed seed reproduces runs bit-for-bit.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pktwin/dataset.hpp"
#include "pktwin/nn/adam.hpp"
#include "pktwin/nn/eval.hpp"
#include "pktwin/nn/loss.hpp"
#include "pktwin/nn/model.hpp"
#include "pktwin/rng.hpp"
#include "pktwin/window.hpp"

namespace pktwin::nn {

struct TrainDivergedError : std::runtime_error {
    size_t step;

    explicit TrainDivergedError(size_t s)
        : std::runtime_error("train: loss diverged (NaN/Inf) at step " + std::to_string(s)),
          step(s) {}
};

struct HistoryRow {
    size_t epoch = 0; // 1-based
    double train_loss = 0;
    double val_accuracy = 0;
    std::optional<double> val_precision;
    std::optional<double> val_recall;
};

struct TrainResult {
    std::vector<HistoryRow> history;
    size_t best_epoch = 0; // 1-based, 0 when no epochs ran
};

// Ties resolve to the earlier epoch. Returns a 0-based index.
inline size_t best_epoch_index(const std::vector<double>& val_accuracies) {
    size_t best = 0;
    for (size_t i = 1; i < val_accuracies.size(); ++i)
        if (val_accuracies[i] > val_accuracies[best]) best = i;
    return best;
}

// Assembles (x, y, mask) batches of single packet vectors for the FCNN: one
// row per valid record, bytes normalized to [0,1].
template <class T>
class PacketBatcher {
public:
    explicit PacketBatcher(const DatasetPartition& p) : part_(&p) {
        for (size_t i = 0; i < p.vectors.size(); ++i)
            if (p.vectors[i].valid) index_.push_back(i);
    }

    size_t count() const { return index_.size(); }

    void fill(const std::vector<size_t>& items, Tensor<T>& x, Tensor<T>& y,
              Tensor<T>& mask) const {
        const size_t b = items.size();
        x = Tensor<T>({b, kVectorWidth});
        y = Tensor<T>({b, 1});
        mask = Tensor<T>({b, 1});
        for (size_t r = 0; r < b; ++r) {
            const PacketVector& v = part_->vectors[index_[items[r]]];
            for (size_t c = 0; c < kVectorWidth; ++c)
                x.data[r * kVectorWidth + c] = T(v.bytes[c]) / T(255);
            y[r] = T(v.label);
            mask[r] = T(1);
        }
    }

private:
    const DatasetPartition* part_;
    std::vector<size_t> index_;
};

// Batches whole windows for the 2D models; the mask carries row validity so
// padding rows drop out of the loss and the metrics.
template <class T>
class WindowBatcher {
public:
    explicit WindowBatcher(const std::vector<Window>& windows) : windows_(&windows) {}

    size_t count() const { return windows_->size(); }

    void fill(const std::vector<size_t>& items, Tensor<T>& x, Tensor<T>& y,
              Tensor<T>& mask) const {
        const size_t b = items.size();
        x = Tensor<T>({b, kWindowRows, kVectorWidth});
        y = Tensor<T>({b, kWindowRows});
        mask = Tensor<T>({b, kWindowRows});
        for (size_t k = 0; k < b; ++k) {
            const Window& w = (*windows_)[items[k]];
            for (size_t r = 0; r < kWindowRows; ++r) {
                const PacketVector& v = w.rows[r];
                for (size_t c = 0; c < kVectorWidth; ++c)
                    x.data[(k * kWindowRows + r) * kVectorWidth + c] = T(v.bytes[c]) / T(255);
                y.data[k * kWindowRows + r] = T(v.label);
                mask.data[k * kWindowRows + r] = v.valid ? T(1) : T(0);
            }
        }
    }

private:
    const std::vector<Window>* windows_;
};

struct TrainOptions {
    size_t epochs = 5;
    size_t batch_size = 0;   // 0 = take from the model config
    double learning_rate = 0; // 0 = take from the model config
    LossConfig loss;
    uint64_t seed = 0;
};

template <class T, class Batcher>
ConfusionMatrix evaluate_confusion(Model<T>& model, const Batcher& data, size_t batch_size,
                                   double threshold = 0.5) {
    ConfusionMatrix cm;
    std::vector<size_t> items;
    Tensor<T> x, y, mask;
    for (size_t base = 0; base < data.count(); base += batch_size) {
        const size_t n = std::min(batch_size, data.count() - base);
        items.resize(n);
        std::iota(items.begin(), items.end(), base);
        data.fill(items, x, y, mask);
        const Tensor<T> p = model.forward(x, false);
        const ConfusionMatrix part = confusion(p, y, mask, threshold);
        cm.tp += part.tp;
        cm.fp += part.fp;
        cm.tn += part.tn;
        cm.fn += part.fn;
    }
    return cm;
}

template <class T, class Batcher>
TrainResult train_model(Model<T>& model, const Batcher& train_data, const Batcher& val_data,
                        const TrainOptions& opt) {
    if (train_data.count() == 0 || val_data.count() == 0)
        throw std::runtime_error("train: empty partition");

    const size_t batch_size = opt.batch_size ? opt.batch_size : model.config().batch_size;
    const double lr = opt.learning_rate > 0 ? opt.learning_rate : model.config().learning_rate;

    std::vector<Tensor<T>*> params, grads;
    model.collect_params(params, grads);
    Adam<T> adam(params, grads, lr);

    Xoshiro256 shuffle_rng(opt.seed, 2);
    std::vector<size_t> order(train_data.count());
    std::iota(order.begin(), order.end(), 0);

    TrainResult result;
    std::vector<Tensor<T>> best_state;
    double best_acc = -1.0;
    size_t step = 0;

    Tensor<T> x, y, mask;
    std::vector<size_t> items;
    for (size_t epoch = 1; epoch <= opt.epochs; ++epoch) {
        shuffle(order, shuffle_rng);

        double loss_sum = 0;
        size_t loss_count = 0;
        for (size_t base = 0; base < order.size(); base += batch_size) {
            const size_t n = std::min(batch_size, order.size() - base);
            items.assign(order.begin() + base, order.begin() + base + n);
            train_data.fill(items, x, y, mask);

            const Tensor<T> p = model.forward(x, true);
            ++step;
            // Exploded parameters can surface as NaN predictions before the
            // clamped loss ever goes non-finite, so check both.
            if (!p.finite()) throw TrainDivergedError(step);
            const LossResult<T> loss = compute_loss(p, y, mask, opt.loss);
            if (!std::isfinite(double(loss.value))) throw TrainDivergedError(step);
            model.backward(loss.grad);
            adam.step();

            loss_sum += double(loss.value) * double(loss.valid_count);
            loss_count += loss.valid_count;
        }

        const ConfusionMatrix cm = evaluate_confusion(model, val_data, batch_size);
        const Metrics m = metrics(cm);

        HistoryRow row;
        row.epoch = epoch;
        row.train_loss = loss_sum / double(loss_count);
        row.val_accuracy = m.accuracy;
        row.val_precision = m.precision;
        row.val_recall = m.recall;
        result.history.push_back(row);

        if (m.accuracy > best_acc) {
            best_acc = m.accuracy;
            best_state = model.snapshot();
            result.best_epoch = epoch;
        }
    }

    if (!best_state.empty()) model.restore(best_state);
    return result;
}

inline void write_history_csv(const std::filesystem::path& path,
                              const std::vector<HistoryRow>& history) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("history: cannot write " + path.string());
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    out << "epoch,train_loss,val_accuracy,val_precision,val_recall\n";
    for (const auto& row : history) {
        out << row.epoch << ',' << row.train_loss << ',' << row.val_accuracy << ',';
        if (row.val_precision) out << *row.val_precision;
        out << ',';
        if (row.val_recall) out << *row.val_recall;
        out << '\n';
    }
}

} // namespace pktwin::nn
