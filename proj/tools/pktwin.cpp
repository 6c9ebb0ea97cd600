// pktwin command-line pipeline: pcap in, per-packet labels, anonymized
// captures, windowed datasets, trained per-packet classifiers, metrics and
// saliency maps out. Every subcommand is a pure function of its input files,
// flags and seed, so re-running a stage never changes its outputs.
//
// Machine-readable results go to stdout as JSON; human-oriented tables and
// warnings go to stderr. Failures print a one-line JSON error object to
// stderr and exit nonzero (2 config, 3 runtime, 4 format, 5 diverged).

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "pktwin/anonymize.hpp"
#include "pktwin/dataset.hpp"
#include "pktwin/flow.hpp"
#include "pktwin/nn/eval.hpp"
#include "pktwin/nn/model.hpp"
#include "pktwin/nn/train.hpp"
#include "pktwin/parse.hpp"
#include "pktwin/pcap.hpp"
#include "pktwin/window.hpp"

using json = nlohmann::json;
using namespace pktwin;

namespace {

std::vector<ParsedHeaders> parse_all(const std::vector<RawPacket>& packets) {
    std::vector<ParsedHeaders> headers;
    headers.reserve(packets.size());
    for (const auto& p : packets) headers.push_back(parse_headers(p));
    return headers;
}

// Flow assembly and delta encoding need time-ordered input; fail loudly
// instead of producing silently wrong flows.
void require_chronological(const std::vector<RawPacket>& packets, const std::string& path) {
    for (size_t i = 1; i < packets.size(); ++i)
        if (packets[i].ts_us < packets[i - 1].ts_us)
            throw std::invalid_argument(path + " is not in chronological order; run ingest first");
}

json metrics_json(const nn::ConfusionMatrix& cm) {
    const nn::Metrics m = nn::metrics(cm);
    json j;
    j["confusion"] = {{"tp", cm.tp}, {"fp", cm.fp}, {"tn", cm.tn}, {"fn", cm.fn}};
    j["accuracy"] = m.accuracy;
    j["precision"] = m.precision ? json(*m.precision) : json(nullptr);
    j["recall"] = m.recall ? json(*m.recall) : json(nullptr);
    j["threshold"] = 0.5;
    j["packets"] = cm.total();
    return j;
}

void print_metrics_table(const nn::ConfusionMatrix& cm) {
    const nn::Metrics m = nn::metrics(cm);
    auto fmt = [](const std::optional<double>& v) {
        return v ? std::to_string(*v) : std::string("n/a");
    };
    std::cerr << "              predicted 1   predicted 0\n";
    std::cerr << "  actual 1    " << std::setw(11) << cm.tp << "   " << std::setw(11) << cm.fn
              << "\n";
    std::cerr << "  actual 0    " << std::setw(11) << cm.fp << "   " << std::setw(11) << cm.tn
              << "\n";
    std::cerr << "  accuracy  " << m.accuracy << "\n";
    std::cerr << "  precision " << fmt(m.precision) << "\n";
    std::cerr << "  recall    " << fmt(m.recall) << "\n";
}

nn::ModelKind model_kind_from_name(const std::string& name) {
    if (name == "fcnn") return nn::ModelKind::fcnn;
    if (name == "cnn") return nn::ModelKind::cnn;
    if (name == "cnnlstm") return nn::ModelKind::cnn_lstm;
    throw std::invalid_argument("unknown model kind: " + name);
}

nn::LossKind loss_kind_from_name(const std::string& name) {
    if (name == "bce") return nn::LossKind::bce;
    if (name == "focal") return nn::LossKind::focal;
    if (name == "dice") return nn::LossKind::dice;
    if (name == "iou") return nn::LossKind::iou;
    throw std::invalid_argument("unknown loss kind: " + name);
}

int run(int argc, char** argv) {
    CLI::App app{"raw-packet intrusion detection pipeline"};
    app.require_subcommand(1);
    app.set_config("--config");

    // --- ingest ---------------------------------------------------------
    auto* ingest = app.add_subcommand("ingest", "sanitize a pcap and order it chronologically");
    std::string ingest_in, ingest_out;
    ingest->add_option("--in", ingest_in, "input pcap")->required();
    ingest->add_option("--out", ingest_out, "output pcap")->required();
    ingest->callback([&] {
        auto read = read_capture(ingest_in);
        auto ordered = reorder_chronologically(std::move(read.packets));
        write_capture(ingest_out, ordered, read.header.snaplen);
        std::cout << json{{"packets", ordered.size()}, {"skipped_records", read.skipped_records}}
                  << "\n";
    });

    // --- label ----------------------------------------------------------
    auto* label = app.add_subcommand("label", "assign per-packet attack labels from a rule CSV");
    std::string label_in, label_rules, label_out, label_scheme = "both";
    double label_timeout = 120.0;
    uint32_t label_capture_id = 0;
    label->add_option("--in", label_in, "input pcap (chronologically ordered)")->required();
    label->add_option("--rules", label_rules, "attack rule CSV")->required();
    label->add_option("--out", label_out, "output label CSV")->required();
    label->add_option("--scheme", label_scheme, "labeling scheme")
        ->check(CLI::IsMember({"forward", "both"}));
    label->add_option("--timeout", label_timeout, "flow idle timeout, seconds");
    label->add_option("--capture-id", label_capture_id, "capture id stamped into the CSV");
    label->callback([&] {
        auto read = read_capture(label_in);
        require_chronological(read.packets, label_in);
        auto headers = parse_all(read.packets);
        auto flows = assemble_flows(read.packets, headers, uint64_t(label_timeout * 1e6));
        auto rules = load_rules_csv(label_rules);
        auto labeling = label_flows(flows, rules);
        for (const auto& w : labeling.warnings) std::cerr << "warning: " << w << "\n";
        const auto scheme =
            label_scheme == "forward" ? LabelScheme::forward_only : LabelScheme::both_sides;
        auto labels = label_packets(flows, labeling, rules, headers, scheme);
        write_labels_csv(label_out, label_capture_id, labels);

        uint64_t attack_flows = 0, attack_packets = 0;
        for (int32_t r : labeling.rule_of_flow) attack_flows += r >= 0;
        for (const auto& l : labels) attack_packets += l.label;
        std::cout << json{{"packets", labels.size()},
                          {"flows", flows.size()},
                          {"attack_flows", attack_flows},
                          {"attack_packets", attack_packets},
                          {"warnings", labeling.warnings.size()}}
                  << "\n";
    });

    // --- anonymize ------------------------------------------------------
    auto* anon = app.add_subcommand("anonymize", "randomized replacement of MAC/IP/port fields");
    std::string anon_in, anon_out, anon_map_out;
    uint64_t anon_seed = 0;
    anon->add_option("--in", anon_in, "input pcap")->required();
    anon->add_option("--out", anon_out, "output pcap")->required();
    anon->add_option("--seed", anon_seed, "replacement map seed")
        ->envname("PKTWIN_SEED")
        ->required();
    anon->add_option("--map-out", anon_map_out, "audit CSV of the replacement map");
    anon->callback([&] {
        auto read = read_capture(anon_in);
        auto headers = parse_all(read.packets);
        ReplacementMap map(anon_seed);
        auto result = anonymize_capture(read.packets, headers, map);
        write_capture(anon_out, result.packets, read.header.snaplen);
        if (!anon_map_out.empty()) write_map_csv(anon_map_out, map);
        std::cout << json{{"packets", result.stats.packets},
                          {"uncomputable_checksums", result.stats.uncomputable_checksums},
                          {"macs", map.mac_map().size()},
                          {"ips", map.ip_map().size()},
                          {"ports", map.port_map().size()}}
                  << "\n";
    });

    // --- encode ---------------------------------------------------------
    auto* encode = app.add_subcommand("encode", "pack a labeled capture into a PKW1 container");
    std::string encode_in, encode_labels, encode_out;
    uint32_t encode_capture_id = 0;
    encode->add_option("--in", encode_in, "input pcap (chronologically ordered)")->required();
    encode->add_option("--labels", encode_labels, "label CSV from the label stage")->required();
    encode->add_option("--out", encode_out, "output PKW1 file")->required();
    encode->add_option("--capture-id", encode_capture_id, "capture id for provenance");
    encode->callback([&] {
        auto read = read_capture(encode_in);
        require_chronological(read.packets, encode_in);
        auto label_map = load_labels_csv(encode_labels);
        std::vector<uint8_t> labels(read.packets.size(), 0);
        for (size_t i = 0; i < labels.size(); ++i) {
            auto it = label_map.find(i);
            if (it != label_map.end()) labels[i] = it->second;
        }
        auto part = encode_capture(read.packets, labels, encode_capture_id);
        write_container(encode_out, part);
        uint64_t attack = 0;
        for (const auto& v : part.vectors) attack += v.label;
        std::cout << json{{"records", part.vectors.size()}, {"attack_records", attack}} << "\n";
    });

    // --- split ----------------------------------------------------------
    auto* split = app.add_subcommand("split", "deterministic group-shuffled 50/10/40 split");
    std::string split_in, split_train, split_val, split_test;
    size_t split_groups = 1000;
    uint64_t split_seed = 0;
    split->add_option("--in", split_in, "input PKW1 file")->required();
    split->add_option("--out-train", split_train, "train partition output")->required();
    split->add_option("--out-val", split_val, "validation partition output")->required();
    split->add_option("--out-test", split_test, "test partition output")->required();
    split->add_option("--groups", split_groups, "number of contiguous groups");
    split->add_option("--seed", split_seed, "shuffle seed")->envname("PKTWIN_SEED")->required();
    split->callback([&] {
        auto input = read_container(split_in);
        auto parts = group_split(input, split_groups, split_seed);
        write_container(split_train, parts.train);
        write_container(split_val, parts.val);
        write_container(split_test, parts.test);
        std::cout << json{{"train", parts.train.size()},
                          {"val", parts.val.size()},
                          {"test", parts.test.size()}}
                  << "\n";
    });

    // --- balance --------------------------------------------------------
    auto* balance = app.add_subcommand("balance", "oversample the minority class");
    std::string balance_in, balance_out, balance_mode = "packets";
    balance->add_option("--in", balance_in, "input PKW1 file")->required();
    balance->add_option("--out", balance_out, "output PKW1 file")->required();
    balance->add_option("--mode", balance_mode, "packets: per-packet classes; windows: infected vs fully-benign windows")
        ->check(CLI::IsMember({"packets", "windows"}));
    balance->callback([&] {
        auto input = read_container(balance_in);
        const size_t before = input.size();
        DatasetPartition output;
        if (balance_mode == "packets") {
            output = oversample_packets(input);
        } else {
            auto windows = build_windows(input.vectors, input.provenance);
            output = windows_to_partition(oversample_windows(windows), input.role);
        }
        write_container(balance_out, output);
        std::cout << json{{"before", before}, {"after", output.size()}} << "\n";
    });

    // --- train ----------------------------------------------------------
    auto* train = app.add_subcommand("train", "train a classifier on PKW1 partitions");
    std::string train_train, train_val, train_out, train_history;
    std::string train_model_name = "fcnn", train_loss_name = "bce", train_labeling = "both";
    size_t train_epochs = 5, train_batch = 0;
    double train_lr = 0, train_alpha = 0.25, train_gamma = 2.0, train_dropout = 0.2;
    uint64_t train_seed = 0;
    train->add_option("--train", train_train, "training partition (PKW1)")->required();
    train->add_option("--val", train_val, "validation partition (PKW1)")->required();
    train->add_option("--model", train_model_name, "architecture")
        ->check(CLI::IsMember({"fcnn", "cnn", "cnnlstm"}));
    train->add_option("--loss", train_loss_name, "training objective")
        ->check(CLI::IsMember({"bce", "focal", "dice", "iou"}));
    train->add_option("--labeling", train_labeling, "labeling scheme the data was built with")
        ->check(CLI::IsMember({"forward", "both"}));
    train->add_option("--epochs", train_epochs, "training epochs");
    train->add_option("--batch", train_batch, "batch size override (0 = architecture default)");
    train->add_option("--lr", train_lr, "learning rate override (0 = architecture default)");
    train->add_option("--alpha", train_alpha, "focal loss weighting factor");
    train->add_option("--gamma", train_gamma, "focal loss focusing parameter");
    train->add_option("--dropout", train_dropout, "dropout rate");
    train->add_option("--seed", train_seed, "init/shuffle/dropout seed")
        ->envname("PKTWIN_SEED")
        ->required();
    train->add_option("--out", train_out, "checkpoint output (PKWM)")->required();
    train->add_option("--history", train_history, "per-epoch history CSV");
    train->callback([&] {
        if (train_alpha <= 0.0 || train_alpha >= 1.0)
            throw std::invalid_argument("--alpha must be in (0,1)");
        if (train_gamma < 0.0) throw std::invalid_argument("--gamma must be >= 0");
        if (train_dropout < 0.0 || train_dropout >= 1.0)
            throw std::invalid_argument("--dropout must be in [0,1)");
        const auto kind = model_kind_from_name(train_model_name);
        nn::ModelConfig cfg = nn::default_config(kind, train_seed);
        cfg.dropout_rate = train_dropout;
        if (train_batch) cfg.batch_size = train_batch;
        if (train_lr > 0) cfg.learning_rate = train_lr;
        cfg.labeling = train_labeling == "forward" ? 1 : 2;

        nn::LossConfig loss;
        loss.kind = loss_kind_from_name(train_loss_name);
        loss.alpha = train_alpha;
        loss.gamma = train_gamma;

        nn::TrainOptions opt;
        opt.epochs = train_epochs;
        opt.loss = loss;
        opt.seed = train_seed;

        auto train_part = read_container(train_train);
        auto val_part = read_container(train_val);

        nn::Model<float> model(cfg);
        nn::TrainResult result;
        if (kind == nn::ModelKind::fcnn) {
            nn::PacketBatcher<float> tb(train_part), vb(val_part);
            result = nn::train_model(model, tb, vb, opt);
        } else {
            auto train_windows = build_windows(train_part.vectors, train_part.provenance);
            auto val_windows = build_windows(val_part.vectors, val_part.provenance);
            nn::WindowBatcher<float> tb(train_windows), vb(val_windows);
            result = nn::train_model(model, tb, vb, opt);
        }

        nn::save_checkpoint(train_out, model, loss);
        if (!train_history.empty()) nn::write_history_csv(train_history, result.history);

        json j{{"epochs", result.history.size()}, {"best_epoch", result.best_epoch}};
        if (!result.history.empty()) {
            j["best_val_accuracy"] = result.history[result.best_epoch - 1].val_accuracy;
            j["final_train_loss"] = result.history.back().train_loss;
        }
        std::cout << j << "\n";
    });

    // --- eval -----------------------------------------------------------
    auto* eval = app.add_subcommand("eval", "confusion matrix and metrics for a checkpoint");
    std::string eval_checkpoint, eval_data, eval_out;
    eval->add_option("--checkpoint", eval_checkpoint, "PKWM checkpoint")->required();
    eval->add_option("--data", eval_data, "PKW1 partition to evaluate")->required();
    eval->add_option("--out", eval_out, "metrics JSON output file");
    eval->callback([&] {
        auto [model, meta] = nn::load_checkpoint<float>(eval_checkpoint);
        auto part = read_container(eval_data);
        nn::ConfusionMatrix cm;
        if (meta.config.kind == nn::ModelKind::fcnn) {
            nn::PacketBatcher<float> batcher(part);
            cm = nn::evaluate_confusion(model, batcher, meta.config.batch_size);
        } else {
            auto windows = build_windows(part.vectors, part.provenance);
            nn::WindowBatcher<float> batcher(windows);
            cm = nn::evaluate_confusion(model, batcher, meta.config.batch_size);
        }
        const json j = metrics_json(cm);
        if (!eval_out.empty()) {
            std::ofstream out(eval_out, std::ios::trunc);
            out << j.dump(2) << "\n";
        }
        print_metrics_table(cm);
        std::cout << j << "\n";
    });

    // --- saliency -------------------------------------------------------
    auto* sal = app.add_subcommand("saliency", "gradient saliency map over input windows");
    std::string sal_checkpoint, sal_data, sal_pgm, sal_csv;
    size_t sal_batch = 64;
    sal->add_option("--checkpoint", sal_checkpoint, "PKWM checkpoint")->required();
    sal->add_option("--data", sal_data, "PKW1 partition supplying the batch")->required();
    sal->add_option("--pgm", sal_pgm, "rendered map (PGM, min-max scaled)")->required();
    sal->add_option("--csv", sal_csv, "raw map values (CSV)")->required();
    sal->add_option("--batch", sal_batch, "number of windows (or packets) to average over");
    sal->callback([&] {
        auto [model, meta] = nn::load_checkpoint<float>(sal_checkpoint);
        auto part = read_container(sal_data);
        nn::Tensor<float> x, y, mask;
        std::vector<size_t> items;
        if (meta.config.kind == nn::ModelKind::fcnn) {
            nn::PacketBatcher<float> batcher(part);
            if (batcher.count() == 0) throw std::runtime_error("saliency: no valid records");
            items.resize(std::min(sal_batch, batcher.count()));
            std::iota(items.begin(), items.end(), 0);
            batcher.fill(items, x, y, mask);
        } else {
            auto windows = build_windows(part.vectors, part.provenance);
            nn::WindowBatcher<float> batcher(windows);
            if (batcher.count() == 0) throw std::runtime_error("saliency: no windows");
            items.resize(std::min(sal_batch, batcher.count()));
            std::iota(items.begin(), items.end(), 0);
            batcher.fill(items, x, y, mask);
        }
        const auto map = nn::saliency(model, x);
        nn::write_saliency_pgm(sal_pgm, map);
        nn::write_saliency_csv(sal_csv, map);
        std::cout << json{{"rows", map.rows}, {"cols", map.cols}, {"batch", map.batch_size}}
                  << "\n";
    });

    CLI11_PARSE(app, argc, argv);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const UnsupportedFormatError& e) {
        std::cerr << json{{"error", {{"code", "format"}, {"message", e.what()}}}} << "\n";
        return 4;
    } catch (const TruncatedFileError& e) {
        std::cerr << json{{"error", {{"code", "format"}, {"message", e.what()}}}} << "\n";
        return 4;
    } catch (const ContainerParseError& e) {
        std::cerr << json{{"error", {{"code", "format"}, {"message", e.what()}}}} << "\n";
        return 4;
    } catch (const nn::TrainDivergedError& e) {
        std::cerr << json{{"error", {{"code", "diverged"}, {"message", e.what()}}}} << "\n";
        return 5;
    } catch (const std::invalid_argument& e) {
        std::cerr << json{{"error", {{"code", "config"}, {"message", e.what()}}}} << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << json{{"error", {{"code", "runtime"}, {"message", e.what()}}}} << "\n";
        return 3;
    }
}
