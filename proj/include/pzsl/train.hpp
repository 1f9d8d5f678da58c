#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pzsl/checkpoint.hpp"
#include "pzsl/disambiguation.hpp"
#include "pzsl/embedding_io.hpp"
#include "pzsl/model.hpp"
#include "pzsl/optim.hpp"
#include "pzsl/partial_labels.hpp"

namespace pzsl {

struct Ablation {
    bool no_ce = false;
    bool no_dist = false;
    bool no_mining = false;  // classify the raw embeddings, skipping the mining layers
};

/// Instance embeddings fed to the correction matrix: the loaded embeddings (raw) or the
/// mining-block output cached during the epoch (mined). The mined stream has no term tying
/// it to the text space and drifts away from it as the block trains.
enum class CorrectionSource { mined, raw };
/// Which class embeddings the seen+unseen prediction rule scores against.
enum class PredictWith { text, learned };

struct TrainConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 64;
    double lr = 0.001;
    double momentum = 0.9;
    std::size_t layers = 3;
    std::size_t mlp_hidden = 0;
    std::size_t heads = 1;
    bool zero_head = true;
    double tau = 1.0;
    bool hard_gumbel = true;
    AssignAxis assign_axis = AssignAxis::label;
    double q = 0.3;
    std::uint64_t seed = 0;
    Ablation ablation;
    bool clamp_correction = false;
    CorrectionSource correction_source = CorrectionSource::raw;
    PredictWith predict_with = PredictWith::text;
    bool normalize_on_load = true;
    std::size_t checkpoint_every = 10;
    bool check_invariants = true;
    std::string data_dir;
    std::string out_dir;

    void validate() const {
        if (batch_size == 0) {
            throw ParameterError("batch_size must be >= 1");
        }
        if (!(lr > 0.0)) {
            throw ParameterError("lr must be > 0");
        }
        if (!(momentum >= 0.0 && momentum < 1.0)) {
            throw ParameterError("momentum must lie in [0, 1)");
        }
        if (!(tau > 0.0)) {
            throw ParameterError("tau must be > 0");
        }
        if (!(q >= 0.0 && q <= 1.0)) {
            throw ParameterError("q must lie in [0, 1]");
        }
        if (heads == 0) {
            throw ParameterError("heads must be >= 1");
        }
    }

    ModelConfig model_config() const { return {layers, mlp_hidden, heads, zero_head}; }
};

inline nlohmann::json to_json(const TrainConfig& c) {
    return {
        {"epochs", c.epochs},
        {"batch_size", c.batch_size},
        {"lr", c.lr},
        {"momentum", c.momentum},
        {"layers", c.layers},
        {"mlp_hidden", c.mlp_hidden},
        {"heads", c.heads},
        {"zero_head", c.zero_head},
        {"tau", c.tau},
        {"hard_gumbel", c.hard_gumbel},
        {"assign_axis", to_string(c.assign_axis)},
        {"q", c.q},
        {"seed", c.seed},
        {"ablation", {{"no_ce", c.ablation.no_ce}, {"no_dist", c.ablation.no_dist}, {"no_mining", c.ablation.no_mining}}},
        {"clamp_correction", c.clamp_correction},
        {"correction_source", c.correction_source == CorrectionSource::mined ? "mined" : "raw"},
        {"predict_with", c.predict_with == PredictWith::text ? "text" : "learned"},
        {"normalize_on_load", c.normalize_on_load},
        {"checkpoint_every", c.checkpoint_every},
        {"check_invariants", c.check_invariants},
        {"data_dir", c.data_dir},
        {"out_dir", c.out_dir},
    };
}

/// Overlays the keys present in `j` onto `c`. Unknown keys are rejected.
inline void apply_json(TrainConfig& c, const nlohmann::json& j) {
    if (!j.is_object()) {
        throw ParameterError("config must be a JSON object");
    }
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "epochs") c.epochs = v.get<std::size_t>();
            else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
            else if (key == "lr") c.lr = v.get<double>();
            else if (key == "momentum") c.momentum = v.get<double>();
            else if (key == "layers") c.layers = v.get<std::size_t>();
            else if (key == "mlp_hidden") c.mlp_hidden = v.get<std::size_t>();
            else if (key == "heads") c.heads = v.get<std::size_t>();
            else if (key == "zero_head") c.zero_head = v.get<bool>();
            else if (key == "tau") c.tau = v.get<double>();
            else if (key == "hard_gumbel") c.hard_gumbel = v.get<bool>();
            else if (key == "assign_axis") c.assign_axis = parse_assign_axis(v.get<std::string>());
            else if (key == "q") c.q = v.get<double>();
            else if (key == "seed") c.seed = v.get<std::uint64_t>();
            else if (key == "ablation") {
                for (const auto& [ak, av] : v.items()) {
                    if (ak == "no_ce") c.ablation.no_ce = av.get<bool>();
                    else if (ak == "no_dist") c.ablation.no_dist = av.get<bool>();
                    else if (ak == "no_mining") c.ablation.no_mining = av.get<bool>();
                    else throw ParameterError("unknown ablation switch '" + ak + "'");
                }
            } else if (key == "clamp_correction") c.clamp_correction = v.get<bool>();
            else if (key == "correction_source") {
                const auto s = v.get<std::string>();
                if (s != "mined" && s != "raw") {
                    throw ParameterError("correction_source must be mined|raw");
                }
                c.correction_source = s == "mined" ? CorrectionSource::mined : CorrectionSource::raw;
            } else if (key == "predict_with") {
                const auto s = v.get<std::string>();
                if (s != "text" && s != "learned") {
                    throw ParameterError("predict_with must be text|learned");
                }
                c.predict_with = s == "text" ? PredictWith::text : PredictWith::learned;
            } else if (key == "normalize_on_load") c.normalize_on_load = v.get<bool>();
            else if (key == "checkpoint_every") c.checkpoint_every = v.get<std::size_t>();
            else if (key == "check_invariants") c.check_invariants = v.get<bool>();
            else if (key == "data_dir") c.data_dir = v.get<std::string>();
            else if (key == "out_dir") c.out_dir = v.get<std::string>();
            else throw ParameterError("unknown config field '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParameterError(std::string("config: ") + e.what());
    }
}

/// FNV-1a over the canonical JSON dump, as 16 hex digits.
inline std::string config_hash(const TrainConfig& c) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : to_json(c).dump()) {
        h = (h ^ ch) * 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

/// Everything a training run consumes, already in memory.
struct TrainingData {
    ClassVocabulary vocab;
    Array<float> text;        // K x d, seen then unseen
    Array<float> train;       // N x d, seen-class instances only
    PartialDataset partial;   // N x Q candidates + hidden truth
    Array<float> test;        // optional clean test split
    std::vector<std::size_t> test_truth;

    std::size_t num_seen() const noexcept { return vocab.num_seen(); }

    void validate() const {
        vocab.validate();
        if (text.rows() != vocab.num_classes()) {
            throw DataError("label embeddings have " + std::to_string(text.rows()) + " rows for " +
                            std::to_string(vocab.num_classes()) + " classes");
        }
        if (train.cols() != text.cols() || (!test.empty() && test.cols() != text.cols())) {
            throw DataError("embedding dimensions differ between stores");
        }
        if (partial.size() != train.rows()) {
            throw DataError("candidate file has " + std::to_string(partial.size()) + " rows for " +
                            std::to_string(train.rows()) + " training instances");
        }
        if (partial.num_classes() != num_seen()) {
            throw DataError("candidate mask width differs from the seen class count");
        }
        partial.validate();
        if (test_truth.size() != test.rows()) {
            throw DataError("test truth length does not match test instances");
        }
        for (auto t : test_truth) {
            if (t >= vocab.num_classes()) {
                throw DataError("test truth names unknown class " + std::to_string(t));
            }
        }
    }
};

/// Parameters for an in-memory synthetic benchmark.
struct SynthSpec {
    std::size_t seen = 8;
    std::size_t unseen = 2;
    std::size_t dim = 32;
    double noise_sigma = 0.4;
    std::size_t train_per_class = 100;
    std::size_t test_per_class = 50;
    double q = 0.3;
    std::uint64_t seed = 7;
};

inline ClassVocabulary synthetic_vocabulary(std::size_t seen, std::size_t unseen) {
    ClassVocabulary v;
    char buf[32];
    for (std::size_t i = 0; i < seen + unseen; ++i) {
        std::snprintf(buf, sizeof buf, "class_%03zu", i);
        (i < seen ? v.seen : v.unseen).emplace_back(buf);
    }
    return v;
}

/// Shared prototypes; training rows for seen classes with corrupted candidates,
/// clean test rows for every class.
inline TrainingData make_synthetic_data(const SynthSpec& spec) {
    TrainingData data;
    data.vocab = synthetic_vocabulary(spec.seen, spec.unseen);
    auto synth = synth_embeddings(data.vocab, 0, spec.dim, spec.noise_sigma, spec.seed);
    data.text = synth.labels.data;

    Rng root(spec.seed);
    Rng train_rng = root.split(4), test_rng = root.split(5);
    std::vector<std::size_t> seen_classes(spec.seen), all_classes(spec.seen + spec.unseen);
    std::iota(seen_classes.begin(), seen_classes.end(), std::size_t{0});
    std::iota(all_classes.begin(), all_classes.end(), std::size_t{0});

    std::vector<std::size_t> train_truth;
    data.train = synth_instances(data.text, seen_classes, spec.train_per_class, spec.noise_sigma, train_rng, train_truth);
    data.partial = synthesize_candidates(train_truth, spec.seen, spec.q, spec.seed);
    data.test = synth_instances(data.text, all_classes, spec.test_per_class, spec.noise_sigma, test_rng, data.test_truth);
    return data;
}

/// File names inside a data directory.
struct DataLayout {
    std::filesystem::path dir;
    std::filesystem::path labels() const { return dir / "labels.pzslemb"; }
    std::filesystem::path train() const { return dir / "train.pzslemb"; }
    std::filesystem::path test() const { return dir / "test.pzslemb"; }
    std::filesystem::path candidates() const { return dir / "train.candidates.json"; }
    std::filesystem::path train_truth() const { return dir / "train.truth.json"; }
    std::filesystem::path test_truth() const { return dir / "test.truth.json"; }
};

inline void save_training_data(const TrainingData& data, const std::filesystem::path& dir) {
    const DataLayout layout{dir};
    save_embeddings({data.text, data.vocab.all(), data.vocab}, layout.labels());
    save_embeddings({data.train, make_ids("train_", data.train.rows()), data.vocab}, layout.train());
    save_embeddings({data.test, make_ids("test_", data.test.rows()), data.vocab}, layout.test());
    save_candidates(data.partial, layout.candidates());
    save_truth(data.partial.hidden_truth, layout.train_truth());
    save_truth(data.test_truth, layout.test_truth());
}

inline TrainingData load_training_data(const std::filesystem::path& dir, bool normalize = true) {
    const DataLayout layout{dir};
    TrainingData data;
    const LoadOptions opts{normalize};
    auto labels = load_embeddings(layout.labels(), opts);
    auto train = load_embeddings(layout.train(), opts);
    data.vocab = labels.vocabulary;
    if (labels.ids != data.vocab.all()) {
        throw DataError(layout.labels().string() + ": label ids must list seen then unseen class names");
    }
    data.text = std::move(labels.data);
    data.train = std::move(train.data);
    data.partial = load_candidates(layout.candidates(), data.vocab.num_seen());
    data.partial.instance_ids = train.ids;
    if (std::filesystem::exists(layout.train_truth())) {
        data.partial.hidden_truth = load_truth(layout.train_truth());
    }
    if (std::filesystem::exists(layout.test())) {
        data.test = load_embeddings(layout.test(), opts).data;
        data.test_truth = load_truth(layout.test_truth());
    }
    data.validate();
    return data;
}

struct EpochMetrics {
    std::size_t epoch = 0;
    double ce_term = 0.0;  // batch means
    double dist_term = 0.0;
    double total = 0.0;
    std::optional<double> disambiguation_acc;
    std::optional<double> s_acc;
    std::optional<double> u_acc;
    double seconds = 0.0;  // descent plus refinement wall time; not part of the CSV
};

inline constexpr const char* kMetricsHeader = "epoch,ce_term,dist_term,total,train_disambiguation_acc,s_acc,u_acc";

inline std::string to_csv_row(const EpochMetrics& m) {
    auto opt = [](const std::optional<double>& v) {
        if (!v) {
            return std::string();
        }
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.6f", *v);
        return std::string(buf);
    };
    char buf[128];
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,", m.epoch, m.ce_term, m.dist_term, m.total);
    return buf + opt(m.disambiguation_acc) + "," + opt(m.s_acc) + "," + opt(m.u_acc);
}

/// Seen/unseen accuracy of the prediction rule on a clean split.
inline Accuracy evaluate_model(const ModelParams<float>& model, const TrainConfig& config, const Array<float>& instances,
                               std::span<const std::size_t> truth, const ClassVocabulary& vocab,
                               const Array<float>& text) {
    if (instances.empty()) {
        return {};
    }
    if (config.predict_with == PredictWith::text) {
        return evaluate(predict_all(instances, text), truth, vocab);
    }
    // Learned variant: L_M from one noise-free pass over the split.
    ForwardOptions<float> opts;
    opts.gumbel.tau = static_cast<float>(config.tau);
    opts.gumbel.hard = config.hard_gumbel;
    opts.gumbel.axis = config.assign_axis;
    opts.mining = !config.ablation.no_mining;
    auto fwd = forward(Tensor<float>::constant(instances), model, opts);
    return evaluate(predict_all(instances, fwd.labels.value()), truth, vocab);
}

namespace detail {

inline void check_rows_stochastic(const Array<float>& m, const char* what, double tol) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto row = m.row(i);
        double total = 0.0;
        for (float v : row) {
            if (!(v >= 0.0f)) {
                throw InvariantError(std::string(what) + ": negative entry in row " + std::to_string(i));
            }
            total += v;
        }
        if (std::abs(total - 1.0) > tol) {
            throw InvariantError(std::string(what) + ": row " + std::to_string(i) + " sums to " + std::to_string(total));
        }
    }
}

inline void check_one_hot(const Array<float>& m, bool by_column, std::size_t layer) {
    const std::size_t outer = by_column ? m.cols() : m.rows();
    const std::size_t inner = by_column ? m.rows() : m.cols();
    for (std::size_t a = 0; a < outer; ++a) {
        std::size_t ones = 0;
        for (std::size_t b = 0; b < inner; ++b) {
            const float v = by_column ? m(b, a) : m(a, b);
            if (v == 1.0f) {
                ++ones;
            } else if (v != 0.0f) {
                throw InvariantError("hard assignment in layer " + std::to_string(layer) + " is not one-hot");
            }
        }
        if (ones != 1) {
            throw InvariantError("hard assignment in layer " + std::to_string(layer) + " has " + std::to_string(ones) +
                                 " winners");
        }
    }
}

} // namespace detail

/// Verifies the per-epoch state contract; throws InvariantError on violation.
inline void check_confidence_state(const ConfidenceState<float>& state, const Array<std::uint8_t>& mask) {
    for (std::size_t i = 0; i < mask.rows(); ++i) {
        double total = 0.0;
        for (std::size_t j = 0; j < mask.cols(); ++j) {
            const float y = state.confidence(i, j);
            if (!mask(i, j) && y != 0.0f) {
                throw InvariantError("confidence outside candidate set at row " + std::to_string(i));
            }
            if (!(y >= 0.0f)) {
                throw InvariantError("negative confidence at row " + std::to_string(i));
            }
            total += y;
        }
        if (std::abs(total - 1.0) > 1e-5) {
            throw InvariantError("confidence row " + std::to_string(i) + " sums to " + std::to_string(total));
        }
    }
    for (float r : state.correction.data()) {
        if (!(r >= -1.0f && r <= 1.0f)) {
            throw InvariantError("correction entry outside [-1, 1]");
        }
    }
}

struct TrainResult {
    ModelParams<float> model;
    ConfidenceState<float> state;
    std::vector<EpochMetrics> history;
    std::size_t invariant_checks = 0;
};

/// Called after every epoch with the metrics row and the current model.
using EpochObserver = std::function<void(const EpochMetrics&, const ModelParams<float>&)>;

/// Shuffled mini-batch descent on the partial zero-shot loss; after each epoch the
/// correction matrix is recomputed from the cached instance embeddings and the
/// confidences are refined from the cached predictions.
inline TrainResult train(const TrainConfig& config, const TrainingData& data, const EpochObserver& observer = {}) {
    config.validate();
    data.validate();
    const std::size_t n = data.train.rows(), q = data.num_seen(), d = data.text.cols();
    if (n == 0) {
        throw DataError("train: no training instances");
    }
    const Rng root(config.seed);
    TrainResult result;
    result.model = init_model<float>(data.text, q, config.model_config(), root.split(10).seed());
    ModelParams<float>& model = result.model;

    Array<float> text_seen = Array<float>::matrix(q, d);
    std::copy_n(data.text.data().begin(), q * d, text_seen.data().begin());

    const bool mining = !config.ablation.no_mining;
    const bool mined_correction = config.correction_source == CorrectionSource::mined && mining;
    const LossTerms terms{!config.ablation.no_ce, !config.ablation.no_dist, config.clamp_correction};
    const bool track_truth = !data.partial.hidden_truth.empty();

    // Y^0 uniform over candidates; R^0 from one pass of the initial model.
    ConfidenceState<float>& state = result.state;
    state.confidence = initial_confidence<float>(data.partial.candidate_mask);
    if (mined_correction) {
        Array<float> mined = Array<float>::matrix(n, d);
        ForwardOptions<float> opts;
        opts.gumbel.tau = static_cast<float>(config.tau);
        for (std::size_t b = 0; b < n; b += config.batch_size) {
            std::vector<std::size_t> idx(std::min(config.batch_size, n - b));
            std::iota(idx.begin(), idx.end(), b);
            auto fwd = forward(Tensor<float>::constant(gather_rows(data.train, std::span<const std::size_t>(idx))), model, opts);
            std::copy(fwd.instances.value().data().begin(), fwd.instances.value().data().end(), mined.row(b).begin());
        }
        state.correction = label_correction(mined, text_seen);
    } else {
        state.correction = label_correction(data.train, text_seen);
    }

    SgdMomentum<float> optimizer(static_cast<float>(config.lr), static_cast<float>(config.momentum));
    auto params = model.named_parameters();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        Rng shuffle_rng = root.split(20).split(epoch);
        std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
        Rng gumbel_rng = root.split(30).split(epoch);

        Array<float> mined_cache = Array<float>::matrix(n, d);
        Array<float> pred_cache = Array<float>::matrix(n, q);
        EpochMetrics metrics;
        metrics.epoch = epoch;
        std::size_t batches = 0;

        for (std::size_t b = 0; b < n; b += config.batch_size, ++batches) {
            const std::span<const std::size_t> idx(order.data() + b, std::min(config.batch_size, n - b));
            const std::string where = "epoch " + std::to_string(epoch) + " batch " + std::to_string(batches) + ": ";
            try {
                ForwardOptions<float> opts;
                opts.gumbel.tau = static_cast<float>(config.tau);
                opts.gumbel.hard = config.hard_gumbel;
                opts.gumbel.axis = config.assign_axis;
                opts.gumbel.rng = &gumbel_rng;
                opts.mining = mining;
                auto fwd = forward(Tensor<float>::constant(gather_rows(data.train, idx)), model, opts);

                auto loss = partial_zsl_loss(fwd.predictions, gather_rows(state.correction, idx),
                                             gather_rows(state.confidence, idx), data.text, model.labels, terms);
                if (config.check_invariants) {
                    detail::check_rows_stochastic(fwd.predictions.value(), "classifier output", 1e-5);
                    if (config.hard_gumbel) {
                        for (std::size_t m = 0; m < fwd.assignments.size(); ++m) {
                            detail::check_one_hot(fwd.assignments[m], config.assign_axis == AssignAxis::label, m);
                        }
                    }
                    ++result.invariant_checks;
                }
                model.zero_grad();
                loss.total.backward();
                optimizer.step(params);

                metrics.ce_term += loss.ce_term.item();
                metrics.dist_term += loss.dist_term.item();
                metrics.total += loss.total.item();
                for (std::size_t i = 0; i < idx.size(); ++i) {
                    auto src_p = fwd.instances.value().row(i);
                    std::copy(src_p.begin(), src_p.end(), mined_cache.row(idx[i]).begin());
                    auto src_m = fwd.predictions.value().row(i);
                    std::copy(src_m.begin(), src_m.end(), pred_cache.row(idx[i]).begin());
                }
            } catch (const NumericError& e) {
                throw NumericError(where + e.what());
            } catch (const InvariantError& e) {
                throw InvariantError(where + e.what());
            }
        }
        metrics.ce_term /= static_cast<double>(batches);
        metrics.dist_term /= static_cast<double>(batches);
        metrics.total /= static_cast<double>(batches);

        state.correction = label_correction(mined_correction ? mined_cache : data.train, text_seen);
        state.confidence = refine_confidence(state.correction, pred_cache, data.partial.candidate_mask);
        state.epoch = epoch;
        metrics.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (config.check_invariants) {
            try {
                check_confidence_state(state, data.partial.candidate_mask);
            } catch (const InvariantError& e) {
                throw InvariantError("epoch " + std::to_string(epoch) + ": " + e.what());
            }
            ++result.invariant_checks;
        }

        if (track_truth) {
            metrics.disambiguation_acc = disambiguation_accuracy(state.confidence, data.partial.hidden_truth);
        }
        const Accuracy acc = evaluate_model(model, config, data.test, data.test_truth, data.vocab, data.text);
        metrics.s_acc = acc.seen;
        metrics.u_acc = acc.unseen;
        result.history.push_back(metrics);
        if (observer) {
            observer(metrics, model);
        }
    }
    return result;
}

struct ScalingPoint {
    std::size_t instances = 0;
    std::size_t dim = 0;
    double epoch_seconds = 0.0;  // fastest of the measured epochs
};

/// Per-epoch wall time of the training loop at each training-set size.
inline std::vector<ScalingPoint> benchmark_scaling(TrainConfig config, const SynthSpec& base,
                                                   std::span<const std::size_t> sizes, std::size_t epochs = 3) {
    for (std::size_t i = 1; i < sizes.size(); ++i) {
        if (sizes[i] < sizes[i - 1]) {
            throw ParameterError("benchmark_scaling: sizes must be ascending");
        }
    }
    config.epochs = epochs;
    config.check_invariants = false;
    std::vector<ScalingPoint> out;
    for (std::size_t n : sizes) {
        SynthSpec spec = base;
        spec.train_per_class = std::max<std::size_t>(1, n / spec.seen);
        spec.test_per_class = 0;
        const TrainingData data = make_synthetic_data(spec);
        const auto result = train(config, data);
        double best = result.history.front().seconds;
        for (const auto& m : result.history) {
            best = std::min(best, m.seconds);
        }
        out.push_back({data.train.rows(), spec.dim, best});
    }
    return out;
}

} // namespace pzsl
