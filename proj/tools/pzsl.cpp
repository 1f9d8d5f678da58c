// pzsl: command-line front end for the partial-label zero-shot engine.
//
// exit codes: 0 success, 1 validation failure (bad flags, config, data, files), 2 numeric failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pzsl/gradcheck_suite.hpp"
#include "pzsl/pzsl.hpp"

namespace fs = std::filesystem;
using namespace pzsl;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitNumeric = 2;
constexpr double kGradTolerance = 5e-3;
constexpr double kScalingBound = 2.6;

std::string fmt_acc(const std::optional<double>& v) {
    if (!v) {
        return "n/a";
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", *v);
    return buf;
}

nlohmann::json opt_json(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

struct SynthArgs {
    std::size_t classes = 10;
    std::size_t unseen = 2;
    std::size_t dim = 32;
    double sigma = 0.4;
    std::size_t train_per_class = 100;
    std::size_t test_per_class = 50;
    double q = 0.3;
    std::uint64_t seed = 7;
    std::string out;
};

int run_synth(const SynthArgs& a) {
    if (a.unseen >= a.classes) {
        throw ParameterError("--unseen must be smaller than --classes");
    }
    if (a.classes - a.unseen < 2) {
        throw ParameterError("need at least two seen classes");
    }
    SynthSpec spec;
    spec.seen = a.classes - a.unseen;
    spec.unseen = a.unseen;
    spec.dim = a.dim;
    spec.noise_sigma = a.sigma;
    spec.train_per_class = a.train_per_class;
    spec.test_per_class = a.test_per_class;
    spec.q = a.q;
    spec.seed = a.seed;
    const TrainingData data = make_synthetic_data(spec);
    save_training_data(data, a.out);
    const auto stats = candidate_stats(data.partial);
    std::printf("wrote %zu train / %zu test instances, %zu classes (%zu seen), dim %zu to %s\n", data.train.rows(),
                data.test.rows(), data.vocab.num_classes(), data.vocab.num_seen(), spec.dim, a.out.c_str());
    std::printf("mean candidate set size %.4f\n", stats.mean_size);
    return 0;
}

struct TrainArgs {
    TrainConfig config;
    std::string config_path;
};

TrainConfig resolve_config(const TrainArgs& a) {
    TrainConfig c = a.config;
    if (!a.config_path.empty()) {
        apply_json(c, detail::read_json(a.config_path));
    }
    if (c.data_dir.empty()) {
        throw ParameterError("no data directory (--data or data_dir)");
    }
    if (c.out_dir.empty()) {
        throw ParameterError("no output directory (--out or out_dir)");
    }
    c.validate();
    return c;
}

int run_train(const TrainArgs& a) {
    const TrainConfig config = resolve_config(a);
    const TrainingData data = load_training_data(config.data_dir, config.normalize_on_load);
    const fs::path out = config.out_dir;
    fs::create_directories(out);
    const nlohmann::json config_json = to_json(config);
    detail::write_json(out / "config.json", config_json);

    std::ofstream csv(out / "metrics.csv", std::ios::binary | std::ios::trunc);
    if (!csv) {
        throw DataError("cannot write " + (out / "metrics.csv").string());
    }
    csv << kMetricsHeader << '\n';

    auto observer = [&](const EpochMetrics& m, const ModelParams<float>& model) {
        csv << to_csv_row(m) << '\n';
        csv.flush();
        std::printf("epoch %4zu  total %.6g  ce %.6g  dist %.6g  disamb %s  s_acc %s  u_acc %s  (%.2fs)\n", m.epoch,
                    m.total, m.ce_term, m.dist_term, fmt_acc(m.disambiguation_acc).c_str(), fmt_acc(m.s_acc).c_str(),
                    fmt_acc(m.u_acc).c_str(), m.seconds);
        std::fflush(stdout);
        if (config.checkpoint_every && m.epoch % config.checkpoint_every == 0) {
            char name[32];
            std::snprintf(name, sizeof name, "epoch_%04zu", m.epoch);
            save_checkpoint(out / "checkpoints" / name, model, config_json, m.epoch);
        }
    };
    const TrainResult result = train(config, data, observer);
    save_checkpoint(out / "last", result.model, config_json, config.epochs);

    nlohmann::json report = {{"config_hash", config_hash(config)},
                             {"s_acc", nullptr},
                             {"u_acc", nullptr},
                             {"disambiguation_acc", nullptr}};
    if (!result.history.empty()) {
        const auto& last = result.history.back();
        report["s_acc"] = opt_json(last.s_acc);
        report["u_acc"] = opt_json(last.u_acc);
        report["disambiguation_acc"] = opt_json(last.disambiguation_acc);
    }
    detail::write_json(out / "report.json", report);
    std::printf("invariant checks passed: %zu\n", result.invariant_checks);
    return 0;
}

struct EvalArgs {
    std::string ckpt;
    std::string data;
};

struct LoadedRun {
    Checkpoint ckpt;
    TrainConfig config;
    TrainingData data;
};

LoadedRun load_run(const std::string& ckpt_dir, const std::string& data_override) {
    LoadedRun run{load_checkpoint(ckpt_dir), {}, {}};
    apply_json(run.config, run.ckpt.config);
    const std::string dir = data_override.empty() ? run.config.data_dir : data_override;
    if (dir.empty()) {
        throw ParameterError("checkpoint config has no data_dir; pass --data");
    }
    run.data = load_training_data(dir, run.config.normalize_on_load);
    if (run.data.text.rows() != run.ckpt.model.num_classes() || run.data.text.cols() != run.ckpt.model.dim) {
        throw DataError("data directory does not match the checkpoint's class count or dimension");
    }
    return run;
}

int run_eval(const EvalArgs& a) {
    const LoadedRun run = load_run(a.ckpt, a.data);
    const Accuracy acc =
        evaluate_model(run.ckpt.model, run.config, run.data.test, run.data.test_truth, run.data.vocab, run.data.text);
    std::printf("epoch %zu\ns_acc %s\nu_acc %s\n", run.ckpt.epoch, fmt_acc(acc.seen).c_str(),
                fmt_acc(acc.unseen).c_str());
    return 0;
}

struct PredictArgs {
    std::string ckpt;
    std::string data;
    std::string embeddings;
};

int run_predict(const PredictArgs& a) {
    const LoadedRun run = load_run(a.ckpt, a.data);
    const EmbeddingStore store = load_embeddings(a.embeddings, LoadOptions{run.config.normalize_on_load});
    if (store.dim() != run.ckpt.model.dim) {
        throw DataError(a.embeddings + ": dim " + std::to_string(store.dim()) + " does not match the model");
    }
    const Array<float>* classes = &run.data.text;
    Array<float> learned;
    if (run.config.predict_with == PredictWith::learned) {
        ForwardOptions<float> opts;
        opts.gumbel.tau = static_cast<float>(run.config.tau);
        opts.gumbel.hard = run.config.hard_gumbel;
        opts.gumbel.axis = run.config.assign_axis;
        opts.mining = !run.config.ablation.no_mining;
        learned = forward(Tensor<float>::constant(store.data), run.ckpt.model, opts).labels.value();
        classes = &learned;
    }
    const auto preds = predict_all(store.data, *classes);
    std::printf("id,class\n");
    for (std::size_t i = 0; i < preds.size(); ++i) {
        std::printf("%s,%s\n", store.ids[i].c_str(), run.data.vocab.name(preds[i]).c_str());
    }
    return 0;
}

int run_gradcheck(std::uint64_t seed) {
    double worst = 0.0;
    for (const auto& e : run_gradcheck_suite(seed)) {
        std::printf("%-24s %.3e\n", e.name.c_str(), e.max_rel_error);
        worst = std::max(worst, e.max_rel_error);
    }
    std::printf("max relative error %.3e (tolerance %.0e)\n", worst, kGradTolerance);
    return worst <= kGradTolerance ? 0 : kExitNumeric;
}

struct BenchArgs {
    std::vector<std::size_t> sizes{1000, 2000};
    std::size_t dim = 32;
    std::size_t epochs = 3;
    std::size_t layers = 3;
    std::uint64_t seed = 7;
};

int run_bench(const BenchArgs& a) {
    TrainConfig config;
    config.layers = a.layers;
    config.seed = a.seed;
    SynthSpec spec;
    spec.dim = a.dim;
    spec.seed = a.seed;
    const auto points = benchmark_scaling(config, spec, a.sizes, a.epochs);
    std::printf("instances,dim,epoch_seconds\n");
    for (const auto& p : points) {
        std::printf("%zu,%zu,%.6f\n", p.instances, p.dim, p.epoch_seconds);
    }
    bool ok = true;
    for (std::size_t i = 0; i < points.size(); ++i) {
        for (std::size_t j = i + 1; j < points.size(); ++j) {
            if (points[j].instances == 2 * points[i].instances && points[i].instances >= 1000) {
                const double ratio = points[j].epoch_seconds / points[i].epoch_seconds;
                std::printf("ratio N=%zu/N=%zu: %.3f (bound %.1f)\n", points[j].instances, points[i].instances, ratio,
                            kScalingBound);
                ok = ok && ratio <= kScalingBound;
            }
        }
    }
    return ok ? 0 : kExitValidation;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Partial-label zero-shot training and evaluation"};
    app.require_subcommand(1);

    SynthArgs synth;
    auto* synth_cmd = app.add_subcommand("synth-data", "Generate a synthetic embedding + candidate data set");
    synth_cmd->add_option("--classes", synth.classes, "Total classes (seen + unseen)");
    synth_cmd->add_option("--unseen", synth.unseen, "Unseen classes");
    synth_cmd->add_option("--dim", synth.dim, "Embedding width");
    synth_cmd->add_option("--sigma", synth.sigma, "Instance noise standard deviation");
    synth_cmd->add_option("--train-per-class", synth.train_per_class);
    synth_cmd->add_option("--test-per-class", synth.test_per_class);
    synth_cmd->add_option("--q", synth.q, "Flip probability for each non-true seen label");
    synth_cmd->add_option("--seed", synth.seed);
    synth_cmd->add_option("--out", synth.out, "Output directory")->required();

    TrainArgs tr;
    auto* train_cmd = app.add_subcommand("train", "Train on a data directory");
    auto& c = tr.config;
    train_cmd->add_option("--config", tr.config_path, "JSON file; its keys override flags");
    train_cmd->add_option("--data", c.data_dir, "Data directory from synth-data or an export");
    train_cmd->add_option("--out", c.out_dir, "Output directory");
    train_cmd->add_option("--epochs", c.epochs);
    train_cmd->add_option("--batch-size", c.batch_size);
    train_cmd->add_option("--lr", c.lr);
    train_cmd->add_option("--momentum", c.momentum);
    train_cmd->add_option("--layers", c.layers);
    train_cmd->add_option("--mlp-hidden", c.mlp_hidden, "MLP width, 0 for 4*dim");
    train_cmd->add_option("--heads", c.heads);
    train_cmd->add_option("--tau", c.tau);
    train_cmd->add_option("--hard-gumbel", c.hard_gumbel);
    train_cmd->add_option("--q", c.q, "Recorded in the config; candidates come from the data directory");
    train_cmd->add_option("--seed", c.seed);
    train_cmd->add_flag("--no-ce", c.ablation.no_ce);
    train_cmd->add_flag("--no-dist", c.ablation.no_dist);
    train_cmd->add_flag("--no-mining", c.ablation.no_mining);
    train_cmd->add_flag("--clamp-correction", c.clamp_correction);
    train_cmd->add_option("--checkpoint-every", c.checkpoint_every);
    std::string axis = "label", source = "raw", predict_with = "text";
    train_cmd->add_option("--assign-axis", axis)->check(CLI::IsMember({"label", "instance"}));
    train_cmd->add_option("--correction-source", source)->check(CLI::IsMember({"raw", "mined"}));
    train_cmd->add_option("--predict-with", predict_with)->check(CLI::IsMember({"text", "learned"}));

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand("eval", "Seen/unseen accuracy of a checkpoint on the test split");
    eval_cmd->add_option("--ckpt", ev.ckpt, "Checkpoint directory")->required();
    eval_cmd->add_option("--data", ev.data, "Data directory (default: the one the run trained on)");

    PredictArgs pr;
    auto* predict_cmd = app.add_subcommand("predict", "Classify every row of an embedding file");
    predict_cmd->add_option("--ckpt", pr.ckpt, "Checkpoint directory")->required();
    predict_cmd->add_option("--data", pr.data, "Data directory with the label embeddings");
    predict_cmd->add_option("--embeddings", pr.embeddings, ".pzslemb file")->required();

    std::uint64_t grad_seed = 1;
    auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
    grad_cmd->add_option("--seed", grad_seed);

    BenchArgs bench;
    auto* bench_cmd = app.add_subcommand("bench", "Per-epoch wall time against training-set size");
    bench_cmd->add_option("--sizes", bench.sizes, "Ascending training-set sizes")->delimiter(',');
    bench_cmd->add_option("--dim", bench.dim);
    bench_cmd->add_option("--epochs", bench.epochs);
    bench_cmd->add_option("--layers", bench.layers);
    bench_cmd->add_option("--seed", bench.seed);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n";
        const CLI::App* shown = &app;
        for (const auto* sub : app.get_subcommands()) {
            shown = sub;
        }
        std::cerr << shown->help();
        return kExitValidation;
    }

    try {
        if (*synth_cmd) return run_synth(synth);
        if (*train_cmd) {
            c.assign_axis = parse_assign_axis(axis);
            c.correction_source = source == "mined" ? CorrectionSource::mined : CorrectionSource::raw;
            c.predict_with = predict_with == "learned" ? PredictWith::learned : PredictWith::text;
            return run_train(tr);
        }
        if (*eval_cmd) return run_eval(ev);
        if (*predict_cmd) return run_predict(pr);
        if (*grad_cmd) return run_gradcheck(grad_seed);
        if (*bench_cmd) return run_bench(bench);
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    }
    return kExitValidation;
}
