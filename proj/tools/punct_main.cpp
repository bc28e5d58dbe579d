// punct: multimodal punctuation restoration over precomputed text/audio
// embeddings. Subcommands generate synthetic fixtures, train the temporal
// convolution model, predict with the two-branch ensemble, and evaluate F1.
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 numeric blow-up,
// 5 checkpoint error.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>

#include "CLI11.hpp"
#include "punct/config.hpp"
#include "punct/dataset.hpp"
#include "punct/ensemble.hpp"
#include "punct/io.hpp"
#include "punct/rng.hpp"
#include "punct/synth.hpp"
#include "punct/tdnn.hpp"

using namespace punct;

namespace {

int guarded(const std::function<void()>& body) {
    try {
        body();
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const CheckpointError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 5;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
}

std::pair<TdnnModel, OptimizerState> load_checkpoint_cli(const std::filesystem::path& path) {
    try {
        return load_checkpoint(path);
    } catch (const CheckpointError&) {
        throw;
    } catch (const Error& e) {
        throw CheckpointError(e.what());
    }
}

// Windows for one utterance, in token order.
std::vector<WindowExample> utterance_windows(const ManifestEntry& entry) {
    EmbeddingMatrix text = read_embeddings(entry.text_path);
    EmbeddingMatrix audio = read_embeddings(entry.audio_path);
    AlignmentTable align = read_alignment(entry.align_path);
    FusedSequence seq = align_and_concat(text, audio, align);
    seq.utterance_id = entry.utterance_id;
    return extract_windows(seq);
}

std::vector<PosteriorRecord> tdnn_posteriors(TdnnModel& model,
                                             const std::vector<WindowExample>& windows,
                                             int batch_size = 32) {
    model.mode = Mode::Eval;
    std::vector<PosteriorRecord> records;
    records.reserve(windows.size());
    for (size_t start = 0; start < windows.size(); start += batch_size) {
        size_t end = std::min(windows.size(), start + batch_size);
        std::vector<const MatrixF*> batch;
        for (size_t i = start; i < end; ++i) batch.push_back(&windows[i].window);
        ForwardResult r = forward_batch(model, batch);
        for (size_t i = start; i < end; ++i) {
            PosteriorRecord rec;
            rec.token_index = windows[i].token_index;
            rec.probs = r.probs[i - start];
            records.push_back(rec);
        }
    }
    return records;
}

std::vector<PosteriorRecord> text_posteriors_for(const std::filesystem::path& dir,
                                                 const std::string& utterance_id,
                                                 size_t expected) {
    std::filesystem::path path = dir / (utterance_id + ".post.tsv");
    std::vector<PosteriorRecord> recs = read_posteriors(path);
    if (recs.size() != expected)
        throw TokenIndexMismatch("utterance " + utterance_id + ": " + std::to_string(recs.size()) +
                                 " text posteriors for " + std::to_string(expected) +
                                 " transitions");
    return recs;
}

struct PredictionRow {
    std::string utterance_id;
    int token_index = 0;
    PunctClass label = PunctClass::NoPunct;
    std::array<double, 4> probs{};
};

std::vector<PredictionRow> read_predictions(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open " + path.string());
    std::vector<PredictionRow> rows;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        PredictionRow row;
        std::string label;
        if (!(ss >> row.utterance_id >> row.token_index >> label >> row.probs[0] >>
              row.probs[1] >> row.probs[2] >> row.probs[3]))
            throw ParseError(path.string() + ":" + std::to_string(line_no) +
                             ": expected 7 fields");
        row.label = punct_from_name(label);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

int cmd_synth(const std::filesystem::path& spec_path, const std::filesystem::path& out_dir) {
    // Everything wrong with a fixture request is a configuration problem.
    try {
        SynthSpec spec = load_synth_spec(spec_path);
        std::filesystem::path manifest = write_fixture_tree(spec, out_dir);
        std::cerr << spec.num_utterances << " utterances written under " << out_dir.string()
                  << "\n";
        std::cout << manifest.string() << "\n";
        return 0;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

struct TrainArgs {
    std::string manifest;
    std::string config;
    std::string out;
    std::string val_manifest;
    std::optional<uint64_t> seed;
    std::optional<int> epochs;
    std::optional<int> batch_size;
    std::optional<int64_t> epoch_size;
    std::optional<double> lr;
    std::optional<double> momentum;
    std::optional<double> stop_accuracy;
};

int cmd_train(const TrainArgs& args) {
    return guarded([&] {
        RunConfig cfg;
        if (!args.config.empty()) cfg = load_run_config(args.config);
        if (args.epochs) cfg.training.epochs = *args.epochs;
        if (args.batch_size) cfg.training.batch_size = *args.batch_size;
        if (args.epoch_size) cfg.training.epoch_size = *args.epoch_size;
        if (args.lr) cfg.learning_rate = *args.lr;
        if (args.momentum) cfg.momentum = *args.momentum;
        if (args.stop_accuracy) cfg.training.stop_accuracy = *args.stop_accuracy;
        if (args.seed) cfg.training.sampler_seed = *args.seed;

        std::vector<WindowExample> train_set = load_windows(read_manifest(args.manifest));
        if (train_set.empty()) throw EmptyDataset("manifest yields no training windows");
        if (train_set[0].window.rows != cfg.model.input_dim)
            throw ShapeMismatch("model expects " + std::to_string(cfg.model.input_dim) +
                                " fused rows, data has " +
                                std::to_string(train_set[0].window.rows));

        std::vector<WindowExample> val_set;
        if (!args.val_manifest.empty()) val_set = load_windows(read_manifest(args.val_manifest));

        const uint64_t master = cfg.training.sampler_seed;
        TdnnModel model = TdnnModel::init(cfg.model, SplitMix64::derive(master, 1));
        OptimizerState opt = OptimizerState::init(model, cfg.learning_rate, cfg.momentum);
        cfg.training.sampler_seed = SplitMix64::derive(master, 2);

        std::cout << "# epoch\tmean_loss\ttrain_accuracy\tval_overall_f1\n";
        train(model, opt, train_set, cfg.training, val_set.empty() ? nullptr : &val_set,
              [](const EpochStats& s) {
                  std::cout << s.epoch << '\t' << fmt_double(s.mean_loss) << '\t'
                            << fmt_double(s.train_accuracy) << '\t'
                            << (s.has_val ? fmt_double(s.val_overall_f1) : "NA") << "\n";
                  std::cout.flush();
              });
        save_checkpoint(model, opt, args.out);
        std::cerr << "checkpoint written to " << args.out << "\n";
    });
}

int cmd_predict(const std::string& manifest_path, const std::string& checkpoint,
                double alpha, const std::string& posterior_dir, const std::string& out_path) {
    return guarded([&] {
        EnsembleConfig ens{alpha};
        ens.validate();
        if (posterior_dir.empty() && alpha != 1.0) {
            std::cerr << "no text posteriors given; behaving as alpha=1 (acoustic branch only)\n";
            ens.alpha = 1.0;
        }
        auto [model, opt] = load_checkpoint_cli(checkpoint);
        (void)opt;

        std::ofstream out(out_path, std::ios::trunc);
        if (!out) throw IoFailure("cannot open " + out_path + " for writing");
        out << "# utterance_id\ttoken_index\tlabel\tp_comma\tp_fullstop\tp_question\tp_nopunct\n";

        for (const ManifestEntry& entry : read_manifest(manifest_path)) {
            std::vector<WindowExample> windows = utterance_windows(entry);
            if (!windows.empty() && windows[0].window.rows != model.cfg.input_dim)
                throw ShapeMismatch("utterance " + entry.utterance_id + ": model expects " +
                                    std::to_string(model.cfg.input_dim) + " fused rows, got " +
                                    std::to_string(windows[0].window.rows));
            std::vector<PosteriorRecord> y_a = tdnn_posteriors(model, windows);
            std::vector<PosteriorRecord> y_t;
            if (!posterior_dir.empty())
                y_t = text_posteriors_for(posterior_dir, entry.utterance_id, y_a.size());

            for (size_t i = 0; i < y_a.size(); ++i) {
                std::array<double, 4> blended = y_a[i].probs;
                if (!y_t.empty()) {
                    if (y_t[i].token_index != y_a[i].token_index)
                        throw TokenIndexMismatch("utterance " + entry.utterance_id +
                                                 ": text posterior token order mismatch at row " +
                                                 std::to_string(i));
                    for (int k = 0; k < 4; ++k)
                        blended[k] =
                            ens.alpha * y_a[i].probs[k] + (1.0 - ens.alpha) * y_t[i].probs[k];
                }
                int best = 0;
                for (int k = 1; k < 4; ++k)
                    if (blended[k] > blended[best]) best = k;
                out << entry.utterance_id << '\t' << y_a[i].token_index << '\t'
                    << punct_name(punct_from_code(best));
                for (int k = 0; k < 4; ++k) out << '\t' << fmt_double(blended[k]);
                out << "\n";
            }
        }
        out.flush();
        if (!out) throw IoFailure("write failed on " + out_path);
    });
}

// Gold labels per utterance, keyed by utterance id, in token order.
std::map<std::string, std::vector<PunctClass>> gold_labels(const std::string& manifest_path) {
    std::map<std::string, std::vector<PunctClass>> golds;
    for (const ManifestEntry& entry : read_manifest(manifest_path)) {
        AlignmentTable align = read_alignment(entry.align_path);
        std::vector<PunctClass>& labels = golds[entry.utterance_id];
        for (const AlignmentEntry& e : align.entries) labels.push_back(e.label);
    }
    return golds;
}

int cmd_evaluate(const std::string& pred_path, const std::string& manifest_path) {
    return guarded([&] {
        std::map<std::string, std::vector<PunctClass>> golds = gold_labels(manifest_path);
        std::map<std::string, std::vector<std::pair<int, PunctClass>>> preds_by_utt;
        for (const PredictionRow& row : read_predictions(pred_path))
            preds_by_utt[row.utterance_id].emplace_back(row.token_index, row.label);

        std::vector<PunctClass> preds, gold_flat;
        for (auto& [id, gold] : golds) {
            auto it = preds_by_utt.find(id);
            if (it == preds_by_utt.end() || it->second.size() != gold.size())
                throw LengthMismatch(
                    "utterance " + id + ": " +
                    std::to_string(it == preds_by_utt.end() ? 0 : it->second.size()) +
                    " predictions for " + std::to_string(gold.size()) + " gold labels");
            std::sort(it->second.begin(), it->second.end());
            for (size_t i = 0; i < gold.size(); ++i) {
                if (it->second[i].first != static_cast<int>(i))
                    throw TokenIndexMismatch("utterance " + id + ": missing prediction for token " +
                                             std::to_string(i));
                preds.push_back(it->second[i].second);
                gold_flat.push_back(gold[i]);
            }
        }
        for (const auto& [id, rows] : preds_by_utt)
            if (!golds.contains(id))
                throw LengthMismatch("utterance " + id + " has predictions but no gold labels");

        EvalReport report = evaluate(preds, gold_flat);
        std::cerr << format_report(report);
        std::cout << "metric\tvalue\n";
        const char* names[3] = {"comma", "fullstop", "question"};
        for (int c = 0; c < 3; ++c) {
            std::cout << "precision_" << names[c] << '\t'
                      << fmt_double(report.per_class[c].precision) << "\n";
            std::cout << "recall_" << names[c] << '\t' << fmt_double(report.per_class[c].recall)
                      << "\n";
            std::cout << "f1_" << names[c] << '\t' << fmt_double(report.per_class[c].f1) << "\n";
            std::cout << "support_" << names[c] << '\t' << report.per_class[c].support << "\n";
        }
        std::cout << "f1_overall\t" << fmt_double(report.overall_f1) << "\n";
    });
}

int cmd_sweep(const std::string& manifest_path, const std::string& checkpoint,
              const std::string& posterior_dir, std::vector<double> alphas) {
    return guarded([&] {
        if (alphas.empty()) alphas = kDefaultSweepAlphas;
        for (double a : alphas) EnsembleConfig{a}.validate();
        auto [model, opt] = load_checkpoint_cli(checkpoint);
        (void)opt;

        std::vector<PosteriorRecord> y_a_all, y_t_all;
        std::vector<PunctClass> golds;
        for (const ManifestEntry& entry : read_manifest(manifest_path)) {
            AlignmentTable align = read_alignment(entry.align_path);
            std::vector<WindowExample> windows = utterance_windows(entry);
            std::vector<PosteriorRecord> y_a = tdnn_posteriors(model, windows);
            std::vector<PosteriorRecord> y_t =
                text_posteriors_for(posterior_dir, entry.utterance_id, y_a.size());
            for (size_t i = 0; i < y_a.size(); ++i) {
                y_a_all.push_back(y_a[i]);
                y_t_all.push_back(y_t[i]);
                golds.push_back(align.entries[windows[i].token_index].label);
            }
        }

        auto rows = alpha_sweep(y_a_all, y_t_all, golds, alphas);
        std::cerr << format_sweep_table(rows);
        std::cout << sweep_tsv(rows);
    });
}

int cmd_params(const std::string& config_path) {
    return guarded([&] {
        RunConfig cfg;
        if (!config_path.empty()) cfg = load_run_config(config_path);
        TdnnModel model = TdnnModel::init(cfg.model, 0);
        ParamCount pc = count_parameters(model);
        std::cout << "layer\tparameters\n";
        for (const auto& [name, n] : pc.per_layer) std::cout << name << '\t' << n << "\n";
        std::cout << "total\t" << pc.total << "\n";
    });
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multimodal punctuation restoration: fixtures, training, ensembling, and F1"};
    app.require_subcommand(1);
    int threads = 1;
    app.add_option("--threads", threads, "worker threads (never changes outputs)");

    auto* synth = app.add_subcommand("synth", "generate a synthetic fixture tree");
    std::string synth_spec, synth_out;
    synth->add_option("--spec", synth_spec, "synthesis spec (JSON)")->required();
    synth->add_option("--out", synth_out, "output directory")->required();

    auto* train_cmd = app.add_subcommand("train", "train the temporal convolution model");
    TrainArgs targs;
    train_cmd->add_option("--manifest", targs.manifest, "training manifest")->required();
    train_cmd->add_option("--config", targs.config, "experiment config (JSON)");
    train_cmd->add_option("--out", targs.out, "output checkpoint")->required();
    train_cmd->add_option("--val-manifest", targs.val_manifest, "validation manifest");
    train_cmd->add_option("--seed", targs.seed, "master seed (init + sampling)");
    train_cmd->add_option("--epochs", targs.epochs, "training epochs");
    train_cmd->add_option("--batch", targs.batch_size, "batch size");
    train_cmd->add_option("--epoch-size", targs.epoch_size, "samples per epoch (0 = dataset)");
    train_cmd->add_option("--lr", targs.lr, "learning rate");
    train_cmd->add_option("--momentum", targs.momentum, "SGD momentum");
    train_cmd->add_option("--stop-acc", targs.stop_accuracy, "early-stop train accuracy");

    auto* predict = app.add_subcommand("predict", "write per-transition ensemble predictions");
    std::string p_manifest, p_ckpt, p_posteriors, p_out;
    double p_alpha = 0.4;
    predict->add_option("--manifest", p_manifest, "input manifest")->required();
    predict->add_option("--checkpoint", p_ckpt, "model checkpoint")->required();
    predict->add_option("--alpha", p_alpha, "acoustic-branch ensemble weight in [0,1]");
    predict->add_option("--text-posteriors", p_posteriors,
                        "directory of <utterance_id>.post.tsv text-branch posteriors");
    predict->add_option("--out", p_out, "output predictions TSV")->required();

    auto* evaluate_cmd = app.add_subcommand("evaluate", "score predictions against gold labels");
    std::string e_pred, e_manifest;
    evaluate_cmd->add_option("--pred", e_pred, "predictions TSV from `predict`")->required();
    evaluate_cmd->add_option("--manifest", e_manifest, "gold manifest")->required();

    auto* sweep = app.add_subcommand("sweep", "evaluate a set of ensemble weights");
    std::string s_manifest, s_ckpt, s_posteriors;
    std::vector<double> s_alphas;
    sweep->add_option("--manifest", s_manifest, "input manifest")->required();
    sweep->add_option("--checkpoint", s_ckpt, "model checkpoint")->required();
    sweep->add_option("--text-posteriors", s_posteriors, "text posterior directory")->required();
    sweep->add_option("--alphas", s_alphas, "alphas to evaluate")->delimiter(',');

    auto* params = app.add_subcommand("params", "report per-layer parameter counts");
    std::string params_config;
    params->add_option("--config", params_config, "experiment config (JSON)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    set_num_threads(threads);
    if (synth->parsed()) return cmd_synth(synth_spec, synth_out);
    if (train_cmd->parsed()) return cmd_train(targs);
    if (predict->parsed()) return cmd_predict(p_manifest, p_ckpt, p_alpha, p_posteriors, p_out);
    if (evaluate_cmd->parsed()) return cmd_evaluate(e_pred, e_manifest);
    if (sweep->parsed()) return cmd_sweep(s_manifest, s_ckpt, s_posteriors, s_alphas);
    if (params->parsed()) return cmd_params(params_config);
    return 2;
}
