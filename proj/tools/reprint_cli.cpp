// Command-line front end: synth, pca-info, augment, train-eval, bench, export-2d.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "reprint/reprint.hpp"

namespace {

using namespace reprint;

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    return out;
}

/// Writes to `path`, or stdout when the path is empty or "-".
template <class Fn>
void with_output(const std::string& path, Fn&& fn) {
    if (path.empty() || path == "-") {
        fn(std::cout);
        return;
    }
    auto out = open_out(path);
    fn(out);
}

EmbeddingFormat resolve_format(const std::string& flag, const std::string& path) {
    if (flag.empty()) return format_from_path(path);
    if (auto f = parse_format(flag)) return *f;
    throw ConfigError("unknown format '" + flag + "'");
}

/// Fills options of `sub` that were not given on the command line from a flat
/// `key = value` file whose keys are the long flag names.
void apply_config_file(CLI::App& sub, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    for (const auto& item : CLI::ConfigTOML().from_config(in)) {
        if (item.name.empty() || item.name == "++" || item.name == "--") continue;
        std::string key = item.name;
        std::replace(key.begin(), key.end(), '_', '-');
        auto* opt = sub.get_option_no_throw("--" + key);
        if (opt == nullptr) throw ConfigError("unknown config key '" + item.name + "'");
        if (opt->count() > 0) continue;
        opt->clear();
        for (const auto& v : item.inputs) opt->add_result(v);
        opt->run_callback();
    }
}

struct ReprintFlags {
    std::size_t pcs_source = 5;
    std::size_t pcs_target = 5;
    std::optional<std::size_t> pcs;
    std::optional<double> evr;
    std::string label_strategy = "residual_energy";
    double epsilon = 0.0;

    void add_to(CLI::App* app) {
        app->add_option("--pcs-source", pcs_source, "principal components of the source class (h)");
        app->add_option("--pcs-target", pcs_target, "principal components of the target class (q)");
        app->add_option("--pcs", pcs, "sets both --pcs-source and --pcs-target");
        app->add_option("--evr", evr, "explained-variance threshold in (0,1]; overrides --pcs*");
        app->add_option("--label-strategy", label_strategy,
                        "literal_determinant | pseudo_determinant | trace_ratio | residual_energy | hard");
        app->add_option("--epsilon", epsilon, "positivity threshold of the label condition");
    }

    ReprintConfig config(std::uint64_t seed) const {
        ReprintConfig cfg;
        if (evr) {
            cfg.source_policy = RankPolicy::explained_variance(*evr);
            cfg.target_policy = RankPolicy::explained_variance(*evr);
        } else {
            cfg.source_policy = RankPolicy::fixed(pcs.value_or(pcs_source));
            cfg.target_policy = RankPolicy::fixed(pcs.value_or(pcs_target));
        }
        cfg.label_strategy = parse_label_strategy(label_strategy);
        if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be non-negative");
        cfg.positivity_epsilon = epsilon;
        cfg.seed = seed;
        return cfg;
    }
};

struct BaselineFlags {
    double noise_sigma = 0.1;
    std::size_t smote_k = 5;
    double mixup_alpha = 0.75;
    double we_lambda = 0.5;

    void add_to(CLI::App* app) {
        app->add_option("--noise-sigma", noise_sigma, "standard deviation of the NOISE baseline");
        app->add_option("--smote-k", smote_k, "neighbors considered by SMOTE");
        app->add_option("--mixup-alpha", mixup_alpha, "Beta(alpha, alpha) parameter of mixup");
        app->add_option("--we-lambda", we_lambda, "extrapolation weight of WE");
    }

    BaselineConfig config(BaselineMethod method, std::uint64_t seed) const {
        BaselineConfig cfg;
        cfg.method = method;
        cfg.noise_sigma = noise_sigma;
        cfg.smote_k = smote_k;
        cfg.mixup_alpha = mixup_alpha;
        cfg.we_lambda = we_lambda;
        cfg.seed = seed;
        cfg.validate();
        return cfg;
    }
};

struct MlpFlags {
    std::vector<std::size_t> hidden{128};
    bool no_hidden = false;
    int epochs = 30;
    std::size_t batch_size = 64;
    double lr = 1e-3;
    std::string optimizer = "adam";
    double weight_decay = 0.0;

    void add_to(CLI::App* app) {
        app->add_option("--hidden", hidden, "hidden layer widths")->delimiter(',');
        app->add_flag("--no-hidden", no_hidden, "softmax regression (no hidden layer)");
        app->add_option("--epochs", epochs);
        app->add_option("--batch-size", batch_size);
        app->add_option("--lr", lr, "learning rate");
        app->add_option("--optimizer", optimizer, "adam | sgd");
        app->add_option("--weight-decay", weight_decay);
    }

    MlpConfig config(std::uint64_t seed) const {
        MlpConfig cfg;
        cfg.hidden_sizes = no_hidden ? std::vector<std::size_t>{} : hidden;
        cfg.epochs = epochs;
        cfg.batch_size = batch_size;
        cfg.learning_rate = lr;
        cfg.optimizer = parse_optimizer(optimizer);
        cfg.weight_decay = weight_decay;
        cfg.seed = seed;
        cfg.validate();
        return cfg;
    }
};

std::string fmt_rank(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hidden-space augmentation toolkit for imbalanced classification"};
    app.require_subcommand(1);

    // synth -----------------------------------------------------------------
    auto* synth = app.add_subcommand("synth", "generate an anisotropic Gaussian mixture (pool + test)");
    SynthSpec synth_spec;
    std::string synth_pool, synth_test, synth_format;
    synth->add_option("--classes", synth_spec.num_classes, "K");
    synth->add_option("--dim", synth_spec.dim, "d");
    synth->add_option("--mean-scale", synth_spec.mean_scale);
    synth->add_option("--spectrum", synth_spec.spectrum, "covariance eigenvalues, padded with the last")
        ->delimiter(',');
    synth->add_option("--train-per-class", synth_spec.train_per_class);
    synth->add_option("--test-per-class", synth_spec.test_per_class);
    synth->add_option("--seed", synth_spec.seed);
    synth->add_option("--out", synth_pool, "pool output file")->required();
    synth->add_option("--out-test", synth_test, "test output file")->required();
    synth->add_option("--format", synth_format, "binary | jsonl (default: from extension)");

    // pca-info --------------------------------------------------------------
    auto* pca = app.add_subcommand("pca-info", "per-class explained-variance spectra as CSV");
    std::string pca_in, pca_format, pca_out, pca_means;
    std::optional<std::size_t> pca_pcs;
    std::optional<double> pca_evr;
    pca->add_option("--in", pca_in)->required();
    pca->add_option("--format", pca_format);
    pca->add_option("--pcs", pca_pcs, "fixed rank");
    pca->add_option("--evr", pca_evr, "explained-variance threshold");
    pca->add_option("--out", pca_out, "CSV output (default stdout)");
    pca->add_option("--means-out", pca_means, "CSV of class means");

    // augment ---------------------------------------------------------------
    auto* aug = app.add_subcommand("augment", "write augmented examples as an EMBS file");
    std::string aug_method = "reprint", aug_in, aug_format, aug_out;
    std::uint64_t aug_seed = 0;
    bool aug_with_original = false;
    ReprintFlags aug_reprint;
    BaselineFlags aug_baseline;
    aug->add_option("--method", aug_method, "reprint | upsample | noise | smote | mixup | we | ld | ge3");
    aug->add_option("--in", aug_in)->required();
    aug->add_option("--format", aug_format);
    aug->add_option("--out", aug_out)->required();
    aug->add_option("--seed", aug_seed);
    aug->add_flag("--with-original", aug_with_original, "prepend the original examples (one-hot)");
    aug_reprint.add_to(aug);
    aug_baseline.add_to(aug);

    // train-eval ------------------------------------------------------------
    auto* te = app.add_subcommand("train-eval", "train the MLP on one or more files and report test accuracy");
    std::vector<std::string> te_train;
    std::string te_test, te_model_out, te_format;
    std::uint64_t te_seed = 0;
    MlpFlags te_mlp;
    te->add_option("--train", te_train, "EMB1 / EMBS / JSONL files, concatenated")->required();
    te->add_option("--test", te_test)->required();
    te->add_option("--format", te_format, "format of the test file");
    te->add_option("--model-out", te_model_out);
    te->add_option("--seed", te_seed);
    te_mlp.add_to(te);

    // bench -----------------------------------------------------------------
    auto* bench = app.add_subcommand("bench", "run the imbalance benchmark and write CSV reports");
    std::string b_in, b_test, b_format, b_out, b_summary, b_errors, b_config, b_dataset = "synthetic";
    std::vector<std::string> b_methods{"none", "reprint", "upsample", "noise", "smote", "mixup", "we", "ld", "ge3"};
    std::vector<std::size_t> b_n_small{32, 64, 128};
    std::size_t b_n_large = 500;
    std::vector<std::uint64_t> b_seeds;
    std::uint64_t b_base_seed = 0;
    std::size_t b_num_seeds = 5;
    std::vector<std::uint32_t> b_pin;
    std::vector<std::size_t> b_sweep_pcs;
    std::vector<double> b_sweep_evr;
    bool b_label_ablation = false;
    std::size_t b_workers = 0;
    bool b_table = false;
    ReprintFlags b_reprint;
    BaselineFlags b_baseline;
    MlpFlags b_mlp;
    bench->add_option("--in", b_in, "training pool")->required();
    bench->add_option("--test", b_test)->required();
    bench->add_option("--format", b_format);
    bench->add_option("--dataset", b_dataset, "dataset name written to the reports");
    bench->add_option("--methods", b_methods)->delimiter(',');
    bench->add_option("--n-small", b_n_small)->delimiter(',');
    bench->add_option("--n-large", b_n_large);
    bench->add_option("--seeds", b_seeds, "explicit seeds (overrides --base-seed/--num-seeds)")->delimiter(',');
    bench->add_option("--base-seed", b_base_seed);
    bench->add_option("--num-seeds", b_num_seeds);
    bench->add_option("--pin-minority", b_pin, "fixed minority class ids")->delimiter(',');
    bench->add_option("--sweep-pcs", b_sweep_pcs, "extra reprint variants with h=q=k")->delimiter(',');
    bench->add_option("--sweep-evr", b_sweep_evr, "extra reprint variants with an explained-variance rank")
        ->delimiter(',');
    bench->add_flag("--label-ablation", b_label_ablation, "add a hard-label reprint variant");
    bench->add_option("--workers", b_workers, "worker threads (default: REPRINT_WORKERS or all cores)");
    bench->add_option("--out", b_out, "per-cell CSV (default stdout)");
    bench->add_option("--summary", b_summary, "mean/std CSV");
    bench->add_option("--errors", b_errors, "CSV of failed cells");
    bench->add_flag("--table", b_table, "print a percentage table to stderr");
    bench->add_option("--config", b_config, "flat key = value file; command-line flags take precedence");
    b_reprint.add_to(bench);
    b_baseline.add_to(bench);
    b_mlp.add_to(bench);

    // export-2d -------------------------------------------------------------
    auto* ex = app.add_subcommand("export-2d", "project files onto the top-2 principal directions of their union");
    std::vector<std::string> ex_in;
    std::string ex_out;
    ex->add_option("--in", ex_in, "EMB1 / EMBS / JSONL files")->required();
    ex->add_option("--out", ex_out, "CSV output (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*synth) {
            const auto data = synth_dataset(synth_spec);
            write_embeddings(data.pool, synth_pool, resolve_format(synth_format, synth_pool));
            write_embeddings(data.test, synth_test, resolve_format(synth_format, synth_test));
            std::cerr << "wrote " << data.pool.size() << " pool and " << data.test.size() << " test examples\n";
        } else if (*pca) {
            const auto set = read_embeddings(pca_in, resolve_format(pca_format, pca_in));
            const auto policy = pca_evr ? RankPolicy::explained_variance(*pca_evr)
                                        : RankPolicy::fixed(pca_pcs.value_or(set.dim()));
            const auto geoms = fit_all_classes(set, policy);
            with_output(pca_out, [&](std::ostream& os) { write_geometry_csv(os, geoms, set.vocab()); });
            if (!pca_means.empty()) {
                auto out = open_out(pca_means);
                write_means_csv(out, geoms, set.vocab());
            }
        } else if (*aug) {
            const auto set = read_embeddings(aug_in, resolve_format(aug_format, aug_in));
            std::optional<SoftLabeledSet> result;
            if (aug_method == "reprint") {
                result = augment_dataset(set, aug_reprint.config(aug_seed), default_workers());
            } else if (auto m = parse_baseline(aug_method)) {
                auto out = run_baseline(set, aug_baseline.config(*m, aug_seed));
                for (const auto& w : out.warnings) std::cerr << "warning: " << w << '\n';
                result = std::move(out.examples);
            } else {
                throw ConfigError("unknown method '" + aug_method + "'");
            }
            if (aug_with_original) result = concat(to_soft(set), *result);
            write_soft(*result, aug_out);
            std::cerr << "wrote " << result->size() << " examples\n";
        } else if (*te) {
            std::optional<SoftLabeledSet> train_set;
            for (const auto& f : te_train) {
                auto part = read_any_soft(f);
                train_set = train_set ? concat(*train_set, part) : std::move(part);
            }
            const auto test = read_embeddings(te_test, resolve_format(te_format, te_test));
            const auto run = train_with_history(*train_set, te_mlp.config(te_seed));
            const double acc = evaluate(run.model, test);
            if (!te_model_out.empty()) save_model(run.model, te_model_out);
            std::cout << nlohmann::json{{"accuracy", acc},
                                        {"final_loss", run.epoch_losses.back()},
                                        {"train_size", train_set->size()},
                                        {"test_size", test.size()}}
                             .dump()
                      << '\n';
        } else if (*bench) {
            if (!b_config.empty()) apply_config_file(*bench, b_config);
            const auto pool = read_embeddings(b_in, resolve_format(b_format, b_in));
            const auto test = read_embeddings(b_test, resolve_format(b_format, b_test));
            std::vector<std::uint64_t> seeds = b_seeds;
            if (seeds.empty()) {
                for (std::size_t i = 0; i < b_num_seeds; ++i) seeds.push_back(b_base_seed + i);
            }
            std::vector<MethodSpec> methods;
            for (const auto& name : b_methods) {
                if (name == "reprint") {
                    methods.push_back(MethodSpec::reprint_with("reprint", b_reprint.config(0)));
                } else if (auto m = parse_baseline(name)) {
                    methods.push_back(MethodSpec::baseline_with(b_baseline.config(*m, 0)));
                } else {
                    methods.push_back(parse_method(name));
                }
            }
            for (auto k : b_sweep_pcs) {
                auto cfg = b_reprint.config(0);
                cfg.source_policy = cfg.target_policy = RankPolicy::fixed(k);
                methods.push_back(MethodSpec::reprint_with("reprint-h" + std::to_string(k), cfg));
            }
            for (auto t : b_sweep_evr) {
                auto cfg = b_reprint.config(0);
                cfg.source_policy = cfg.target_policy = RankPolicy::explained_variance(t);
                methods.push_back(MethodSpec::reprint_with("reprint-evr" + fmt_rank(t), cfg));
            }
            if (b_label_ablation) {
                auto cfg = b_reprint.config(0);
                cfg.label_strategy = LabelStrategy::hard;
                methods.push_back(MethodSpec::reprint_with("reprint-hard", cfg));
            }
            BenchmarkOptions opts;
            opts.dataset = b_dataset;
            opts.n_large = b_n_large;
            opts.workers = b_workers > 0 ? b_workers : default_workers();
            if (!b_pin.empty()) opts.pinned_minority = b_pin;
            const auto report = run_benchmark(pool, test, methods, b_n_small, seeds, b_mlp.config(0), opts);
            with_output(b_out, [&](std::ostream& os) { write_rows_csv(os, report); });
            if (!b_summary.empty()) {
                auto out = open_out(b_summary);
                write_summary_csv(out, report);
            }
            std::size_t failed = 0;
            for (const auto& r : report.rows) {
                if (!r.accuracy) {
                    ++failed;
                    std::cerr << "cell failed: " << r.method << " n_small=" << r.n_small << " seed=" << r.seed
                              << ": " << r.error << '\n';
                }
            }
            if (!b_errors.empty()) {
                auto out = open_out(b_errors);
                write_errors_csv(out, report);
            }
            if (b_table) print_table(std::cerr, report);
            if (failed > 0) {
                std::cerr << nlohmann::json{{"error", "BenchmarkCellError"},
                                            {"message", std::to_string(failed) + " benchmark cells failed"}}
                                 .dump()
                          << '\n';
                return 3;
            }
        } else if (*ex) {
            std::vector<NamedVectors> groups;
            for (const auto& f : ex_in) {
                const auto set = read_any_soft(f);
                const std::string stem = std::filesystem::path(f).stem().string();
                std::map<std::uint32_t, NamedVectors> by_class;
                for (std::size_t i = 0; i < set.size(); ++i) {
                    const auto c = set.argmax(i);
                    auto& g = by_class[c];
                    if (g.name.empty()) g = NamedVectors{stem + ":" + set.vocab().name(c), set.dim(), {}};
                    auto r = set.row(i);
                    g.values.insert(g.values.end(), r.begin(), r.end());
                }
                for (auto& [c, g] : by_class) groups.push_back(std::move(g));
            }
            const auto points = export_2d(groups);
            with_output(ex_out, [&](std::ostream& os) { write_points_csv(os, points); });
        }
    } catch (const Error& e) {
        std::cerr << nlohmann::json{{"error", e.kind()}, {"message", e.what()}}.dump() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << nlohmann::json{{"error", "InternalError"}, {"message", e.what()}}.dump() << '\n';
        return 1;
    }
    return 0;
}
