#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/QR>

#include "reprint/baselines.hpp"
#include "reprint/class_geometry.hpp"
#include "reprint/embedding_store.hpp"
#include "reprint/errors.hpp"
#include "reprint/parallel.hpp"
#include "reprint/reprint_augmenter.hpp"
#include "reprint/rng.hpp"
#include "reprint/soft_classifier.hpp"

namespace reprint {

// ---------------------------------------------------------------------------
// Imbalance scenarios
// ---------------------------------------------------------------------------

struct ScenarioSpec {
    std::vector<std::uint32_t> minority_classes;  // ascending
    std::size_t n_small = 0;
    std::size_t n_large = 0;
    std::uint64_t seed = 0;

    bool is_minority(std::uint32_t c) const {
        return std::binary_search(minority_classes.begin(), minority_classes.end(), c);
    }
};

struct Scenario {
    LabeledEmbeddingSet train;
    ScenarioSpec spec;
};

/// floor(K/2) classes chosen uniformly by the seed.
inline std::vector<std::uint32_t> choose_minority(std::size_t num_classes, std::uint64_t seed) {
    std::vector<std::uint32_t> ids(num_classes);
    std::iota(ids.begin(), ids.end(), 0u);
    KeyedRng rng(seed, {stream::scenario, 0});
    std::shuffle(ids.begin(), ids.end(), rng);
    ids.resize(num_classes / 2);
    std::sort(ids.begin(), ids.end());
    return ids;
}

/// Subsamples n_small examples from each minority class and n_large from each
/// other class, without replacement. Records keep their pool order.
inline Scenario make_scenario(const LabeledEmbeddingSet& pool, std::size_t n_small, std::size_t n_large,
                              std::uint64_t seed,
                              const std::optional<std::vector<std::uint32_t>>& pinned_minority = std::nullopt) {
    if (n_small > n_large) throw ConfigError("n_small must not exceed n_large");
    const std::size_t k = pool.num_classes();
    ScenarioSpec spec{pinned_minority ? *pinned_minority : choose_minority(k, seed), n_small, n_large, seed};
    std::sort(spec.minority_classes.begin(), spec.minority_classes.end());
    if (spec.minority_classes.size() != k / 2) {
        throw ConfigError("minority set must contain floor(K/2) = " + std::to_string(k / 2) + " classes");
    }
    for (auto c : spec.minority_classes) {
        if (c >= k) throw ConfigError("minority class id out of range");
    }
    const auto counts = pool.class_counts();
    for (std::uint32_t c = 0; c < k; ++c) {
        if (counts[c] < n_large) {
            throw PoolError("class '" + pool.vocab().name(c) + "' has " + std::to_string(counts[c]) +
                            " pool examples, need " + std::to_string(n_large));
        }
    }
    std::vector<std::size_t> picked;
    for (std::uint32_t c = 0; c < k; ++c) {
        auto members = pool.members(c);
        KeyedRng rng(seed, {stream::scenario, 1, c});
        std::shuffle(members.begin(), members.end(), rng);
        members.resize(spec.is_minority(c) ? n_small : n_large);
        picked.insert(picked.end(), members.begin(), members.end());
    }
    std::sort(picked.begin(), picked.end());
    return Scenario{subset(pool, picked), std::move(spec)};
}

// ---------------------------------------------------------------------------
// Synthetic anisotropic Gaussian mixtures
// ---------------------------------------------------------------------------

struct SynthSpec {
    std::size_t num_classes = 4;
    std::size_t dim = 32;
    double mean_scale = 1.0;            // class means ~ N(0, mean_scale^2 I)
    std::vector<double> spectrum{1.0};  // covariance eigenvalues, padded with the last entry
    std::size_t train_per_class = 500;
    std::size_t test_per_class = 200;
    std::uint64_t seed = 0;

    void validate() const {
        if (num_classes < 2) throw ConfigError("synthetic data needs K >= 2");
        if (dim == 0) throw ConfigError("synthetic dimension must be positive");
        if (spectrum.empty() || spectrum.size() > dim) throw ConfigError("spectrum must have 1..d entries");
        for (double v : spectrum) {
            if (!(v >= 0.0)) throw ConfigError("spectrum entries must be non-negative");
        }
        if (!(mean_scale >= 0.0)) throw ConfigError("mean scale must be non-negative");
    }

    std::vector<double> padded_spectrum() const {
        std::vector<double> s = spectrum;
        s.resize(dim, spectrum.back());
        return s;
    }
};

struct SynthData {
    LabeledEmbeddingSet pool;
    LabeledEmbeddingSet test;
};

/// Haar-distributed rotation from the QR factorization of a Gaussian matrix.
template <class Rng>
Eigen::MatrixXd random_rotation(std::size_t dim, Rng& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::MatrixXd m(dim, dim);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = g(rng);
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
    Eigen::MatrixXd q = qr.householderQ();
    const Eigen::MatrixXd rmat = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index c = 0; c < q.cols(); ++c) {
        if (rmat(c, c) < 0.0) q.col(c) *= -1.0;
    }
    return q;
}

/// Per-class rotation used by synth_dataset (exposed for planted-model checks).
inline Eigen::MatrixXd synth_rotation(const SynthSpec& spec, std::uint32_t cls) {
    KeyedRng rng(spec.seed, {stream::synth, cls, 1});
    return random_rotation(spec.dim, rng);
}

inline Eigen::VectorXd synth_mean(const SynthSpec& spec, std::uint32_t cls) {
    KeyedRng rng(spec.seed, {stream::synth, cls, 0});
    std::normal_distribution<double> g(0.0, spec.mean_scale);
    Eigen::VectorXd mu(spec.dim);
    for (Eigen::Index j = 0; j < mu.size(); ++j) mu[j] = g(rng);
    return mu;
}

inline SynthData synth_dataset(const SynthSpec& spec) {
    spec.validate();
    ClassVocabulary vocab([&] {
        std::vector<std::string> names;
        for (std::size_t c = 0; c < spec.num_classes; ++c) names.push_back("class" + std::to_string(c));
        return names;
    }());
    const auto lambda = spec.padded_spectrum();
    Eigen::VectorXd scale(spec.dim);
    for (std::size_t j = 0; j < spec.dim; ++j) scale[static_cast<Eigen::Index>(j)] = std::sqrt(lambda[j]);

    std::vector<std::uint32_t> pool_labels, test_labels;
    std::vector<float> pool_values, test_values;
    for (std::uint32_t c = 0; c < spec.num_classes; ++c) {
        const Eigen::VectorXd mu = synth_mean(spec, c);
        const Eigen::MatrixXd q = synth_rotation(spec, c);
        KeyedRng rng(spec.seed, {stream::synth, c, 2});
        std::normal_distribution<double> g(0.0, 1.0);
        Eigen::VectorXd z(spec.dim);
        auto draw = [&](std::vector<std::uint32_t>& labels, std::vector<float>& values) {
            for (Eigen::Index j = 0; j < z.size(); ++j) z[j] = g(rng);
            const Eigen::VectorXd x = mu + q * scale.cwiseProduct(z);
            labels.push_back(c);
            for (Eigen::Index j = 0; j < x.size(); ++j) values.push_back(static_cast<float>(x[j]));
        };
        for (std::size_t i = 0; i < spec.train_per_class; ++i) draw(pool_labels, pool_values);
        for (std::size_t i = 0; i < spec.test_per_class; ++i) draw(test_labels, test_values);
    }
    return SynthData{LabeledEmbeddingSet(spec.dim, vocab, std::move(pool_labels), std::move(pool_values)),
                     LabeledEmbeddingSet(spec.dim, vocab, std::move(test_labels), std::move(test_values))};
}

// ---------------------------------------------------------------------------
// Benchmark
// ---------------------------------------------------------------------------

enum class MethodKind { none, reprint, baseline };

/// A named augmenter configuration; `label` is what appears in reports.
struct MethodSpec {
    std::string label;
    MethodKind kind = MethodKind::none;
    ReprintConfig reprint{};
    BaselineConfig baseline{};

    static MethodSpec none() { return MethodSpec{"none", MethodKind::none, {}, {}}; }
    static MethodSpec reprint_with(std::string label, ReprintConfig cfg) {
        return MethodSpec{std::move(label), MethodKind::reprint, std::move(cfg), {}};
    }
    static MethodSpec baseline_with(BaselineConfig cfg) {
        return MethodSpec{std::string(to_string(cfg.method)), MethodKind::baseline, {}, cfg};
    }
};

/// "none", "reprint" (default subspace config) or a baseline name.
inline MethodSpec parse_method(std::string_view name) {
    if (name == "none") return MethodSpec::none();
    if (name == "reprint") return MethodSpec::reprint_with("reprint", ReprintConfig{});
    if (auto b = parse_baseline(name)) {
        BaselineConfig cfg;
        cfg.method = *b;
        return MethodSpec::baseline_with(cfg);
    }
    throw ConfigError("unknown method '" + std::string(name) + "'");
}

/// Augmented examples produced by a method for a training set (originals excluded).
inline SoftLabeledSet augment_with(const MethodSpec& method, const LabeledEmbeddingSet& train, std::uint64_t seed,
                                   std::size_t workers = 1) {
    switch (method.kind) {
    case MethodKind::none:
        return SoftLabeledSet(train.dim(), train.vocab(), {}, {});
    case MethodKind::reprint: {
        auto cfg = method.reprint;
        cfg.seed = seed;
        return augment_dataset(train, cfg, workers);
    }
    case MethodKind::baseline: {
        auto cfg = method.baseline;
        cfg.seed = seed;
        return run_baseline(train, cfg).examples;
    }
    }
    throw ConfigError("unknown method kind");
}

struct ExperimentRow {
    std::string dataset;
    std::string method;
    std::size_t n_small = 0;
    std::uint64_t seed = 0;
    std::optional<double> accuracy;  // empty when the cell failed
    std::string error;
};

struct ExperimentAggregate {
    std::string dataset;
    std::string method;
    std::size_t n_small = 0;
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation; NaN with fewer than 2 seeds
    std::size_t count = 0;
};

struct ExperimentReport {
    std::vector<ExperimentRow> rows;
    std::vector<ExperimentAggregate> aggregates;

    const ExperimentAggregate* find(std::string_view method, std::size_t n_small) const {
        for (const auto& a : aggregates) {
            if (a.method == method && a.n_small == n_small) return &a;
        }
        return nullptr;
    }
};

inline std::vector<ExperimentAggregate> aggregate(const std::vector<ExperimentRow>& rows) {
    std::vector<ExperimentAggregate> out;
    std::map<std::pair<std::string, std::size_t>, std::size_t> slot;
    std::vector<std::vector<double>> values;
    for (const auto& r : rows) {
        auto key = std::make_pair(r.method, r.n_small);
        auto it = slot.find(key);
        if (it == slot.end()) {
            it = slot.emplace(key, out.size()).first;
            out.push_back(ExperimentAggregate{r.dataset, r.method, r.n_small, 0.0, 0.0, 0});
            values.emplace_back();
        }
        if (r.accuracy) values[it->second].push_back(*r.accuracy);
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto& v = values[i];
        out[i].count = v.size();
        if (v.empty()) {
            out[i].mean = std::nan("");
            out[i].std = std::nan("");
            continue;
        }
        double sum = 0.0;
        for (double x : v) sum += x;
        out[i].mean = sum / static_cast<double>(v.size());
        if (v.size() < 2) {
            out[i].std = std::nan("");
            continue;
        }
        double ss = 0.0;
        for (double x : v) ss += (x - out[i].mean) * (x - out[i].mean);
        out[i].std = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    return out;
}

struct BenchmarkOptions {
    std::string dataset = "synthetic";
    std::size_t n_large = 500;
    std::size_t workers = 1;
    std::optional<std::vector<std::uint32_t>> pinned_minority;
};

/// Trains and evaluates one model per (method, n_small, seed) on the union of
/// the scenario's originals and the method's augmented examples. Failed cells
/// are kept as rows with an error annotation. Row order is (method, n_small,
/// seed) in input order, independent of the worker count.
inline ExperimentReport run_benchmark(const LabeledEmbeddingSet& pool, const LabeledEmbeddingSet& test,
                                      const std::vector<MethodSpec>& methods,
                                      const std::vector<std::size_t>& n_small_values,
                                      const std::vector<std::uint64_t>& seeds, const MlpConfig& mlp,
                                      const BenchmarkOptions& options = {}) {
    if (pool.dim() != test.dim()) throw DimError("pool and test dimensions differ");
    if (!(pool.vocab() == test.vocab())) throw VocabError("pool and test vocabularies differ");
    ExperimentReport report;
    for (const auto& m : methods) {
        for (auto ns : n_small_values) {
            for (auto s : seeds) report.rows.push_back(ExperimentRow{options.dataset, m.label, ns, s, std::nullopt, {}});
        }
    }
    const std::size_t per_method = n_small_values.size() * seeds.size();
    parallel_for(report.rows.size(), options.workers, [&](std::size_t cell) {
        auto& row = report.rows[cell];
        const auto& method = methods[cell / per_method];
        try {
            const auto scenario = make_scenario(pool, row.n_small, options.n_large, row.seed, options.pinned_minority);
            const auto augmented = augment_with(method, scenario.train, row.seed);
            auto cfg = mlp;
            cfg.seed = row.seed;
            const auto model = train(concat(to_soft(scenario.train), augmented), cfg);
            row.accuracy = evaluate(model, test);
        } catch (const Error& e) {
            row.error = e.kind() + ": " + e.what();
        } catch (const std::exception& e) {
            row.error = std::string("Error: ") + e.what();
        }
    });
    report.aggregates = aggregate(report.rows);
    return report;
}

/// Shortest decimal text that reads back to the same double.
inline std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline void write_rows_csv(std::ostream& os, const ExperimentReport& report) {
    os << "dataset,method,n_small,seed,accuracy\n";
    for (const auto& r : report.rows) {
        os << r.dataset << ',' << r.method << ',' << r.n_small << ',' << r.seed << ','
           << (r.accuracy ? format_number(*r.accuracy) : "NA") << '\n';
    }
}

inline void write_summary_csv(std::ostream& os, const ExperimentReport& report) {
    os << "dataset,method,n_small,mean,std\n";
    for (const auto& a : report.aggregates) {
        os << a.dataset << ',' << a.method << ',' << a.n_small << ',' << format_number(a.mean) << ','
           << format_number(a.std) << '\n';
    }
}

inline void write_errors_csv(std::ostream& os, const ExperimentReport& report) {
    os << "dataset,method,n_small,seed,error\n";
    for (const auto& r : report.rows) {
        if (r.accuracy) continue;
        std::string msg = r.error;
        std::replace(msg.begin(), msg.end(), ',', ';');
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        os << r.dataset << ',' << r.method << ',' << r.n_small << ',' << r.seed << ',' << msg << '\n';
    }
}

/// Human-readable table: one line per method, "mean ± std" in percent per n_small.
inline void print_table(std::ostream& os, const ExperimentReport& report) {
    std::vector<std::size_t> columns;
    std::vector<std::string> methods;
    for (const auto& a : report.aggregates) {
        if (std::find(columns.begin(), columns.end(), a.n_small) == columns.end()) columns.push_back(a.n_small);
        if (std::find(methods.begin(), methods.end(), a.method) == methods.end()) methods.push_back(a.method);
    }
    os << std::left << std::setw(20) << "method";
    for (auto c : columns) os << std::setw(18) << ("n_small=" + std::to_string(c));
    os << '\n';
    for (const auto& m : methods) {
        os << std::setw(20) << m;
        for (auto c : columns) {
            const auto* a = report.find(m, c);
            std::ostringstream cell;
            cell << std::fixed << std::setprecision(2);
            if (!a || a->count == 0) {
                cell << "error";
            } else {
                cell << 100.0 * a->mean;
                if (!std::isnan(a->std)) cell << " ± " << 100.0 * a->std;
            }
            os << std::setw(18) << cell.str();
        }
        os << '\n';
    }
}

// ---------------------------------------------------------------------------
// 2-D export
// ---------------------------------------------------------------------------

struct NamedVectors {
    std::string name;
    std::size_t dim = 0;
    std::vector<float> values;  // row-major
};

struct Point2d {
    std::string name;
    double x;
    double y;
};

/// Projects every vector onto the top two principal directions of the union
/// of all groups (centered by the union mean).
inline std::vector<Point2d> export_2d(const std::vector<NamedVectors>& groups) {
    if (groups.empty()) throw DegenerateVarianceError("nothing to export");
    const std::size_t d = groups.front().dim;
    std::size_t n = 0;
    for (const auto& g : groups) {
        if (g.dim != d) throw DimError("groups differ in dimension");
        if (g.values.size() % d != 0) throw DimError("group '" + g.name + "' is not a whole number of vectors");
        n += g.values.size() / d;
    }
    Eigen::MatrixXd x(n, d);
    Eigen::Index row = 0;
    for (const auto& g : groups) {
        for (std::size_t i = 0; i < g.values.size() / d; ++i, ++row) {
            for (std::size_t j = 0; j < d; ++j) x(row, static_cast<Eigen::Index>(j)) = g.values[i * d + j];
        }
    }
    const Eigen::RowVectorXd mean = x.colwise().mean();
    x.rowwise() -= mean;
    const auto pca = thin_pca(x);
    if (numerical_rank(pca.singular_values) < 2) {
        throw DegenerateVarianceError("data has fewer than 2 effective dimensions");
    }
    const Eigen::MatrixXd coords = x * pca.directions.leftCols(2);
    std::vector<Point2d> out;
    out.reserve(n);
    row = 0;
    for (const auto& g : groups) {
        for (std::size_t i = 0; i < g.values.size() / d; ++i, ++row) {
            out.push_back(Point2d{g.name, coords(row, 0), coords(row, 1)});
        }
    }
    return out;
}

inline void write_points_csv(std::ostream& os, const std::vector<Point2d>& points) {
    os << "name,x,y\n";
    for (const auto& p : points) os << p.name << ',' << format_number(p.x) << ',' << format_number(p.y) << '\n';
}

} // namespace reprint
