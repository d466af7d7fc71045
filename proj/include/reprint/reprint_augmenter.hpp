#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "reprint/class_geometry.hpp"
#include "reprint/embedding_store.hpp"
#include "reprint/errors.hpp"
#include "reprint/parallel.hpp"
#include "reprint/rng.hpp"

namespace reprint {

/// How the source/target mixing weight of an augmented label is computed.
enum class LabelStrategy {
    literal_determinant,  // det(W_s) / (det(W_s) + det(W_t)); zero for 1 <= h, q < d
    pseudo_determinant,   // product of non-zero eigenvalues; 1/2 for any two non-zero projectors
    trace_ratio,          // (d - h) / ((d - h) + q)
    residual_energy,      // |W_s x_s|^2 / (|W_s x_s|^2 + |W_t x_t|^2)
    hard,                 // always the target one-hot label
};

inline std::string_view to_string(LabelStrategy s) {
    switch (s) {
    case LabelStrategy::literal_determinant: return "literal_determinant";
    case LabelStrategy::pseudo_determinant: return "pseudo_determinant";
    case LabelStrategy::trace_ratio: return "trace_ratio";
    case LabelStrategy::residual_energy: return "residual_energy";
    case LabelStrategy::hard: return "hard";
    }
    return "?";
}

inline LabelStrategy parse_label_strategy(std::string_view s) {
    for (auto v : {LabelStrategy::literal_determinant, LabelStrategy::pseudo_determinant, LabelStrategy::trace_ratio,
                   LabelStrategy::residual_energy, LabelStrategy::hard}) {
        if (s == to_string(v)) return v;
    }
    throw ConfigError("unknown label strategy '" + std::string(s) + "'");
}

struct ReprintConfig {
    RankPolicy source_policy = RankPolicy::fixed(5);
    RankPolicy target_policy = RankPolicy::fixed(5);
    LabelStrategy label_strategy = LabelStrategy::residual_energy;
    double positivity_epsilon = 0.0;
    std::uint64_t seed = 0;
};

/// One synthesized example with its provenance.
struct AugmentedExample {
    std::vector<float> vector;
    std::vector<float> soft_label;
    std::uint32_t source_class = 0;
    std::uint32_t target_class = 0;
    std::size_t source_index = 0;     // record index of the source example
    std::size_t candidate_index = 0;  // record index of the sampled target example
};

struct Candidate {
    std::size_t position;     // J, position within the target class
    std::size_t record;       // record index in the set
    Eigen::VectorXd centered; // X_J - mu_t
};

/// Draws J uniformly from the target class and returns its centered vector.
template <class Rng>
Candidate sample_candidate(const ClassGeometry& target, const LabeledEmbeddingSet& set,
                           std::span<const std::size_t> target_members, Rng& rng) {
    if (target_members.empty()) throw EmptyClassError("cannot sample a candidate from an empty target class");
    std::uniform_int_distribution<std::size_t> pick(0, target_members.size() - 1);
    const std::size_t j = pick(rng);
    const std::size_t rec = target_members[j];
    return Candidate{j, rec, center(target, set.row(rec))};
}

/// Residual of the centered source example w.r.t. the source subspace, plus
/// the candidate's projection onto the target subspace, plus the target mean.
inline Eigen::VectorXd extrapolate(const ClassGeometry& source, const ClassGeometry& target,
                                   std::span<const float> x_source, const Eigen::VectorXd& candidate) {
    check_dim(target, candidate.size());
    if (source.dim() != target.dim()) throw DimError("source and target geometries differ in dimension");
    const Eigen::VectorXd res = residual(source, center(source, x_source));
    const Eigen::VectorXd proj = project(target, candidate);
    Eigen::VectorXd out(res.size());
    for (Eigen::Index j = 0; j < out.size(); ++j) out[j] = (res[j] + proj[j]) + target.mean()[j];
    return out;
}

/// det(A A^t) for a d x r orthonormal A: the projector has r unit and d - r
/// zero eigenvalues.
inline double projector_determinant(std::size_t rank, std::size_t dim) { return rank == dim ? 1.0 : 0.0; }

/// det(I - A A^t).
inline double complement_determinant(std::size_t rank) { return rank == 0 ? 1.0 : 0.0; }

/// Product of the non-zero eigenvalues of a projector; 0 for the zero matrix.
inline double projector_pseudo_determinant(std::size_t rank) { return rank > 0 ? 1.0 : 0.0; }

/// Weight of the source label, or nullopt when the target hard label applies.
inline std::optional<double> label_weight(const ClassGeometry& source, const ClassGeometry& target,
                                          const Eigen::VectorXd& source_centered,
                                          const Eigen::VectorXd& candidate_centered, LabelStrategy strategy,
                                          double epsilon) {
    if (strategy == LabelStrategy::hard) return std::nullopt;
    const Eigen::VectorXd ws = residual(source, source_centered);
    const Eigen::VectorXd wt = project(target, candidate_centered);
    const double source_form = source_centered.dot(ws);
    const double target_form = candidate_centered.dot(wt);
    if (!(source_form > epsilon && target_form > epsilon)) return std::nullopt;

    const std::size_t d = source.dim();
    const std::size_t h = source.rank();
    const std::size_t q = target.rank();
    double num = 0.0;
    double den = 0.0;
    switch (strategy) {
    case LabelStrategy::literal_determinant:
        num = complement_determinant(h);
        den = num + projector_determinant(q, d);
        break;
    case LabelStrategy::pseudo_determinant:
        num = projector_pseudo_determinant(d - h);
        den = num + projector_pseudo_determinant(q);
        break;
    case LabelStrategy::trace_ratio:
        num = static_cast<double>(d - h);
        den = num + static_cast<double>(q);
        break;
    case LabelStrategy::residual_energy: {
        num = ws.squaredNorm();
        den = num + wt.squaredNorm();
        break;
    }
    case LabelStrategy::hard: break;
    }
    if (!(den > 0.0)) return std::nullopt;
    return std::clamp(num / den, 0.0, 1.0);
}

/// Soft label lambda * onehot(source) + (1 - lambda) * onehot(target), or the
/// target one-hot when the positivity condition fails.
inline std::vector<double> refine_label(const ClassGeometry& source, const ClassGeometry& target,
                                        const Eigen::VectorXd& source_centered,
                                        const Eigen::VectorXd& candidate_centered, LabelStrategy strategy,
                                        double epsilon, std::size_t num_classes) {
    std::vector<double> y(num_classes, 0.0);
    const auto lambda = label_weight(source, target, source_centered, candidate_centered, strategy, epsilon);
    if (!lambda) {
        y.at(target.class_id()) = 1.0;
        return y;
    }
    y.at(source.class_id()) += *lambda;
    y.at(target.class_id()) += 1.0 - *lambda;
    return y;
}

/// All ordered class pairs (source != target), ascending.
inline std::vector<std::pair<std::uint32_t, std::uint32_t>> class_pairs(std::size_t num_classes) {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
    for (std::uint32_t s = 0; s < num_classes; ++s) {
        for (std::uint32_t t = 0; t < num_classes; ++t) {
            if (s != t) pairs.emplace_back(s, t);
        }
    }
    return pairs;
}

inline void require_nonempty_classes(const LabeledEmbeddingSet& set) {
    const auto counts = set.class_counts();
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] == 0) throw EmptyClassError("class '" + set.vocab().name(c) + "' has no examples");
    }
}

/// One augmented example for every ordered class pair and every source
/// example, in ascending (source, target) then record order. Each example
/// draws its candidate from a stream keyed by (seed, source, target, record),
/// so the result does not depend on `workers`.
inline std::vector<AugmentedExample> reprint_examples(const LabeledEmbeddingSet& set, const ReprintConfig& config,
                                                      std::size_t workers = 1) {
    require_nonempty_classes(set);
    const std::size_t k = set.num_classes();
    std::vector<ClassGeometry> sources;
    std::vector<ClassGeometry> targets;
    std::vector<std::vector<std::size_t>> members(k);
    for (std::uint32_t c = 0; c < k; ++c) {
        sources.push_back(fit_class_geometry(set, c, config.source_policy));
        targets.push_back(fit_class_geometry(set, c, config.target_policy));
        members[c] = set.members(c);
    }

    const auto pairs = class_pairs(k);
    std::vector<std::vector<AugmentedExample>> blocks(pairs.size());
    parallel_for(pairs.size(), workers, [&](std::size_t p) {
        const auto [s, t] = pairs[p];
        const auto& src = sources[s];
        const auto& tgt = targets[t];
        auto& block = blocks[p];
        block.reserve(members[s].size());
        for (auto i : members[s]) {
            KeyedRng rng(config.seed, {stream::reprint, s, t, i});
            const auto cand = sample_candidate(tgt, set, members[t], rng);
            const auto x = set.row(i);
            const Eigen::VectorXd xs = center(src, x);
            const Eigen::VectorXd v = extrapolate(src, tgt, x, cand.centered);
            const auto y = refine_label(src, tgt, xs, cand.centered, config.label_strategy,
                                        config.positivity_epsilon, k);
            AugmentedExample ex;
            ex.vector.resize(static_cast<std::size_t>(v.size()));
            for (Eigen::Index j = 0; j < v.size(); ++j) ex.vector[static_cast<std::size_t>(j)] = static_cast<float>(v[j]);
            ex.soft_label.assign(y.begin(), y.end());
            ex.source_class = s;
            ex.target_class = t;
            ex.source_index = i;
            ex.candidate_index = cand.record;
            block.push_back(std::move(ex));
        }
    });

    std::vector<AugmentedExample> out;
    for (auto& b : blocks) {
        for (auto& e : b) out.push_back(std::move(e));
    }
    return out;
}

inline SoftLabeledSet to_soft_set(const std::vector<AugmentedExample>& examples, std::size_t dim,
                                  const ClassVocabulary& vocab) {
    std::vector<float> y;
    std::vector<float> v;
    y.reserve(examples.size() * vocab.size());
    v.reserve(examples.size() * dim);
    for (const auto& e : examples) {
        y.insert(y.end(), e.soft_label.begin(), e.soft_label.end());
        v.insert(v.end(), e.vector.begin(), e.vector.end());
    }
    return SoftLabeledSet(dim, vocab, std::move(y), std::move(v));
}

/// Augmented examples only (originals are not included).
inline SoftLabeledSet augment_dataset(const LabeledEmbeddingSet& set, const ReprintConfig& config,
                                      std::size_t workers = 1) {
    return to_soft_set(reprint_examples(set, config, workers), set.dim(), set.vocab());
}

} // namespace reprint
