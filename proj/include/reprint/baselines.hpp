#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <queue>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "reprint/class_geometry.hpp"
#include "reprint/embedding_store.hpp"
#include "reprint/errors.hpp"
#include "reprint/reprint_augmenter.hpp"
#include "reprint/rng.hpp"

namespace reprint {

enum class BaselineMethod { upsample, noise, smote, mixup, we, ld, ge3 };

inline std::string_view to_string(BaselineMethod m) {
    switch (m) {
    case BaselineMethod::upsample: return "upsample";
    case BaselineMethod::noise: return "noise";
    case BaselineMethod::smote: return "smote";
    case BaselineMethod::mixup: return "mixup";
    case BaselineMethod::we: return "we";
    case BaselineMethod::ld: return "ld";
    case BaselineMethod::ge3: return "ge3";
    }
    return "?";
}

inline std::optional<BaselineMethod> parse_baseline(std::string_view s) {
    for (auto m : {BaselineMethod::upsample, BaselineMethod::noise, BaselineMethod::smote, BaselineMethod::mixup,
                   BaselineMethod::we, BaselineMethod::ld, BaselineMethod::ge3}) {
        if (s == to_string(m)) return m;
    }
    return std::nullopt;
}

struct BaselineConfig {
    BaselineMethod method = BaselineMethod::upsample;
    double noise_sigma = 0.1;   // standard deviation
    std::size_t smote_k = 5;
    double mixup_alpha = 0.75;
    double we_lambda = 0.5;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(noise_sigma >= 0.0)) throw ConfigError("noise sigma must be non-negative");
        if (smote_k < 1) throw ConfigError("smote k must be at least 1");
        if (!(mixup_alpha > 0.0)) throw ConfigError("mixup alpha must be positive");
    }
};

struct BaselineOutput {
    SoftLabeledSet examples;
    std::vector<std::string> warnings;
};

namespace detail {

/// Accumulates generated examples as (vector, soft label) rows.
class SoftSetBuilder {
public:
    SoftSetBuilder(std::size_t dim, std::size_t k) : dim_(dim), k_(k) {}

    void add(std::span<const double> v, std::span<const double> y) {
        for (double x : v) values_.push_back(static_cast<float>(x));
        for (double x : y) labels_.push_back(static_cast<float>(x));
    }

    void add_hard(std::span<const double> v, std::size_t label) {
        std::vector<double> y(k_, 0.0);
        y[label] = 1.0;
        add(v, y);
    }

    void add_hard(std::span<const float> v, std::size_t label) {
        values_.insert(values_.end(), v.begin(), v.end());
        for (std::size_t c = 0; c < k_; ++c) labels_.push_back(c == label ? 1.0f : 0.0f);
    }

    SoftLabeledSet build(const ClassVocabulary& vocab) && {
        return SoftLabeledSet(dim_, vocab, std::move(labels_), std::move(values_));
    }

private:
    std::size_t dim_;
    std::size_t k_;
    std::vector<float> labels_;
    std::vector<float> values_;
};

inline std::vector<double> to_double(std::span<const float> x) { return {x.begin(), x.end()}; }

} // namespace detail

/// Number of examples each class is short of the largest class.
inline std::vector<std::size_t> balance_deficits(const LabeledEmbeddingSet& set) {
    auto counts = set.class_counts();
    const std::size_t top = counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end());
    for (auto& c : counts) c = top - c;
    return counts;
}

/// `count` base examples drawn round-robin over successive seeded
/// permutations of the class members, so every member is used
/// floor(count / n) or ceil(count / n) times. The sequence does not depend on
/// the method, so all balancing baselines start from the same bases.
inline std::vector<std::size_t> base_sequence(std::span<const std::size_t> members, std::size_t count,
                                              std::uint64_t seed, std::uint32_t cls) {
    std::vector<std::size_t> out;
    out.reserve(count);
    std::vector<std::size_t> perm(members.begin(), members.end());
    for (std::uint64_t pass = 0; out.size() < count; ++pass) {
        KeyedRng rng(seed, {stream::baseline, cls, pass, 0xBA5E});
        std::shuffle(perm.begin(), perm.end(), rng);
        for (std::size_t j = 0; j < perm.size() && out.size() < count; ++j) out.push_back(perm[j]);
    }
    return out;
}

/// Indices of the k nearest same-class neighbors (Euclidean) of record
/// `query`, excluding the query itself, ordered by (distance, record index).
inline std::vector<std::size_t> nearest_neighbors(const LabeledEmbeddingSet& set, std::span<const std::size_t> members,
                                                  std::size_t query, std::size_t k) {
    using Entry = std::pair<double, std::size_t>;
    std::priority_queue<Entry> heap;  // max-heap of the best k so far
    const auto q = set.row(query);
    for (auto m : members) {
        if (m == query) continue;
        const auto r = set.row(m);
        double dist = 0.0;
        for (std::size_t j = 0; j < q.size(); ++j) {
            const double diff = static_cast<double>(r[j]) - static_cast<double>(q[j]);
            dist += diff * diff;
        }
        Entry e{dist, m};
        if (heap.size() < k) {
            heap.push(e);
        } else if (k > 0 && e < heap.top()) {
            heap.pop();
            heap.push(e);
        }
    }
    std::vector<std::size_t> out(heap.size());
    for (std::size_t i = out.size(); i-- > 0;) {
        out[i] = heap.top().second;
        heap.pop();
    }
    return out;
}

namespace detail {

inline KeyedRng example_rng(const BaselineConfig& cfg, std::uint32_t cls, std::size_t t) {
    return KeyedRng(cfg.seed, {stream::baseline, static_cast<std::uint64_t>(cfg.method), cls, t});
}

/// Shared driver of the balancing baselines: for every class short of the
/// majority count, calls make(cls, members, base_record, t, rng, builder)
/// once per missing example.
template <class Make>
BaselineOutput balance_with(const LabeledEmbeddingSet& set, const BaselineConfig& cfg, Make&& make) {
    cfg.validate();
    const auto deficits = balance_deficits(set);
    SoftSetBuilder builder(set.dim(), set.num_classes());
    std::vector<std::string> warnings;
    for (std::uint32_t c = 0; c < set.num_classes(); ++c) {
        if (deficits[c] == 0) continue;
        const auto members = set.members(c);
        if (members.empty()) {
            throw EmptyClassError("class '" + set.vocab().name(c) + "' has no examples to balance from");
        }
        const auto bases = base_sequence(members, deficits[c], cfg.seed, c);
        for (std::size_t t = 0; t < bases.size(); ++t) {
            auto rng = example_rng(cfg, c, t);
            make(c, members, bases[t], t, rng, builder, warnings);
        }
    }
    return BaselineOutput{std::move(builder).build(set.vocab()), std::move(warnings)};
}

inline std::size_t pick_other(std::span<const std::size_t> members, std::size_t exclude, KeyedRng& rng) {
    std::uniform_int_distribution<std::size_t> pick(0, members.size() - 2);
    std::size_t j = pick(rng);
    if (members[j] == exclude) j = members.size() - 1;
    return members[j];
}

} // namespace detail

/// Duplicates minority examples until every class reaches the majority count.
inline BaselineOutput upsample(const LabeledEmbeddingSet& set, BaselineConfig cfg) {
    cfg.method = BaselineMethod::upsample;
    return detail::balance_with(set, cfg, [&](std::uint32_t c, auto&, std::size_t base, std::size_t, auto&,
                                              auto& builder, auto&) { builder.add_hard(set.row(base), c); });
}

/// Minority duplicates plus i.i.d. N(0, sigma^2) per coordinate.
inline BaselineOutput gaussian_noise(const LabeledEmbeddingSet& set, BaselineConfig cfg) {
    cfg.method = BaselineMethod::noise;
    return detail::balance_with(set, cfg, [&](std::uint32_t c, auto&, std::size_t base, std::size_t, auto& rng,
                                              auto& builder, auto&) {
        std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
        auto v = detail::to_double(set.row(base));
        for (auto& x : v) x += noise(rng);
        builder.add_hard(std::span<const double>(v), c);
    });
}

/// Interpolation towards one of the k nearest same-class neighbors.
inline BaselineOutput smote(const LabeledEmbeddingSet& set, BaselineConfig cfg) {
    cfg.method = BaselineMethod::smote;
    std::map<std::size_t, std::vector<std::size_t>> neighbor_cache;
    std::vector<bool> warned(set.num_classes(), false);
    return detail::balance_with(set, cfg, [&](std::uint32_t c, const std::vector<std::size_t>& members,
                                              std::size_t base, std::size_t, auto& rng, auto& builder,
                                              auto& warnings) {
        if (members.size() < 2) {
            if (!warned[c]) {
                warnings.push_back("smote: class '" + set.vocab().name(c) + "' has one example; duplicating");
                warned[c] = true;
            }
            builder.add_hard(set.row(base), c);
            return;
        }
        auto it = neighbor_cache.find(base);
        if (it == neighbor_cache.end()) {
            const std::size_t k = std::min(cfg.smote_k, members.size() - 1);
            it = neighbor_cache.emplace(base, nearest_neighbors(set, members, base, k)).first;
        }
        const auto& nbrs = it->second;
        std::uniform_int_distribution<std::size_t> pick(0, nbrs.size() - 1);
        const std::size_t nb = nbrs[pick(rng)];
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        const double u = unit(rng);
        const auto x = set.row(base);
        const auto z = set.row(nb);
        std::vector<double> v(x.size());
        for (std::size_t j = 0; j < x.size(); ++j) {
            v[j] = static_cast<double>(x[j]) + u * (static_cast<double>(z[j]) - static_cast<double>(x[j]));
        }
        builder.add_hard(std::span<const double>(v), c);
    });
}

/// Beta(alpha, alpha) draw via two gamma variates.
template <class Rng>
double sample_beta(double alpha, Rng& rng) {
    std::gamma_distribution<double> g(alpha, 1.0);
    const double a = g(rng);
    const double b = g(rng);
    return (a + b) > 0.0 ? a / (a + b) : 0.5;
}

/// Hidden-space mixup of a minority example with an example of another class.
/// The mixing weight is folded to max(lambda, 1 - lambda) so the minority
/// example stays the dominant label.
inline BaselineOutput mixup_h(const LabeledEmbeddingSet& set, BaselineConfig cfg) {
    cfg.method = BaselineMethod::mixup;
    std::vector<std::vector<std::size_t>> outside(set.num_classes());
    for (std::uint32_t c = 0; c < set.num_classes(); ++c) {
        for (std::size_t i = 0; i < set.size(); ++i) {
            if (set.label(i) != c) outside[c].push_back(i);
        }
    }
    return detail::balance_with(set, cfg, [&](std::uint32_t c, auto&, std::size_t base, std::size_t, auto& rng,
                                              auto& builder, auto&) {
        const auto& others = outside[c];
        if (others.empty()) throw EmptyClassError("mixup needs examples outside class '" + set.vocab().name(c) + "'");
        std::uniform_int_distribution<std::size_t> pick(0, others.size() - 1);
        const std::size_t partner = others[pick(rng)];
        double lambda = sample_beta(cfg.mixup_alpha, rng);
        lambda = std::max(lambda, 1.0 - lambda);
        const auto x = set.row(base);
        const auto z = set.row(partner);
        std::vector<double> v(x.size());
        for (std::size_t j = 0; j < x.size(); ++j) {
            v[j] = lambda * static_cast<double>(x[j]) + (1.0 - lambda) * static_cast<double>(z[j]);
        }
        std::vector<double> y(set.num_classes(), 0.0);
        y[c] += lambda;
        y[set.label(partner)] += 1.0 - lambda;
        builder.add(v, y);
    });
}

/// Within-class extrapolation lambda (x_i - x_j) + x_i.
inline BaselineOutput within_extrapolate(const LabeledEmbeddingSet& set, BaselineConfig cfg) {
    cfg.method = BaselineMethod::we;
    std::vector<bool> warned(set.num_classes(), false);
    return detail::balance_with(set, cfg, [&](std::uint32_t c, const std::vector<std::size_t>& members,
                                              std::size_t base, std::size_t, auto& rng, auto& builder,
                                              auto& warnings) {
        if (members.size() < 2) {
            if (!warned[c]) {
                warnings.push_back("we: class '" + set.vocab().name(c) + "' has one example; duplicating");
                warned[c] = true;
            }
            builder.add_hard(set.row(base), c);
            return;
        }
        const auto xi = set.row(base);
        const auto xj = set.row(detail::pick_other(members, base, rng));
        std::vector<double> v(xi.size());
        for (std::size_t d = 0; d < xi.size(); ++d) {
            v[d] = cfg.we_lambda * (static_cast<double>(xi[d]) - static_cast<double>(xj[d])) + static_cast<double>(xi[d]);
        }
        builder.add_hard(std::span<const double>(v), c);
    });
}

/// Linear delta (x_i - x_j) + x_k over same-class triples; x_k is the
/// round-robin base, i and j are distinct from it and each other when the
/// class has at least three members.
inline BaselineOutput linear_delta(const LabeledEmbeddingSet& set, BaselineConfig cfg) {
    cfg.method = BaselineMethod::ld;
    std::vector<bool> warned(set.num_classes(), false);
    return detail::balance_with(set, cfg, [&](std::uint32_t c, const std::vector<std::size_t>& members,
                                              std::size_t base, std::size_t, auto& rng, auto& builder,
                                              auto& warnings) {
        std::size_t i = 0;
        std::size_t j = 0;
        if (members.size() >= 3) {
            std::vector<std::size_t> rest;
            rest.reserve(members.size() - 1);
            for (auto m : members) {
                if (m != base) rest.push_back(m);
            }
            std::uniform_int_distribution<std::size_t> pick_i(0, rest.size() - 1);
            const std::size_t a = pick_i(rng);
            std::uniform_int_distribution<std::size_t> pick_j(0, rest.size() - 2);
            std::size_t b = pick_j(rng);
            if (b >= a) ++b;
            i = rest[a];
            j = rest[b];
        } else {
            if (!warned[c]) {
                warnings.push_back("ld: class '" + set.vocab().name(c) + "' has fewer than 3 examples; sampling with replacement");
                warned[c] = true;
            }
            std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
            i = members[pick(rng)];
            j = members[pick(rng)];
        }
        const auto xi = set.row(i);
        const auto xj = set.row(j);
        const auto xk = set.row(base);
        std::vector<double> v(xi.size());
        for (std::size_t d = 0; d < xi.size(); ++d) {
            v[d] = (static_cast<double>(xi[d]) - static_cast<double>(xj[d])) + static_cast<double>(xk[d]);
        }
        builder.add_hard(std::span<const double>(v), c);
    });
}

/// Mean-shift extrapolation x - mu_s + mu_t for every ordered class pair,
/// in the same order as the subspace augmenter.
inline BaselineOutput ge3(const LabeledEmbeddingSet& set, const BaselineConfig& = {}) {
    require_nonempty_classes(set);
    const std::size_t k = set.num_classes();
    std::vector<std::vector<std::size_t>> members(k);
    std::vector<Eigen::VectorXd> means(k);
    for (std::uint32_t c = 0; c < k; ++c) {
        members[c] = set.members(c);
        means[c] = class_mean(set, members[c]);
    }
    detail::SoftSetBuilder builder(set.dim(), k);
    std::vector<double> v(set.dim());
    for (const auto& [s, t] : class_pairs(k)) {
        for (auto i : members[s]) {
            const auto x = set.row(i);
            for (std::size_t j = 0; j < v.size(); ++j) {
                const auto jj = static_cast<Eigen::Index>(j);
                v[j] = (static_cast<double>(x[j]) - means[s][jj]) + means[t][jj];
            }
            builder.add_hard(std::span<const double>(v), t);
        }
    }
    return BaselineOutput{std::move(builder).build(set.vocab()), {}};
}

inline BaselineOutput run_baseline(const LabeledEmbeddingSet& set, const BaselineConfig& cfg) {
    switch (cfg.method) {
    case BaselineMethod::upsample: return upsample(set, cfg);
    case BaselineMethod::noise: return gaussian_noise(set, cfg);
    case BaselineMethod::smote: return smote(set, cfg);
    case BaselineMethod::mixup: return mixup_h(set, cfg);
    case BaselineMethod::we: return within_extrapolate(set, cfg);
    case BaselineMethod::ld: return linear_delta(set, cfg);
    case BaselineMethod::ge3: return ge3(set, cfg);
    }
    throw ConfigError("unknown baseline");
}

} // namespace reprint
