#pragma once

#include <cmath>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "reprint/embedding_store.hpp"
#include "reprint/errors.hpp"

namespace reprint {

/// How many principal components to keep for a class subspace.
class RankPolicy {
public:
    enum class Kind { fixed_rank, explained_variance };

    static RankPolicy fixed(std::size_t rank) { return RankPolicy(Kind::fixed_rank, rank, 1.0); }

    /// Smallest rank whose cumulative explained-variance ratio reaches `threshold`.
    static RankPolicy explained_variance(double threshold) {
        if (!(threshold > 0.0 && threshold <= 1.0)) {
            throw ConfigError("explained-variance threshold must lie in (0,1], got " + std::to_string(threshold));
        }
        return RankPolicy(Kind::explained_variance, 0, threshold);
    }

    Kind kind() const noexcept { return kind_; }
    std::size_t rank() const noexcept { return rank_; }
    double threshold() const noexcept { return threshold_; }

    std::string describe() const {
        return kind_ == Kind::fixed_rank ? "rank=" + std::to_string(rank_) : "evr=" + std::to_string(threshold_);
    }

private:
    RankPolicy(Kind kind, std::size_t rank, double threshold) : kind_(kind), rank_(rank), threshold_(threshold) {}

    Kind kind_;
    std::size_t rank_;
    double threshold_;
};

/// Singular values below this fraction of the largest are treated as zero.
inline constexpr double kNumericalRankTolerance = 1e-7;

/// Slack on the cumulative ratio comparison, so that a spectrum whose ratio is
/// exactly the threshold in real arithmetic is not rejected by rounding.
inline constexpr double kCumulativeRatioSlack = 1e-9;

/// Per-class statistics: mean, the top-h principal directions of the
/// centered class data and the full singular-value spectrum.
class ClassGeometry {
public:
    /// `components` is d x h with orthonormal columns; `singular_values` is the
    /// full thin-SVD spectrum of the centered data (length >= h, non-increasing).
    ClassGeometry(std::uint32_t class_id, Eigen::VectorXd mean, Eigen::MatrixXd components,
                  Eigen::VectorXd singular_values, std::size_t sample_count, double sum_squares)
        : class_id_(class_id), mean_(std::move(mean)), components_(std::move(components)),
          singular_values_(std::move(singular_values)), sample_count_(sample_count), sum_squares_(sum_squares) {
        if (components_.rows() != mean_.size()) throw DimError("component rows differ from mean dimension");
        if (singular_values_.size() < components_.cols()) throw DimError("fewer singular values than components");
    }

    std::uint32_t class_id() const noexcept { return class_id_; }
    std::size_t dim() const noexcept { return static_cast<std::size_t>(mean_.size()); }
    std::size_t rank() const noexcept { return static_cast<std::size_t>(components_.cols()); }
    std::size_t sample_count() const noexcept { return sample_count_; }

    const Eigen::VectorXd& mean() const noexcept { return mean_; }
    const Eigen::MatrixXd& components() const noexcept { return components_; }
    const Eigen::VectorXd& singular_values() const noexcept { return singular_values_; }

    /// Squared Frobenius norm of the centered class data.
    double sum_squares() const noexcept { return sum_squares_; }

    /// Sum of per-coordinate variances, normalized by n_c - 1.
    double total_variance() const noexcept {
        return sample_count_ > 1 ? sum_squares_ / static_cast<double>(sample_count_ - 1) : 0.0;
    }

private:
    std::uint32_t class_id_;
    Eigen::VectorXd mean_;
    Eigen::MatrixXd components_;
    Eigen::VectorXd singular_values_;
    std::size_t sample_count_;
    double sum_squares_;
};

/// Arithmetic mean of the given records, accumulated in 64-bit in record order.
inline Eigen::VectorXd class_mean(const LabeledEmbeddingSet& set, std::span<const std::size_t> members) {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(set.dim()));
    for (auto i : members) {
        auto r = set.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) sum[static_cast<Eigen::Index>(j)] += r[j];
    }
    return sum / static_cast<double>(members.size());
}

/// Flips each column so that its largest-magnitude entry is positive
/// (first such entry on ties).
inline void normalize_signs(Eigen::MatrixXd& columns) {
    for (Eigen::Index c = 0; c < columns.cols(); ++c) {
        Eigen::Index best = 0;
        for (Eigen::Index r = 1; r < columns.rows(); ++r) {
            if (std::abs(columns(r, c)) > std::abs(columns(best, c))) best = r;
        }
        if (columns(best, c) < 0.0) columns.col(c) *= -1.0;
    }
}

struct ThinPca {
    Eigen::VectorXd singular_values;  // min(n, d), non-increasing
    Eigen::MatrixXd directions;       // d x min(n, d), sign-normalized
};

/// Thin SVD of an already-centered n x d data matrix.
inline ThinPca thin_pca(const Eigen::MatrixXd& centered) {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
    ThinPca out{svd.singularValues(), svd.matrixV()};
    normalize_signs(out.directions);
    return out;
}

/// Number of singular values that are numerically non-zero.
inline std::size_t numerical_rank(const Eigen::VectorXd& singular_values) {
    if (singular_values.size() == 0 || singular_values[0] <= 0.0) return 0;
    const double cutoff = kNumericalRankTolerance * singular_values[0];
    std::size_t r = 0;
    while (r < static_cast<std::size_t>(singular_values.size()) && singular_values[static_cast<Eigen::Index>(r)] >= cutoff) ++r;
    return r;
}

/// Rank chosen by `policy` for a spectrum, clamped to its numerical rank.
inline std::size_t select_rank(const Eigen::VectorXd& singular_values, double sum_squares, const RankPolicy& policy) {
    const std::size_t r = numerical_rank(singular_values);
    if (policy.kind() == RankPolicy::Kind::fixed_rank) return std::min(policy.rank(), r);
    if (sum_squares <= 0.0) return 0;
    double cumulative = 0.0;
    for (std::size_t h = 0; h < r; ++h) {
        const double s = singular_values[static_cast<Eigen::Index>(h)];
        cumulative += s * s / sum_squares;
        if (cumulative >= policy.threshold() - kCumulativeRatioSlack) return h + 1;
    }
    return r;
}

inline ClassGeometry fit_class_geometry(const LabeledEmbeddingSet& set, std::uint32_t class_id,
                                        const RankPolicy& policy) {
    if (class_id >= set.num_classes()) throw EmptyClassError("class id " + std::to_string(class_id) + " out of range");
    const auto members = set.members(class_id);
    if (members.empty()) {
        throw EmptyClassError("class '" + set.vocab().name(class_id) + "' has no examples");
    }
    const auto d = static_cast<Eigen::Index>(set.dim());
    const auto n = static_cast<Eigen::Index>(members.size());
    Eigen::VectorXd mean = class_mean(set, members);

    Eigen::MatrixXd centered(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        auto r = set.row(members[static_cast<std::size_t>(i)]);
        for (Eigen::Index j = 0; j < d; ++j) centered(i, j) = static_cast<double>(r[static_cast<std::size_t>(j)]) - mean[j];
    }
    const double ss = centered.squaredNorm();
    auto pca = thin_pca(centered);
    const auto h = static_cast<Eigen::Index>(select_rank(pca.singular_values, ss, policy));
    return ClassGeometry(class_id, std::move(mean), pca.directions.leftCols(h), std::move(pca.singular_values),
                         members.size(), ss);
}

/// Geometries of every class, indexed by class id.
inline std::vector<ClassGeometry> fit_all_classes(const LabeledEmbeddingSet& set, const RankPolicy& policy) {
    std::vector<ClassGeometry> out;
    out.reserve(set.num_classes());
    for (std::uint32_t c = 0; c < set.num_classes(); ++c) out.push_back(fit_class_geometry(set, c, policy));
    return out;
}

inline void check_dim(const ClassGeometry& g, Eigen::Index size) {
    if (size != static_cast<Eigen::Index>(g.dim())) {
        throw DimError("vector of dimension " + std::to_string(size) + " used with a geometry of dimension " +
                       std::to_string(g.dim()));
    }
}

/// x - mean.
inline Eigen::VectorXd center(const ClassGeometry& g, const Eigen::VectorXd& x) {
    check_dim(g, x.size());
    return x - g.mean();
}

inline Eigen::VectorXd center(const ClassGeometry& g, std::span<const float> x) {
    check_dim(g, static_cast<Eigen::Index>(x.size()));
    Eigen::VectorXd out(g.dim());
    for (std::size_t j = 0; j < x.size(); ++j) {
        out[static_cast<Eigen::Index>(j)] = static_cast<double>(x[j]) - g.mean()[static_cast<Eigen::Index>(j)];
    }
    return out;
}

/// Orthogonal projection A (A^t x) onto the class subspace.
inline Eigen::VectorXd project(const ClassGeometry& g, const Eigen::VectorXd& centered) {
    check_dim(g, centered.size());
    if (g.rank() == 0) return Eigen::VectorXd::Zero(centered.size());
    if (g.rank() == g.dim()) return centered;  // A A^t = I exactly
    const Eigen::VectorXd coords = g.components().transpose() * centered;
    return g.components() * coords;
}

inline Eigen::VectorXd residual(const ClassGeometry& g, const Eigen::VectorXd& centered) {
    return centered - project(g, centered);
}

/// Share of total variance carried by each singular direction, for the full
/// computed spectrum (the first rank() entries belong to the kept components).
inline std::vector<double> explained_variance_ratios(const ClassGeometry& g) {
    if (!(g.sum_squares() > 0.0)) {
        throw DegenerateVarianceError("class " + std::to_string(g.class_id()) + " has zero variance");
    }
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(g.singular_values().size()));
    for (Eigen::Index i = 0; i < g.singular_values().size(); ++i) {
        const double s = g.singular_values()[i];
        out.push_back(s * s / g.sum_squares());
    }
    return out;
}

/// CSV dump used by `pca-info`:
/// class,name,n,rank,total_variance,component,singular_value,ratio,cumulative
inline void write_geometry_csv(std::ostream& os, const std::vector<ClassGeometry>& geometries,
                               const ClassVocabulary& vocab) {
    os << "class,name,n,rank,total_variance,component,singular_value,ratio,cumulative\n";
    os.precision(10);
    for (const auto& g : geometries) {
        std::vector<double> ratios;
        if (g.sum_squares() > 0.0) ratios = explained_variance_ratios(g);
        double cumulative = 0.0;
        for (std::size_t i = 0; i < ratios.size(); ++i) {
            cumulative += ratios[i];
            os << g.class_id() << ',' << vocab.name(g.class_id()) << ',' << g.sample_count() << ',' << g.rank()
               << ',' << g.total_variance() << ',' << i + 1 << ',' << g.singular_values()[static_cast<Eigen::Index>(i)]
               << ',' << ratios[i] << ',' << cumulative << '\n';
        }
    }
}

/// CSV of class means: class,name,coordinate,mean
inline void write_means_csv(std::ostream& os, const std::vector<ClassGeometry>& geometries,
                            const ClassVocabulary& vocab) {
    os << "class,name,coordinate,mean\n";
    os.precision(10);
    for (const auto& g : geometries) {
        for (Eigen::Index j = 0; j < g.mean().size(); ++j) {
            os << g.class_id() << ',' << vocab.name(g.class_id()) << ',' << j << ',' << g.mean()[j] << '\n';
        }
    }
}

} // namespace reprint
