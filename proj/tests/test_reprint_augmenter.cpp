#include <map>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "reprint/baselines.hpp"
#include "reprint/reprint_augmenter.hpp"
#include "temp_dir.hpp"

using namespace reprint;

namespace {

ClassGeometry axis_geometry(std::uint32_t id, Eigen::VectorXd mean, std::vector<Eigen::Index> axes) {
    const auto d = mean.size();
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(d, static_cast<Eigen::Index>(axes.size()));
    for (std::size_t k = 0; k < axes.size(); ++k) a(axes[k], static_cast<Eigen::Index>(k)) = 1.0;
    return ClassGeometry(id, std::move(mean), a, Eigen::VectorXd::Ones(d), 2, 1.0);
}

ReprintConfig ranks(std::size_t h, std::size_t q, LabelStrategy s = LabelStrategy::residual_energy) {
    ReprintConfig cfg;
    cfg.source_policy = RankPolicy::fixed(h);
    cfg.target_policy = RankPolicy::fixed(q);
    cfg.label_strategy = s;
    cfg.seed = 42;
    return cfg;
}

} // namespace

TEST(Extrapolate, AxisAlignedExample) {
    auto src = axis_geometry(0, Eigen::Vector2d(0, 0), {0});
    auto tgt = axis_geometry(1, Eigen::Vector2d(10, 10), {1});
    const std::vector<float> x{3, 4};
    const Eigen::VectorXd cand = Eigen::Vector2d(2, 7);
    EXPECT_EQ(extrapolate(src, tgt, x, cand), Eigen::Vector2d(10, 21));
}

TEST(Extrapolate, DimensionMismatch) {
    auto src = axis_geometry(0, Eigen::Vector2d(0, 0), {0});
    auto tgt = axis_geometry(1, Eigen::Vector3d(0, 0, 0), {1});
    const std::vector<float> x{3, 4};
    EXPECT_THROW(extrapolate(src, tgt, x, Eigen::Vector3d(1, 1, 1)), DimError);
}

TEST(Extrapolate, ZeroRankEqualsGe3Bitwise) {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 10; ++trial) {
        auto set = oracle::random_set(rng, 3 + trial, {4, 7, 2});
        auto ours = augment_dataset(set, ranks(0, 0));
        auto theirs = ge3(set).examples;
        EXPECT_EQ(ours, theirs);
    }
}

TEST(Extrapolate, FullRankReturnsCandidate) {
    std::mt19937_64 rng(2);
    const std::size_t d = 4;
    auto set = oracle::random_set(rng, d, {9, 12, 7});
    const auto examples = reprint_examples(set, ranks(d, d));
    ASSERT_EQ(examples.size(), 2u * (9 + 12 + 7));
    for (const auto& e : examples) {
        EXPECT_EQ(set.label(e.candidate_index), e.target_class);
        const auto cand = set.row(e.candidate_index);
        EXPECT_TRUE(std::equal(cand.begin(), cand.end(), e.vector.begin()));
    }
}

TEST(SampleCandidate, SingleMemberAlwaysZero) {
    auto set = oracle::from_rows(2, {0, 1, 0}, {{1, 1}, {2, 2}, {3, 3}});
    auto tgt = fit_class_geometry(set, 1, RankPolicy::fixed(1));
    const auto members = set.members(1);
    for (std::uint64_t i = 0; i < 100; ++i) {
        KeyedRng rng(i);
        EXPECT_EQ(sample_candidate(tgt, set, members, rng).position, 0u);
    }
    EXPECT_THROW(
        [&] {
            KeyedRng rng(0);
            sample_candidate(tgt, set, std::vector<std::size_t>{}, rng);
        }(),
        EmptyClassError);
}

TEST(SampleCandidate, UniformOverFourMembers) {
    auto set = oracle::from_rows(2, {0, 1, 1, 1, 1}, {{0}, {1}, {2}, {3}, {4}});
    auto tgt = fit_class_geometry(set, 1, RankPolicy::fixed(0));
    const auto members = set.members(1);
    std::map<std::size_t, int> hits;
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) {
        KeyedRng rng(9, {stream::reprint, 0, 1, static_cast<std::uint64_t>(i)});
        ++hits[sample_candidate(tgt, set, members, rng).position];
    }
    ASSERT_EQ(hits.size(), 4u);
    for (auto [pos, count] : hits) EXPECT_NEAR(count / double(draws), 0.25, 0.02) << pos;
}

TEST(SampleCandidate, SeedFixesSequence) {
    std::mt19937_64 rng(4);
    auto set = oracle::random_set(rng, 3, {10, 30});
    auto a = reprint_examples(set, ranks(1, 1));
    auto b = reprint_examples(set, ranks(1, 1));
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].candidate_index, b[i].candidate_index);
}

TEST(Labels, LiteralDeterminantIsHard) {
    auto src = axis_geometry(0, Eigen::Vector2d(0, 0), {0});
    auto tgt = axis_geometry(1, Eigen::Vector2d(10, 10), {1});
    auto y = refine_label(src, tgt, Eigen::Vector2d(3, 4), Eigen::Vector2d(2, 7), LabelStrategy::literal_determinant,
                          0.0, 2);
    EXPECT_EQ(y, (std::vector<double>{0.0, 1.0}));
}

TEST(Labels, PseudoDeterminantIsHalf) {
    auto src = axis_geometry(0, Eigen::Vector2d(0, 0), {0});
    auto tgt = axis_geometry(1, Eigen::Vector2d(10, 10), {1});
    auto y = refine_label(src, tgt, Eigen::Vector2d(3, 4), Eigen::Vector2d(2, 7), LabelStrategy::pseudo_determinant,
                          0.0, 2);
    EXPECT_EQ(y, (std::vector<double>{0.5, 0.5}));
}

TEST(Labels, TraceRatio) {
    auto src = axis_geometry(0, Eigen::Vector3d(0, 0, 0), {0});
    auto tgt = axis_geometry(1, Eigen::Vector3d(0, 0, 0), {1});
    auto lambda = label_weight(src, tgt, Eigen::Vector3d(3, 4, 1), Eigen::Vector3d(2, 7, 0), LabelStrategy::trace_ratio, 0.0);
    ASSERT_TRUE(lambda);
    EXPECT_DOUBLE_EQ(*lambda, 2.0 / 3.0);
}

TEST(Labels, ResidualEnergyExample) {
    auto src = axis_geometry(0, Eigen::Vector2d(0, 0), {0});
    auto tgt = axis_geometry(1, Eigen::Vector2d(10, 10), {1});
    auto y = refine_label(src, tgt, Eigen::Vector2d(3, 4), Eigen::Vector2d(2, 7), LabelStrategy::residual_energy, 0.0, 2);
    EXPECT_DOUBLE_EQ(y[0], 16.0 / 65.0);
    EXPECT_DOUBLE_EQ(y[1], 49.0 / 65.0);
}

TEST(Labels, PositivityConditionFallsBackToHard) {
    auto src = axis_geometry(0, Eigen::Vector2d(0, 0), {0});
    auto tgt = axis_geometry(1, Eigen::Vector2d(0, 0), {1});
    // source example inside its own subspace: zero residual form
    auto y = refine_label(src, tgt, Eigen::Vector2d(3, 0), Eigen::Vector2d(2, 7), LabelStrategy::residual_energy, 0.0, 2);
    EXPECT_EQ(y, (std::vector<double>{0.0, 1.0}));
    // epsilon above both forms
    y = refine_label(src, tgt, Eigen::Vector2d(3, 4), Eigen::Vector2d(2, 7), LabelStrategy::residual_energy, 100.0, 2);
    EXPECT_EQ(y, (std::vector<double>{0.0, 1.0}));
    y = refine_label(src, tgt, Eigen::Vector2d(3, 4), Eigen::Vector2d(2, 7), LabelStrategy::hard, 0.0, 2);
    EXPECT_EQ(y, (std::vector<double>{0.0, 1.0}));
}

TEST(Labels, ProjectorDeterminants) {
    EXPECT_EQ(projector_determinant(3, 3), 1.0);
    EXPECT_EQ(projector_determinant(2, 3), 0.0);
    EXPECT_EQ(complement_determinant(0), 1.0);
    EXPECT_EQ(complement_determinant(1), 0.0);
    EXPECT_EQ(projector_pseudo_determinant(0), 0.0);
    EXPECT_EQ(projector_pseudo_determinant(4), 1.0);
}

TEST(Labels, StrategyNamesRoundTrip) {
    for (auto s : {LabelStrategy::literal_determinant, LabelStrategy::pseudo_determinant, LabelStrategy::trace_ratio,
                   LabelStrategy::residual_energy, LabelStrategy::hard}) {
        EXPECT_EQ(parse_label_strategy(to_string(s)), s);
    }
    EXPECT_THROW(parse_label_strategy("det"), ConfigError);
}

TEST(Labels, EveryStrategyStaysOnSimplex) {
    std::mt19937_64 rng(8);
    for (auto s : {LabelStrategy::literal_determinant, LabelStrategy::pseudo_determinant, LabelStrategy::trace_ratio,
                   LabelStrategy::residual_energy, LabelStrategy::hard}) {
        auto set = oracle::random_set(rng, 5, {6, 3, 8});
        auto out = augment_dataset(set, ranks(2, 2, s));
        for (std::size_t i = 0; i < out.size(); ++i) {
            double sum = 0.0;
            for (float y : out.soft_label(i)) {
                EXPECT_GE(y, 0.0f);
                EXPECT_LE(y, 1.0f);
                sum += y;
            }
            EXPECT_NEAR(sum, 1.0, 1e-6);
        }
    }
}

TEST(Augment, CountsPerPair) {
    std::mt19937_64 rng(6);
    auto two = oracle::random_set(rng, 3, {3, 5});
    auto ex = reprint_examples(two, ranks(1, 1));
    ASSERT_EQ(ex.size(), 8u);
    std::size_t to1 = 0;
    std::size_t to0 = 0;
    for (const auto& e : ex) (e.target_class == 1 ? to1 : to0)++;
    EXPECT_EQ(to1, 3u);
    EXPECT_EQ(to0, 5u);
    EXPECT_EQ(reprint_examples(oracle::random_set(rng, 3, {2, 2, 2}), ranks(1, 1)).size(), 12u);
}

TEST(Augment, EmptyClassRejected) {
    std::mt19937_64 rng(6);
    auto set = oracle::random_set(rng, 3, {3, 0, 2});
    EXPECT_THROW(augment_dataset(set, ranks(1, 1)), EmptyClassError);
}

TEST(Augment, SameSeedSameFile) {
    TempDir dir;
    std::mt19937_64 rng(12);
    auto set = oracle::random_set(rng, 6, {5, 9, 4});
    write_soft(augment_dataset(set, ranks(2, 3)), dir / "a.embs");
    write_soft(augment_dataset(set, ranks(2, 3), 3), dir / "b.embs");
    std::ifstream a(dir / "a.embs", std::ios::binary);
    std::ifstream b(dir / "b.embs", std::ios::binary);
    EXPECT_TRUE(std::equal(std::istreambuf_iterator<char>(a), {}, std::istreambuf_iterator<char>(b)));
    auto other = ranks(2, 3);
    other.seed = 43;
    EXPECT_FALSE(augment_dataset(set, other) == augment_dataset(set, ranks(2, 3)));
}

TEST(Augment, MeanShiftConvergesToTargetMean) {
    // Source residuals sum to zero over the whole source class, so only the
    // sampled candidates' projections contribute noise.
    std::mt19937_64 rng(21);
    auto set = oracle::random_set(rng, 6, {4000, 300});
    auto cfg = ranks(2, 3);
    const auto ex = reprint_examples(set, cfg);
    const auto tgt = fit_class_geometry(set, 1, cfg.target_policy);
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(6);
    Eigen::VectorXd sq = Eigen::VectorXd::Zero(6);
    double m = 0;
    for (const auto& e : ex) {
        if (e.target_class != 1) continue;
        for (int j = 0; j < 6; ++j) {
            sum[j] += e.vector[j];
            sq[j] += double(e.vector[j]) * e.vector[j];
        }
        ++m;
    }
    for (int j = 0; j < 6; ++j) {
        const double mean = sum[j] / m;
        const double sd = std::sqrt(sq[j] / m - mean * mean);
        EXPECT_LE(std::abs(mean - tgt.mean()[j]), 3.0 * sd / std::sqrt(m)) << j;
    }
}
