#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "reprint/class_geometry.hpp"

using namespace reprint;

namespace {

ClassGeometry axis_geometry(Eigen::VectorXd mean, std::vector<Eigen::Index> axes) {
    const auto d = mean.size();
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(d, static_cast<Eigen::Index>(axes.size()));
    for (std::size_t k = 0; k < axes.size(); ++k) a(axes[k], static_cast<Eigen::Index>(k)) = 1.0;
    return ClassGeometry(0, std::move(mean), a, Eigen::VectorXd::Ones(d), 2, 1.0);
}

oracle::Matrix columns(const Eigen::MatrixXd& m) {
    oracle::Matrix out;
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.emplace_back(m.col(c).data(), m.col(c).data() + m.rows());
    return out;
}

std::vector<std::vector<double>> class_rows(const LabeledEmbeddingSet& set, std::uint32_t c) {
    std::vector<std::vector<double>> rows;
    for (auto i : set.members(c)) rows.emplace_back(set.row(i).begin(), set.row(i).end());
    return rows;
}

} // namespace

TEST(FitGeometry, FirstComponentOfElongatedCloud) {
    auto set = oracle::from_rows(2, {0, 0, 0, 0, 1}, {{1, 0, 0}, {-1, 0, 0}, {0, 0.1f, 0}, {0, -0.1f, 0}, {5, 5, 5}});
    auto g = fit_class_geometry(set, 0, RankPolicy::fixed(1));
    ASSERT_EQ(g.rank(), 1u);
    const auto ref = oracle::jacobi_eigen(oracle::scatter(class_rows(set, 0)));
    EXPECT_NEAR(std::abs(ref.vectors[0][0]), 1.0, 1e-12);
    EXPECT_NEAR(g.components()(0, 0), 1.0, 1e-12);
    EXPECT_NEAR(g.components()(1, 0), 0.0, 1e-12);
    EXPECT_NEAR(g.components()(2, 0), 0.0, 1e-12);
}

TEST(FitGeometry, SingleSampleHasNoComponents) {
    auto set = oracle::from_rows(2, {0, 1, 1}, {{1, 2, 3}, {0, 0, 0}, {1, 1, 1}});
    for (auto policy : {RankPolicy::fixed(3), RankPolicy::explained_variance(0.5)}) {
        auto g = fit_class_geometry(set, 0, policy);
        EXPECT_EQ(g.rank(), 0u);
        EXPECT_EQ(g.mean(), Eigen::Vector3d(1, 2, 3));
        EXPECT_THROW(explained_variance_ratios(g), DegenerateVarianceError);
        Eigen::Vector3d x(4, 5, 6);
        EXPECT_EQ(project(g, x), Eigen::Vector3d::Zero());
    }
}

TEST(FitGeometry, ExplainedVarianceSelectsRank) {
    // scatter diag(18, 2, 0): ratios (0.9, 0.1, 0)
    auto set = oracle::from_rows(2, {0, 0, 0, 0, 1}, {{3, 0, 0}, {-3, 0, 0}, {0, 1, 0}, {0, -1, 0}, {9, 9, 9}});
    auto g = fit_class_geometry(set, 0, RankPolicy::explained_variance(0.9));
    EXPECT_EQ(g.rank(), 1u);
    auto ratios = explained_variance_ratios(g);
    ASSERT_EQ(ratios.size(), 3u);
    EXPECT_NEAR(ratios[0], 0.9, 1e-12);
    EXPECT_NEAR(ratios[1], 0.1, 1e-12);
    EXPECT_NEAR(ratios[2], 0.0, 1e-12);
    EXPECT_EQ(fit_class_geometry(set, 0, RankPolicy::explained_variance(0.95)).rank(), 2u);
    EXPECT_EQ(fit_class_geometry(set, 0, RankPolicy::explained_variance(1.0)).rank(), 2u);
    EXPECT_EQ(fit_class_geometry(set, 0, RankPolicy::fixed(3)).rank(), 2u);
}

TEST(FitGeometry, IsotropicRatios) {
    auto set = oracle::from_rows(2, {0, 0, 0, 0, 1}, {{1, 0}, {-1, 0}, {0, 1}, {0, -1}, {3, 3}});
    auto ratios = explained_variance_ratios(fit_class_geometry(set, 0, RankPolicy::fixed(2)));
    EXPECT_NEAR(ratios[0], 0.5, 1e-12);
    EXPECT_NEAR(ratios[1], 0.5, 1e-12);
}

TEST(FitGeometry, Errors) {
    auto set = oracle::from_rows(3, {0, 0}, {{1, 2}, {2, 1}});
    EXPECT_THROW(fit_class_geometry(set, 1, RankPolicy::fixed(1)), EmptyClassError);
    EXPECT_THROW(fit_class_geometry(set, 5, RankPolicy::fixed(1)), EmptyClassError);
    EXPECT_THROW(RankPolicy::explained_variance(0.0), ConfigError);
    EXPECT_THROW(RankPolicy::explained_variance(1.5), ConfigError);
    auto g = fit_class_geometry(set, 0, RankPolicy::fixed(1));
    EXPECT_THROW(center(g, Eigen::Vector3d(1, 2, 3)), DimError);
    EXPECT_THROW(project(g, Eigen::Vector3d(1, 2, 3)), DimError);
}

TEST(Center, Arithmetic) {
    auto g = axis_geometry(Eigen::Vector2d(1, 2), {});
    EXPECT_EQ(center(g, Eigen::VectorXd(Eigen::Vector2d(3, 5))), Eigen::Vector2d(2, 3));
    EXPECT_EQ(center(g, Eigen::VectorXd(Eigen::Vector2d(1, 2))), Eigen::Vector2d::Zero());
    auto z = axis_geometry(Eigen::Vector2d::Zero(), {});
    EXPECT_EQ(center(z, Eigen::VectorXd(Eigen::Vector2d(3, 5))), Eigen::Vector2d(3, 5));
}

TEST(Projection, AxisAligned) {
    auto g = axis_geometry(Eigen::Vector2d::Zero(), {0});
    const Eigen::VectorXd x = Eigen::Vector2d(3, 4);
    EXPECT_EQ(project(g, x), Eigen::Vector2d(3, 0));
    EXPECT_EQ(residual(g, x), Eigen::Vector2d(0, 4));
    EXPECT_EQ(project(g, project(g, x)), project(g, x));
    auto full = axis_geometry(Eigen::Vector2d::Zero(), {0, 1});
    EXPECT_EQ(residual(full, x), Eigen::Vector2d::Zero());
    auto none = axis_geometry(Eigen::Vector2d::Zero(), {});
    EXPECT_EQ(project(none, x), Eigen::Vector2d::Zero());
}

TEST(Projection, RandomInvariants) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t d = 2 + trial % 9;
        auto set = oracle::random_set(rng, d, {12, 5});
        auto geo = fit_class_geometry(set, 0, RankPolicy::fixed(1 + trial % d));
        const auto& a = geo.components();
        EXPECT_LE((a.transpose() * a - Eigen::MatrixXd::Identity(a.cols(), a.cols())).cwiseAbs().maxCoeff(), 1e-10);
        for (int k = 0; k < 10; ++k) {
            Eigen::VectorXd x(d);
            for (auto& v : x) v = g(rng);
            const Eigen::VectorXd p = project(geo, x);
            const Eigen::VectorXd r = residual(geo, x);
            EXPECT_LE((project(geo, p) - p).norm(), 1e-10 * x.norm());
            EXPECT_LE(std::abs(r.dot(p)), 1e-5 * x.squaredNorm());
            EXPECT_NEAR(p.squaredNorm() + r.squaredNorm(), x.squaredNorm(), 1e-10 * x.squaredNorm());
        }
    }
}

TEST(Projection, MatchesCovarianceEigenvectors) {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t d = 2 + trial % 9;
        const std::size_t n = 3 + (trial * 7) % 48;
        auto set = oracle::random_set(rng, d, {n, 2});
        auto geo = fit_class_geometry(set, 0, RankPolicy::fixed(1 + trial % (d - 1)));
        const auto ref = oracle::jacobi_eigen(oracle::scatter(class_rows(set, 0)));
        const oracle::Matrix expected(ref.vectors.begin(), ref.vectors.begin() + static_cast<long>(geo.rank()));
        const auto got = columns(geo.components());
        EXPECT_LE(oracle::max_principal_angle(got, expected), 1e-4) << "d=" << d << " n=" << n;
        for (std::size_t k = 0; k < geo.rank(); ++k) {
            const double s = geo.singular_values()[static_cast<Eigen::Index>(k)];
            EXPECT_NEAR(s * s, ref.values[k], 1e-8 * ref.values[0]);
        }
    }
}

TEST(SignConvention, LargestEntryPositive) {
    Eigen::MatrixXd m(3, 2);
    m << 0.1, -0.5, -0.9, 0.5, 0.2, 0.1;
    normalize_signs(m);
    EXPECT_GT(m(1, 0), 0.0);
    EXPECT_GT(m(0, 1), 0.0);  // tie between rows 0 and 1 goes to row 0
}

TEST(SignConvention, FitIsDeterministic) {
    std::mt19937_64 rng(23);
    auto set = oracle::random_set(rng, 6, {20, 20});
    auto a = fit_class_geometry(set, 1, RankPolicy::fixed(3));
    auto b = fit_class_geometry(set, 1, RankPolicy::fixed(3));
    EXPECT_EQ(a.components(), b.components());
    for (Eigen::Index c = 0; c < a.components().cols(); ++c) {
        Eigen::Index best = 0;
        a.components().col(c).cwiseAbs().maxCoeff(&best);
        EXPECT_GT(a.components()(best, c), 0.0);
    }
}

TEST(GeometryCsv, OneRowPerSpectrumEntry) {
    auto set = oracle::from_rows(2, {0, 0, 0, 1, 1}, {{3, 0}, {-3, 0}, {0, 1}, {1, 1}, {2, 2}});
    auto geos = fit_all_classes(set, RankPolicy::fixed(1));
    std::ostringstream os;
    write_geometry_csv(os, geos, set.vocab());
    std::istringstream in(os.str());
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) ++lines;
    EXPECT_EQ(lines, 1 + 2 + 2);
}
