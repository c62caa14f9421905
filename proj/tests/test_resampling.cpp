#include <gtest/gtest.h>

#include <map>
#include <set>

#include "dropout/resampling.hpp"

using namespace dropout;

namespace {

std::vector<FeatureDescriptor> numeric_desc(std::size_t p) {
    return std::vector<FeatureDescriptor>(p, {"x", std::nullopt, Encoding::numeric_standardized, "", "x"});
}

}  // namespace

TEST(Kfold, LeaveOneOut) {
    const auto plan = kfold_plan(10, 10, nullptr, 1);
    for (std::size_t f = 0; f < 10; ++f) EXPECT_EQ(plan.test_indices(f).size(), 1u);
    std::set<std::size_t> folds(plan.fold_of.begin(), plan.fold_of.end());
    EXPECT_EQ(folds.size(), 10u);
}

TEST(Kfold, SizesDifferByAtMostOne) {
    const auto plan = kfold_plan(10, 3, nullptr, 2);
    std::multiset<std::size_t> sizes;
    for (std::size_t f = 0; f < 3; ++f) sizes.insert(plan.test_indices(f).size());
    EXPECT_EQ(sizes, (std::multiset<std::size_t>{3, 3, 4}));
}

TEST(Kfold, StratifiedOnePositivePerFold) {
    Labels y(100, 0);
    for (int i = 0; i < 10; ++i) y[i * 7] = 1;
    const auto plan = kfold_plan(100, 10, y, 3);
    EXPECT_TRUE(plan.warnings.empty());
    for (std::size_t f = 0; f < 10; ++f) {
        std::size_t pos = 0;
        for (auto i : plan.test_indices(f)) pos += y[i];
        EXPECT_EQ(pos, 1u);
    }
}

TEST(Kfold, TrainAndTestPartitionRows) {
    const auto plan = kfold_plan(57, 5, nullptr, 4);
    for (std::size_t f = 0; f < 5; ++f) {
        auto te = plan.test_indices(f), tr = plan.train_indices(f);
        EXPECT_EQ(te.size() + tr.size(), 57u);
        std::vector<std::size_t> all;
        std::set_union(te.begin(), te.end(), tr.begin(), tr.end(), std::back_inserter(all));
        EXPECT_EQ(all.size(), 57u);
    }
}

TEST(Kfold, WarnsWhenClassSmallerThanK) {
    Labels y(30, 0);
    y[0] = y[1] = 1;
    const auto plan = kfold_plan(30, 5, y, 5);
    EXPECT_EQ(plan.warnings.size(), 1u);
}

TEST(Kfold, PureFunctionOfArguments) {
    Labels y(40, 0);
    for (int i = 0; i < 40; i += 3) y[i] = 1;
    EXPECT_EQ(kfold_plan(40, 4, y, 6).fold_of, kfold_plan(40, 4, y, 6).fold_of);
    EXPECT_NE(kfold_plan(40, 4, y, 6).fold_of, kfold_plan(40, 4, y, 7).fold_of);
}

TEST(Kfold, InvalidK) {
    EXPECT_THROW(kfold_plan(5, 1, nullptr, 0), ConfigError);
    EXPECT_THROW(kfold_plan(5, 6, nullptr, 0), ConfigError);
}

TEST(Bootstrap, Basics) {
    EXPECT_EQ(bootstrap_indices(1, 9), (std::vector<std::size_t>{0}));
    EXPECT_EQ(bootstrap_indices(50, 9), bootstrap_indices(50, 9));
    const auto b = bootstrap_indices(10000, 10);
    const std::set<std::size_t> distinct(b.begin(), b.end());
    EXPECT_NEAR(double(distinct.size()) / 10000.0, 1.0 - std::exp(-1.0), 0.01);
}

TEST(Smote, SegmentBetweenTwoPoints) {
    Matrix X(6, 2);
    Labels y = {1, 1, 0, 0, 0, 0};
    X(0, 0) = 0; X(0, 1) = 0;
    X(1, 0) = 1; X(1, 1) = 1;
    for (int i = 2; i < 6; ++i) X(i, 0) = X(i, 1) = 5.0 + i;
    SmoteConfig c;
    c.k_neighbors = 1;
    c.seed = 3;
    const auto r = smote_augment(X, y, numeric_desc(2), c);
    ASSERT_EQ(r.synthetic_count(), 2u);
    for (std::size_t s = 0; s < 2; ++s) {
        const auto row = r.X.row(6 + s);
        const double u = r.provenance[s].u;
        const double expect = r.provenance[s].base == 0 ? u : 1.0 - u;
        EXPECT_DOUBLE_EQ(row[0], expect);
        EXPECT_EQ(row[0], row[1]);
        EXPECT_GE(row[0], 0.0);
        EXPECT_LE(row[0], 1.0);
    }
}

TEST(Smote, NoOpWhenBalanced) {
    Matrix X(4, 1);
    const Labels y = {1, 0, 1, 0};
    const auto r = smote_augment(X, y, numeric_desc(1), SmoteConfig{});
    EXPECT_EQ(r.synthetic_count(), 0u);
    EXPECT_EQ(r.X, X);
    EXPECT_FALSE(r.notice.empty());
}

TEST(Smote, ThirteenToEightySeven) {
    Rng rng(1);
    const std::size_t n = 100;
    std::vector<FeatureDescriptor> desc = numeric_desc(2);
    desc.push_back({"g", std::nullopt, Encoding::one_hot_level, "A", "g"});
    desc.push_back({"g", std::nullopt, Encoding::one_hot_level, "B", "g"});
    desc.push_back({"g", std::nullopt, Encoding::one_hot_level, "NC", "g"});
    desc.push_back({"b", std::nullopt, Encoding::boolean, "", "b"});
    desc.push_back({"o", std::nullopt, Encoding::ordinal_code, "", "o"});
    Matrix X(n, desc.size());
    Labels y(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = i < 13;
        X(i, 0) = rng.normal();
        X(i, 1) = rng.normal() * 10;
        X(i, 2 + rng.index(3)) = 1.0;
        X(i, 5) = rng.uniform() < 0.5;
        X(i, 6) = double(rng.index(5));
    }
    SmoteConfig c;
    c.seed = 8;
    const auto r = smote_augment(X, y, desc, c);
    EXPECT_EQ(r.synthetic_count(), 74u);
    EXPECT_EQ(count_positive(r.y), 87u);
    EXPECT_EQ(r.y.size() - count_positive(r.y), 87u);
    for (std::size_t s = 0; s < r.synthetic_count(); ++s) {
        const auto row = r.X.row(n + s);
        const auto& pv = r.provenance[s];
        EXPECT_EQ(y[pv.base], 1);
        EXPECT_EQ(y[pv.neighbor], 1);
        EXPECT_NE(pv.base, pv.neighbor);
        for (std::size_t j : {0u, 1u, 6u}) {
            const double a = X(pv.base, j), b = X(pv.neighbor, j);
            EXPECT_GE(row[j], std::min(a, b));
            EXPECT_LE(row[j], std::max(a, b));
        }
        EXPECT_EQ(row[2] + row[3] + row[4], 1.0);
        for (std::size_t j : {2u, 3u, 4u, 5u}) EXPECT_EQ(row[j], X(pv.base, j));
    }
    for (std::size_t i = 0; i < n; ++i) EXPECT_FALSE(r.synthetic[i]);
}

TEST(Smote, MinorityIsLabelZeroWhenRarer) {
    Matrix X(10, 1);
    for (int i = 0; i < 10; ++i) X(i, 0) = i;
    Labels y(10, 1);
    y[0] = y[1] = y[2] = 0;
    const auto r = smote_augment(X, y, numeric_desc(1), SmoteConfig{});
    EXPECT_EQ(r.minority_label, 0);
    EXPECT_EQ(r.synthetic_count(), 4u);
}

TEST(Smote, NeedsTwoMinorityRows) {
    Matrix X(5, 1);
    const Labels y = {1, 0, 0, 0, 0};
    EXPECT_THROW(smote_augment(X, y, numeric_desc(1), SmoteConfig{}), ModelError);
}

TEST(Smote, RatioTarget) {
    Matrix X(110, 1);
    Labels y(110, 0);
    for (int i = 0; i < 110; ++i) X(i, 0) = i;
    for (int i = 0; i < 10; ++i) y[i] = 1;
    SmoteConfig c;
    c.ratio = 0.5;
    EXPECT_EQ(smote_augment(X, y, numeric_desc(1), c).synthetic_count(), 40u);
}
