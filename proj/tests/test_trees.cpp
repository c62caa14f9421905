#include <gtest/gtest.h>

#include <cmath>

#include "dropout/trees.hpp"

using namespace dropout;

namespace {

struct BestSplit {
    int feature = -1;
    double threshold = 0.0;
    double decrease = -1.0;
};

double wgini(double w0, double w1) {
    const double w = w0 + w1;
    if (w == 0.0) return 0.0;
    return w * (1.0 - (w0 / w) * (w0 / w) - (w1 / w) * (w1 / w));
}

// Every (feature, midpoint) pair, computed directly from the raw rows.
BestSplit exhaustive_root(const Matrix& X, const Labels& y) {
    double t0 = 0, t1 = 0;
    for (int v : y) (v ? t1 : t0) += 1;
    BestSplit best;
    for (std::size_t f = 0; f < X.cols(); ++f) {
        std::vector<double> vals;
        for (std::size_t i = 0; i < X.rows(); ++i) vals.push_back(X(i, f));
        std::sort(vals.begin(), vals.end());
        vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
        for (std::size_t k = 0; k + 1 < vals.size(); ++k) {
            const double thr = vals[k] + (vals[k + 1] - vals[k]) / 2.0;
            double l0 = 0, l1 = 0;
            for (std::size_t i = 0; i < X.rows(); ++i)
                if (X(i, f) <= thr) (y[i] ? l1 : l0) += 1;
            const double dec = wgini(t0, t1) - wgini(l0, l1) - wgini(t0 - l0, t1 - l1);
            if (dec > best.decrease + 1e-12) best = {int(f), thr, dec};
        }
    }
    return best;
}

Tree grow(const Matrix& X, const Labels& y, TreeConfig cfg = {}, std::uint64_t seed = 1) {
    Rng rng(seed);
    const std::vector<double> w(X.rows(), 1.0);
    return grow_tree(X, y, w, cfg, rng);
}

}  // namespace

TEST(Gini, Examples) {
    EXPECT_EQ(gini(std::vector<double>{1.0, 0.0}), 0.0);
    EXPECT_EQ(gini(std::vector<double>{0.5, 0.5}), 0.5);
    EXPECT_NEAR(gini(std::vector<double>{0.87, 0.13}), 0.2262, 1e-12);
    EXPECT_THROW(gini(std::vector<double>{0.5, 0.4}), ModelError);
}

TEST(Tree, RootSplitMatchesExhaustiveSearch) {
    Rng rng(99);
    int checked = 0;
    for (int inst = 0; inst < 200; ++inst) {
        const std::size_t n = 2 + rng.index(11), p = 1 + rng.index(3);
        Matrix X(n, p);
        Labels y(n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < p; ++j) X(i, j) = double(rng.index(6));
            y[i] = rng.uniform() < 0.5;
        }
        y[0] = 0;
        y[1] = 1;
        const BestSplit oracle = exhaustive_root(X, y);
        const Tree t = grow(X, y, TreeConfig{0, 1, int(p)});
        if (oracle.feature < 0) {
            EXPECT_TRUE(t.nodes[0].leaf());
            continue;
        }
        ASSERT_FALSE(t.nodes[0].leaf()) << "instance " << inst;
        EXPECT_NEAR(t.nodes[0].impurity_decrease, oracle.decrease, 1e-12) << "instance " << inst;
        EXPECT_EQ(t.nodes[0].feature, oracle.feature) << "instance " << inst;
        EXPECT_EQ(t.nodes[0].threshold, oracle.threshold) << "instance " << inst;
        ++checked;
    }
    EXPECT_GT(checked, 150);
}

TEST(Tree, SeparableOneDimension) {
    Matrix X(6, 1);
    const double xs[] = {1, 2, 4, 6, 8, 9};
    for (int i = 0; i < 6; ++i) X(i, 0) = xs[i];
    const Labels y = {0, 0, 0, 1, 1, 1};
    const Tree t = grow(X, y);
    ASSERT_EQ(t.nodes.size(), 3u);
    EXPECT_EQ(t.nodes[0].threshold, 5.0);
    EXPECT_EQ(t.nodes[1].positive_fraction, 0.0);
    EXPECT_EQ(t.nodes[2].positive_fraction, 1.0);
    EXPECT_EQ(tree_predict(t, std::vector<double>{3.0}).predicted_class, 0);
    EXPECT_EQ(tree_predict(t, std::vector<double>{7.0}).predicted_class, 1);
}

TEST(Tree, PureInputIsOneLeaf) {
    Matrix X(4, 2, 0.0);
    X(1, 0) = 3;
    const Tree t = grow(X, Labels{1, 1, 1, 1});
    ASSERT_EQ(t.nodes.size(), 1u);
    EXPECT_EQ(tree_predict(t, std::vector<double>{-5.0, 8.0}).predicted_class, 1);
}

TEST(Tree, XorIsLearnedExactly) {
    Matrix X(4, 2);
    X(0, 0) = 0; X(0, 1) = 0;
    X(1, 0) = 0; X(1, 1) = 1;
    X(2, 0) = 1; X(2, 1) = 0;
    X(3, 0) = 1; X(3, 1) = 1;
    const Labels y = {0, 1, 1, 0};
    const Tree t = grow(X, y, TreeConfig{2, 1, 2});
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(tree_predict(t, X.row(i)).predicted_class, y[i]);
    EXPECT_EQ(t.leaf_count(), 4u);
}

TEST(Tree, ZeroTrainingErrorWhenUnlimited) {
    Rng rng(3);
    for (int inst = 0; inst < 30; ++inst) {
        const std::size_t n = 50, p = 4;
        Matrix X(n, p);
        Labels y(n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < p; ++j) X(i, j) = rng.normal();
            y[i] = rng.uniform() < 0.3;
        }
        const Tree t = grow(X, y, TreeConfig{0, 1, int(p)});
        for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(tree_predict(t, X.row(i)).predicted_class, y[i]);
    }
}

TEST(Tree, RespectsDepthAndLeafSize) {
    Rng rng(4);
    Matrix X(200, 3);
    Labels y(200);
    for (std::size_t i = 0; i < 200; ++i) {
        for (std::size_t j = 0; j < 3; ++j) X(i, j) = rng.normal();
        y[i] = rng.uniform() < 0.5;
    }
    const Tree stump = grow(X, y, TreeConfig{1, 1, 3});
    EXPECT_EQ(stump.nodes.size(), 3u);
    const Tree t = grow(X, y, TreeConfig{0, 10, 3});
    for (const auto& n : t.nodes)
        if (n.leaf()) { EXPECT_GE(n.weight_neg + n.weight_pos, 10.0); }
}

TEST(Tree, ZeroWeightRowsAreIgnored) {
    Matrix X(4, 1);
    for (int i = 0; i < 4; ++i) X(i, 0) = i;
    const Labels y = {0, 1, 0, 1};
    const std::vector<double> w = {1, 0, 1, 0};
    Rng rng(1);
    const Tree t = grow_tree(X, y, w, TreeConfig{}, rng);
    EXPECT_EQ(t.nodes.size(), 1u);
    EXPECT_EQ(t.nodes[0].predicted_class, 0);
}

TEST(Tree, DeterministicAndBounded) {
    Rng data(5);
    Matrix X(100, 6);
    Labels y(100);
    for (std::size_t i = 0; i < 100; ++i) {
        for (std::size_t j = 0; j < 6; ++j) X(i, j) = data.normal();
        y[i] = data.uniform() < 0.4;
    }
    const Tree a = grow(X, y, TreeConfig{0, 1, 2}, 77), b = grow(X, y, TreeConfig{0, 1, 2}, 77);
    EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
    for (int k = 0; k < 200; ++k) {
        std::vector<double> x(6);
        for (auto& v : x) v = data.normal() * 3;
        const auto pr = tree_predict(a, x);
        EXPECT_GE(pr.positive_fraction, 0.0);
        EXPECT_LE(pr.positive_fraction, 1.0);
    }
}

TEST(Tree, InvalidInputs) {
    Matrix X(2, 1);
    Rng rng(1);
    const std::vector<double> neg = {1.0, -1.0}, zero = {0.0, 0.0};
    EXPECT_THROW(grow_tree(X, Labels{0, 1}, neg, TreeConfig{}, rng), ModelError);
    EXPECT_THROW(grow_tree(X, Labels{0, 1}, zero, TreeConfig{}, rng), ModelError);
    EXPECT_THROW(grow(X, Labels{0, 1}, TreeConfig{0, 1, 5}), ConfigError);
    EXPECT_THROW(tree_predict(grow(X, Labels{0, 1}), std::vector<double>{1.0, 2.0}), ModelError);
}
