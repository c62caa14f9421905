#pragma once

// CART classification trees with weighted Gini impurity and per-node random
// feature subsampling; the weak learner shared by the forest and boosting.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dropout/common.hpp"
#include "dropout/rng.hpp"

namespace dropout {

/// Gini impurity 1 - sum f_i^2 of a class-fraction vector.
inline double gini(std::span<const double> fractions) {
    double sum = 0.0, sq = 0.0;
    for (double f : fractions) {
        if (f < 0.0) throw ModelError("gini: negative fraction");
        sum += f;
        sq += f * f;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ModelError("gini: fractions must sum to 1");
    return 1.0 - sq;
}

struct TreeConfig {
    int max_depth = 0;         // 0 = unlimited
    int min_samples_leaf = 1;  // rows with positive weight
    int mtry = 0;              // candidate features per split; 0 = all

    void validate(std::size_t p) const {
        if (max_depth < 0) throw ConfigError("tree: max_depth must be >= 1 or 0 for unlimited");
        if (min_samples_leaf < 1) throw ConfigError("tree: min_samples_leaf must be >= 1");
        if (mtry < 0 || static_cast<std::size_t>(mtry) > p) throw ConfigError("tree: mtry must lie in [1, p]");
    }
};

struct TreeNode {
    int feature = -1;  // -1 for leaves
    double threshold = 0.0;
    int left = -1, right = -1;
    double weight_neg = 0.0, weight_pos = 0.0;  // weighted class mass reaching the node
    double impurity_decrease = 0.0;             // weighted, internal nodes only
    int predicted_class = 0;
    double positive_fraction = 0.0;

    bool leaf() const noexcept { return feature < 0; }
};

struct Tree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root
    std::size_t width = 0;

    std::size_t leaf_count() const {
        return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) {
            return n.leaf();
        }));
    }
};

struct TreePrediction {
    int predicted_class;
    double positive_fraction;
};

/// Route by threshold comparisons, left iff value <= threshold.
inline TreePrediction tree_predict(const Tree& t, std::span<const double> x) {
    if (x.size() != t.width) throw ModelError("tree_predict: row width mismatch");
    const TreeNode* n = &t.nodes[0];
    while (!n->leaf())
        n = &t.nodes[static_cast<std::size_t>(x[static_cast<std::size_t>(n->feature)] <= n->threshold ? n->left
                                                                                                       : n->right)];
    return {n->predicted_class, n->positive_fraction};
}

/// Matrix re-expressed as per-column ranks of the sorted distinct values.
/// Split search then runs on integer bins while thresholds stay exact midpoints.
class BinnedMatrix {
public:
    BinnedMatrix() = default;

    explicit BinnedMatrix(const Matrix& X) : n_(X.rows()), p_(X.cols()), bins_(X.rows() * X.cols()), values_(X.cols()) {
        std::vector<double> col(n_);
        for (std::size_t j = 0; j < p_; ++j) {
            for (std::size_t i = 0; i < n_; ++i) {
                col[i] = X(i, j);
                if (std::isnan(col[i])) throw ModelError("grow_tree: NaN in input");
            }
            std::vector<double> v = col;
            std::sort(v.begin(), v.end());
            v.erase(std::unique(v.begin(), v.end()), v.end());
            for (std::size_t i = 0; i < n_; ++i)
                bins_[j * n_ + i] =
                    static_cast<std::uint32_t>(std::lower_bound(v.begin(), v.end(), col[i]) - v.begin());
            values_[j] = std::move(v);
        }
    }

    std::size_t rows() const noexcept { return n_; }
    std::size_t cols() const noexcept { return p_; }
    std::uint32_t bin(std::size_t i, std::size_t j) const noexcept { return bins_[j * n_ + i]; }
    const std::uint32_t* column(std::size_t j) const noexcept { return bins_.data() + j * n_; }
    const std::vector<double>& values(std::size_t j) const noexcept { return values_[j]; }

private:
    std::size_t n_ = 0, p_ = 0;
    std::vector<std::uint32_t> bins_;
    std::vector<std::vector<double>> values_;
};

namespace detail {

struct SplitChoice {
    int feature = -1;
    std::uint32_t bin = 0;   // left side takes bins <= this
    double threshold = 0.0;
    double child_impurity = 0.0;  // weighted sum over children of W_c * gini_c
};

inline double weighted_gini(double w0, double w1) noexcept {
    const double w = w0 + w1;
    return w > 0.0 ? w - (w0 * w0 + w1 * w1) / w : 0.0;
}

class TreeGrower {
public:
    TreeGrower(const BinnedMatrix& B, std::span<const int> y, std::span<const double> w, const TreeConfig& cfg,
               Rng& rng)
        : B_(B), y_(y), w_(w), cfg_(cfg), rng_(rng) {
        const std::size_t p = B.cols();
        std::size_t max_bins = 1;
        for (std::size_t j = 0; j < p; ++j) max_bins = std::max(max_bins, B.values(j).size());
        h0_.assign(max_bins, 0.0);
        h1_.assign(max_bins, 0.0);
        hc_.assign(max_bins, 0);
        features_ = iota_indices(p);
        mtry_ = cfg.mtry == 0 ? p : static_cast<std::size_t>(cfg.mtry);
    }

    Tree grow() {
        std::vector<std::uint32_t> rows;
        for (std::size_t i = 0; i < B_.rows(); ++i)
            if (w_[i] > 0.0) rows.push_back(static_cast<std::uint32_t>(i));
        if (rows.empty()) throw ModelError("grow_tree: all instance weights are zero");
        tree_.width = B_.cols();
        build(rows, 0, rows.size(), 0);
        return std::move(tree_);
    }

private:
    int build(std::vector<std::uint32_t>& rows, std::size_t begin, std::size_t end, int depth) {
        const int id = static_cast<int>(tree_.nodes.size());
        tree_.nodes.emplace_back();
        double w0 = 0.0, w1 = 0.0;
        for (std::size_t k = begin; k < end; ++k) (y_[rows[k]] ? w1 : w0) += w_[rows[k]];
        {
            TreeNode& n = tree_.nodes[static_cast<std::size_t>(id)];
            n.weight_neg = w0;
            n.weight_pos = w1;
            n.predicted_class = w1 >= w0 ? 1 : 0;
            n.positive_fraction = w1 / (w0 + w1);
        }
        const std::size_t count = end - begin;
        const bool pure = w0 == 0.0 || w1 == 0.0;
        const bool depth_stop = cfg_.max_depth > 0 && depth >= cfg_.max_depth;
        const bool size_stop = count < 2 * static_cast<std::size_t>(cfg_.min_samples_leaf);
        if (pure || depth_stop || size_stop) return id;

        const SplitChoice best = find_split(rows, begin, end);
        if (best.feature < 0) return id;

        // Partition rows: bins <= best.bin go left.
        const std::uint32_t* col = B_.column(static_cast<std::size_t>(best.feature));
        auto mid_it = std::stable_partition(rows.begin() + static_cast<std::ptrdiff_t>(begin),
                                            rows.begin() + static_cast<std::ptrdiff_t>(end),
                                            [&](std::uint32_t r) { return col[r] <= best.bin; });
        const std::size_t mid = static_cast<std::size_t>(mid_it - rows.begin());

        {
            TreeNode& n = tree_.nodes[static_cast<std::size_t>(id)];
            n.feature = best.feature;
            n.threshold = best.threshold;
            n.impurity_decrease = std::max(0.0, weighted_gini(w0, w1) - best.child_impurity);
        }
        const int l = build(rows, begin, mid, depth + 1);
        const int r = build(rows, mid, end, depth + 1);
        tree_.nodes[static_cast<std::size_t>(id)].left = l;
        tree_.nodes[static_cast<std::size_t>(id)].right = r;
        return id;
    }

    SplitChoice find_split(const std::vector<std::uint32_t>& rows, std::size_t begin, std::size_t end) {
        const std::size_t p = B_.cols();
        // Candidate features: partial Fisher-Yates, then ascending order so ties
        // resolve to the lowest feature index.
        std::vector<std::size_t> cand;
        if (mtry_ >= p) {
            cand = features_;
        } else {
            for (std::size_t k = 0; k < mtry_; ++k) std::swap(features_[k], features_[k + rng_.index(p - k)]);
            cand.assign(features_.begin(), features_.begin() + static_cast<std::ptrdiff_t>(mtry_));
            std::sort(cand.begin(), cand.end());
        }

        SplitChoice best;
        const std::size_t count = end - begin;
        const std::size_t min_leaf = static_cast<std::size_t>(cfg_.min_samples_leaf);
        double tw0 = 0.0, tw1 = 0.0;
        for (std::size_t k = begin; k < end; ++k) (y_[rows[k]] ? tw1 : tw0) += w_[rows[k]];
        // rounding noise must not override the lowest-index tie break
        const double tie_eps = 1e-12 * (tw0 + tw1);

        for (std::size_t f : cand) {
            const std::uint32_t* col = B_.column(f);
            const auto& vals = B_.values(f);
            const std::size_t nb = vals.size();
            if (nb < 2) continue;

            auto consider = [&](std::uint32_t bin_left, std::uint32_t bin_right, double lw0, double lw1,
                                std::size_t lc) {
                if (lc < min_leaf || count - lc < min_leaf) return;
                const double imp = weighted_gini(lw0, lw1) + weighted_gini(tw0 - lw0, tw1 - lw1);
                if (best.feature < 0 || imp < best.child_impurity - tie_eps) {
                    best.feature = static_cast<int>(f);
                    best.bin = bin_left;
                    best.threshold = vals[bin_left] + (vals[bin_right] - vals[bin_left]) / 2.0;
                    best.child_impurity = imp;
                }
            };

            if (count * 4 < nb) {
                // Small node on a high-cardinality column: sort instead of scanning bins.
                scratch_.clear();
                for (std::size_t k = begin; k < end; ++k) scratch_.push_back(rows[k]);
                std::sort(scratch_.begin(), scratch_.end(),
                          [&](std::uint32_t a, std::uint32_t b) { return col[a] < col[b]; });
                double lw0 = 0.0, lw1 = 0.0;
                std::size_t lc = 0;
                for (std::size_t k = 0; k + 1 < scratch_.size(); ++k) {
                    const std::uint32_t r = scratch_[k];
                    (y_[r] ? lw1 : lw0) += w_[r];
                    ++lc;
                    const std::uint32_t next = scratch_[k + 1];
                    if (col[next] != col[r]) consider(col[r], col[next], lw0, lw1, lc);
                }
            } else {
                std::uint32_t lo = static_cast<std::uint32_t>(nb), hi = 0;
                for (std::size_t k = begin; k < end; ++k) {
                    const std::uint32_t r = rows[k];
                    const std::uint32_t b = col[r];
                    (y_[r] ? h1_[b] : h0_[b]) += w_[r];
                    ++hc_[b];
                    lo = std::min(lo, b);
                    hi = std::max(hi, b);
                }
                double lw0 = 0.0, lw1 = 0.0;
                std::size_t lc = 0;
                std::uint32_t prev = lo;
                lw0 += h0_[lo];
                lw1 += h1_[lo];
                lc += hc_[lo];
                for (std::uint32_t b = lo + 1; b <= hi; ++b) {
                    if (hc_[b] == 0) continue;
                    consider(prev, b, lw0, lw1, lc);
                    lw0 += h0_[b];
                    lw1 += h1_[b];
                    lc += hc_[b];
                    prev = b;
                }
                for (std::uint32_t b = lo; b <= hi; ++b) {
                    h0_[b] = 0.0;
                    h1_[b] = 0.0;
                    hc_[b] = 0;
                }
            }
        }
        return best;
    }

    const BinnedMatrix& B_;
    std::span<const int> y_;
    std::span<const double> w_;
    TreeConfig cfg_;
    Rng& rng_;
    std::size_t mtry_ = 0;
    std::vector<std::size_t> features_;
    std::vector<double> h0_, h1_;
    std::vector<std::size_t> hc_;
    std::vector<std::uint32_t> scratch_;
    Tree tree_;
};

}  // namespace detail

/// Grow a tree on pre-binned data. Rows with zero weight are ignored.
/// Zero-gain splits are taken while a node is impure (needed for XOR-like
/// structure); growth stops on purity, depth, leaf size or when no candidate
/// feature varies within the node.
inline Tree grow_tree(const BinnedMatrix& B, std::span<const int> y, std::span<const double> weights,
                      const TreeConfig& cfg, Rng& rng) {
    cfg.validate(B.cols());
    if (y.size() != B.rows() || weights.size() != B.rows()) throw ModelError("grow_tree: length mismatch");
    double total = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw ModelError("grow_tree: weights must be finite and >= 0");
        total += w;
    }
    if (!(total > 0.0)) throw ModelError("grow_tree: all instance weights are zero");
    require_binary(y, "grow_tree");
    return detail::TreeGrower(B, y, weights, cfg, rng).grow();
}

inline Tree grow_tree(const Matrix& X, std::span<const int> y, std::span<const double> weights,
                      const TreeConfig& cfg, Rng& rng) {
    if (X.rows() == 0) throw ModelError("grow_tree: no rows");
    return grow_tree(BinnedMatrix(X), y, weights, cfg, rng);
}

inline nlohmann::json to_json(const Tree& t) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : t.nodes) {
        if (n.leaf())
            nodes.push_back({{"leaf", true},
                             {"class", n.predicted_class},
                             {"positive_fraction", n.positive_fraction},
                             {"weight", {n.weight_neg, n.weight_pos}}});
        else
            nodes.push_back({{"leaf", false},
                             {"feature", n.feature},
                             {"threshold", n.threshold},
                             {"left", n.left},
                             {"right", n.right},
                             {"impurity_decrease", n.impurity_decrease}});
    }
    return {{"width", t.width}, {"nodes", nodes}};
}

}  // namespace dropout
