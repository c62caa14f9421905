#pragma once

// Fold plans for (nested) cross-validation, bootstrap draws and SMOTE
// minority oversampling.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dropout/common.hpp"
#include "dropout/features.hpp"
#include "dropout/rng.hpp"

namespace dropout {

struct FoldPlan {
    std::size_t k = 0;
    std::vector<std::size_t> fold_of;  // fold index per row
    bool stratified = false;
    std::uint64_t seed = 0;
    std::vector<std::string> warnings;

    std::vector<std::size_t> test_indices(std::size_t f) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < fold_of.size(); ++i)
            if (fold_of[i] == f) out.push_back(i);
        return out;
    }

    std::vector<std::size_t> train_indices(std::size_t f) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < fold_of.size(); ++i)
            if (fold_of[i] != f) out.push_back(i);
        return out;
    }
};

/// Shuffled round-robin assignment. With labels, each class is shuffled on
/// its own and the classes are dealt in sequence, so both fold sizes and
/// per-fold class counts differ by at most one.
inline FoldPlan kfold_plan(std::size_t n, std::size_t k, const Labels* labels, std::uint64_t seed) {
    if (k < 2) throw ConfigError("kfold_plan: k must be >= 2");
    if (k > n) throw ConfigError("kfold_plan: k = " + std::to_string(k) + " exceeds row count " + std::to_string(n));
    FoldPlan plan;
    plan.k = k;
    plan.seed = seed;
    plan.stratified = labels != nullptr;
    plan.fold_of.assign(n, 0);
    Rng rng(seed);

    std::vector<std::size_t> order;
    if (labels) {
        if (labels->size() != n) throw ModelError("kfold_plan: label count mismatch");
        require_binary(*labels, "kfold_plan");
        for (int c : {1, 0}) {
            std::vector<std::size_t> members;
            for (std::size_t i = 0; i < n; ++i)
                if ((*labels)[i] == c) members.push_back(i);
            if (!members.empty() && members.size() < k)
                plan.warnings.push_back("class " + std::to_string(c) + " has " + std::to_string(members.size()) +
                                        " rows, fewer than k = " + std::to_string(k) +
                                        "; some folds will lack it");
            rng.shuffle(members);
            order.insert(order.end(), members.begin(), members.end());
        }
    } else {
        order = iota_indices(n);
        rng.shuffle(order);
    }
    for (std::size_t pos = 0; pos < n; ++pos) plan.fold_of[order[pos]] = pos % k;
    return plan;
}

inline FoldPlan kfold_plan(std::size_t n, std::size_t k, const Labels& labels, std::uint64_t seed) {
    return kfold_plan(n, k, &labels, seed);
}

inline std::vector<std::size_t> bootstrap_indices(std::size_t n, std::uint64_t seed) {
    if (n == 0) throw ModelError("bootstrap_indices: n must be >= 1");
    Rng rng(seed);
    std::vector<std::size_t> out(n);
    for (auto& v : out) v = rng.index(n);
    return out;
}

// ---------------------------------------------------------------------------
// SMOTE

struct SmoteConfig {
    int k_neighbors = 5;
    double ratio = 1.0;  // minority count after synthesis / majority count
    std::uint64_t seed = 0;

    void validate() const {
        if (k_neighbors < 1) throw ConfigError("smote: k_neighbors must be >= 1");
        if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("smote: ratio must lie in (0, 1]");
    }
};

struct SmoteProvenance {
    std::size_t base = 0;      // row index of r in the input
    std::size_t neighbor = 0;  // row index of q in the input
    double u = 0.0;
};

struct SmoteResult {
    Matrix X;  // input rows first, synthetic rows appended
    Labels y;
    std::vector<bool> synthetic;
    std::vector<SmoteProvenance> provenance;  // one per synthetic row, in order
    int minority_label = 1;
    std::string notice;  // set when nothing was synthesized

    std::size_t synthetic_count() const noexcept { return provenance.size(); }
};

/// Columns SMOTE interpolates; booleans and one-hot levels are copied from the base row.
inline bool smote_interpolates(Encoding e) noexcept {
    return e == Encoding::numeric_standardized || e == Encoding::ordinal_code;
}

/// Oversample the smaller class up to ceil(ratio * majority) rows. Neighbours
/// are the k nearest other minority rows by Euclidean distance over all
/// columns, ties to the lower row index. Interpolated values are clamped to the
/// parents' interval so convexity holds exactly despite rounding.
inline SmoteResult smote_augment(const Matrix& X, const Labels& y, const std::vector<FeatureDescriptor>& desc,
                                 const SmoteConfig& cfg) {
    cfg.validate();
    if (y.size() != X.rows()) throw ModelError("smote: label count mismatch");
    if (desc.size() != X.cols()) throw ModelError("smote: descriptor/width mismatch");
    require_binary(y, "smote");

    SmoteResult out;
    out.X = X;
    out.y = y;
    out.synthetic.assign(X.rows(), false);

    const std::size_t pos = count_positive(y), neg = y.size() - pos;
    out.minority_label = pos <= neg ? 1 : 0;
    const std::size_t minority = std::min(pos, neg), majority = std::max(pos, neg);
    const auto target = static_cast<std::size_t>(std::ceil(cfg.ratio * static_cast<double>(majority) - 1e-9));
    if (target <= minority) {
        out.notice = "minority already at target ratio; nothing synthesized";
        return out;
    }
    if (minority < 2)
        throw ModelError("smote: minority class has " + std::to_string(minority) + " rows, need at least 2");

    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < y.size(); ++i)
        if (y[i] == out.minority_label) members.push_back(i);
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(cfg.k_neighbors), members.size() - 1);
    const std::size_t p = X.cols();

    std::vector<std::vector<std::size_t>> neighbours(members.size());
    auto neighbours_of = [&](std::size_t m) -> const std::vector<std::size_t>& {
        auto& nb = neighbours[m];
        if (!nb.empty()) return nb;
        std::vector<std::pair<double, std::size_t>> d;
        d.reserve(members.size() - 1);
        const auto a = X.row(members[m]);
        for (std::size_t o = 0; o < members.size(); ++o) {
            if (o == m) continue;
            const auto b = X.row(members[o]);
            double s = 0.0;
            for (std::size_t j = 0; j < p; ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
            d.emplace_back(s, members[o]);
        }
        std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
        for (std::size_t t = 0; t < k; ++t) nb.push_back(d[t].second);
        return nb;
    };

    Rng rng(cfg.seed);
    std::vector<double> row(p);
    for (std::size_t s = minority; s < target; ++s) {
        const std::size_t m = rng.index(members.size());
        const auto& nb = neighbours_of(m);
        const std::size_t r = members[m];
        const std::size_t q = nb[rng.index(nb.size())];
        const double u = rng.uniform_closed();
        const auto xr = X.row(r), xq = X.row(q);
        for (std::size_t j = 0; j < p; ++j) {
            if (smote_interpolates(desc[j].encoding)) {
                const double v = xr[j] + u * (xq[j] - xr[j]);
                row[j] = std::clamp(v, std::min(xr[j], xq[j]), std::max(xr[j], xq[j]));
            } else {
                row[j] = xr[j];
            }
        }
        out.X.append_row(row);
        out.y.push_back(out.minority_label);
        out.synthetic.push_back(true);
        out.provenance.push_back({r, q, u});
    }
    return out;
}

}  // namespace dropout
