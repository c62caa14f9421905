#pragma once

// Random forest (bagged unpruned trees, mode vote) and AdaBoost over shallow
// trees, plus impurity-based column importance for both.

#include <cmath>
#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dropout/common.hpp"
#include "dropout/features.hpp"
#include "dropout/resampling.hpp"
#include "dropout/rng.hpp"
#include "dropout/trees.hpp"

namespace dropout {

// ---------------------------------------------------------------------------
// Random forest

struct ForestConfig {
    int trees = 500;
    TreeConfig tree{};  // mtry 0 here means ceil(sqrt(p))
    std::uint64_t seed = 0;

    void validate() const {
        if (trees < 1) throw ConfigError("forest: number of trees must be >= 1");
    }
};

struct Forest {
    std::vector<Tree> trees;
    std::vector<FeatureDescriptor> descriptors;
    ForestConfig config;
    std::size_t width = 0;
};

struct ClassScores {
    Labels classes;
    std::vector<double> scores;  // forest: P(class 1); boosting: margin
};

inline std::size_t default_mtry(std::size_t p) {
    auto m = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(p))));
    return std::clamp<std::size_t>(m, 1, std::max<std::size_t>(p, 1));
}

/// Tree b uses the stream derived from (seed, b), so any prefix of a larger
/// forest with the same seed is itself a valid smaller forest.
inline Forest fit_forest(const BinnedMatrix& B, std::span<const int> y, const ForestConfig& cfg) {
    cfg.validate();
    const std::size_t n = B.rows();
    if (y.size() != n) throw ModelError("fit_forest: label count mismatch");
    require_binary(y, "fit_forest");
    const std::size_t pos = count_positive(y);
    if (pos == 0 || pos == n) throw ModelError("fit_forest: labels contain a single class");

    Forest f;
    f.config = cfg;
    f.width = B.cols();
    TreeConfig tc = cfg.tree;
    if (tc.mtry == 0) tc.mtry = static_cast<int>(default_mtry(B.cols()));
    f.config.tree = tc;
    std::vector<double> w(n);
    for (int b = 0; b < cfg.trees; ++b) {
        const std::uint64_t s = derive_seed(cfg.seed, {static_cast<std::uint64_t>(b)});
        std::fill(w.begin(), w.end(), 0.0);
        for (std::size_t i : bootstrap_indices(n, s)) w[i] += 1.0;
        Rng rng(derive_seed(s, {1}));
        f.trees.push_back(grow_tree(B, y, w, tc, rng));
    }
    return f;
}

inline Forest fit_forest(const Matrix& X, std::span<const int> y, const ForestConfig& cfg) {
    if (X.rows() == 0) throw ModelError("fit_forest: no rows");
    return fit_forest(BinnedMatrix(X), y, cfg);
}

inline Forest fit_forest(const Dataset& d, const ForestConfig& cfg) {
    Forest f = fit_forest(d.X, d.y, cfg);
    f.descriptors = d.descriptors;
    return f;
}

/// Predict with the first `use_trees` trees (all when 0). Exact vote ties go
/// to class 1.
inline ClassScores forest_predict(const Forest& f, const Matrix& X, std::size_t use_trees = 0) {
    if (X.cols() != f.width) throw ModelError("forest_predict: width mismatch");
    const std::size_t T = use_trees == 0 ? f.trees.size() : std::min(use_trees, f.trees.size());
    ClassScores out;
    out.classes.resize(X.rows());
    out.scores.resize(X.rows());
    for (std::size_t i = 0; i < X.rows(); ++i) {
        std::size_t votes = 0;
        for (std::size_t t = 0; t < T; ++t) votes += static_cast<std::size_t>(tree_predict(f.trees[t], X.row(i)).predicted_class);
        out.scores[i] = static_cast<double>(votes) / static_cast<double>(T);
        out.classes[i] = 2 * votes >= T ? 1 : 0;
    }
    return out;
}

// ---------------------------------------------------------------------------
// AdaBoost

enum class AlphaForm { log, literal };
enum class BoostVariant { resample, reweight };

inline std::string_view to_string(AlphaForm a) { return a == AlphaForm::log ? "log" : "literal"; }
inline std::string_view to_string(BoostVariant v) { return v == BoostVariant::resample ? "resample" : "reweight"; }

struct BoostConfig {
    int rounds = 200;
    int depth = 1;
    AlphaForm alpha_form = AlphaForm::log;
    BoostVariant variant = BoostVariant::resample;
    double epsilon_floor = 1e-10;
    std::uint64_t seed = 0;

    void validate() const {
        if (rounds < 1) throw ConfigError("adaboost: rounds must be >= 1");
        if (depth < 1) throw ConfigError("adaboost: weak-learner depth must be >= 1");
        if (!(epsilon_floor > 0.0 && epsilon_floor < 0.5)) throw ConfigError("adaboost: epsilon floor must lie in (0, 0.5)");
    }
};

/// Round weight from the weighted error.
inline double boost_alpha(double epsilon, AlphaForm form) {
    const double odds = (1.0 - epsilon) / epsilon;
    return form == AlphaForm::log ? 0.5 * std::log(odds) : 0.5 * odds;
}

struct BoostRound {
    double epsilon = 0.0;     // after flooring
    double alpha = 0.0;
    double weight_sum = 0.0;  // sum of W after renormalisation
    double min_weight = 0.0;
    int attempts = 1;
};

struct BoostModel {
    std::vector<Tree> trees;
    std::vector<double> alpha;
    std::vector<BoostRound> rounds;
    std::vector<FeatureDescriptor> descriptors;
    BoostConfig config;
    std::size_t width = 0;
    bool stopped_early = false;
};

inline BoostModel fit_adaboost(const BinnedMatrix& B, std::span<const int> y, const BoostConfig& cfg) {
    cfg.validate();
    const std::size_t n = B.rows();
    if (y.size() != n) throw ModelError("fit_adaboost: label count mismatch");
    require_binary(y, "fit_adaboost");
    const std::size_t pos = count_positive(y);
    if (pos == 0 || pos == n) throw ModelError("fit_adaboost: labels contain a single class");

    BoostModel m;
    m.config = cfg;
    m.width = B.cols();
    const TreeConfig tc{cfg.depth, 1, 0};
    std::vector<double> W(n, 1.0 / static_cast<double>(n));
    std::vector<double> tw(n), prefix(n);
    std::vector<char> miss(n);
    Rng tree_rng(derive_seed(cfg.seed, {0}));  // unused with mtry = p, kept for the grower interface

    for (int t = 0; t < cfg.rounds; ++t) {
        bool accepted = false;
        Tree h;
        double eps = 0.0;
        int attempt = 0;
        for (; attempt < 2 && !accepted; ++attempt) {
            if (cfg.variant == BoostVariant::resample) {
                double acc = 0.0;
                for (std::size_t i = 0; i < n; ++i) prefix[i] = acc += W[i];
                Rng rng(derive_seed(cfg.seed, {1, static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(attempt)}));
                std::fill(tw.begin(), tw.end(), 0.0);
                for (std::size_t k = 0; k < n; ++k) tw[rng.weighted_index(prefix)] += 1.0;
                // A resample holding a single class still yields a valid leaf.
                h = grow_tree(B, y, tw, tc, tree_rng);
            } else {
                h = grow_tree(B, y, W, tc, tree_rng);
            }
            eps = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                // Route through bins: equivalent to thresholds on the original values.
                const TreeNode* node = &h.nodes[0];
                while (!node->leaf()) {
                    const auto& vals = B.values(static_cast<std::size_t>(node->feature));
                    const double v = vals[B.bin(i, static_cast<std::size_t>(node->feature))];
                    node = &h.nodes[static_cast<std::size_t>(v <= node->threshold ? node->left : node->right)];
                }
                miss[i] = node->predicted_class != y[i];
                if (miss[i]) eps += W[i];
            }
            accepted = eps < 0.5;
            // A deterministic redraw would repeat the same learner.
            if (cfg.variant == BoostVariant::reweight && !accepted) break;
        }
        if (!accepted) {
            m.stopped_early = true;
            break;
        }
        const bool any_miss = eps > 0.0;
        eps = std::max(eps, cfg.epsilon_floor);
        const double a = boost_alpha(eps, cfg.alpha_form);
        if (!std::isfinite(a)) throw ModelError("fit_adaboost: non-finite round weight");
        // Same distribution as raising the misses by e^a, but the literal form
        // can push a past where e^a overflows.
        const double down = any_miss ? std::exp(-a) : 1.0;
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (!miss[i]) W[i] *= down;
            sum += W[i];
        }
        double mn = 1.0, total = 0.0;
        for (double& v : W) {
            v /= sum;
            mn = std::min(mn, v);
            total += v;
        }
        m.trees.push_back(std::move(h));
        m.alpha.push_back(a);
        m.rounds.push_back({eps, a, total, mn, attempt});
    }
    if (m.trees.empty()) throw ModelError("fit_adaboost: zero usable rounds");
    return m;
}

inline BoostModel fit_adaboost(const Matrix& X, std::span<const int> y, const BoostConfig& cfg) {
    if (X.rows() == 0) throw ModelError("fit_adaboost: no rows");
    return fit_adaboost(BinnedMatrix(X), y, cfg);
}

inline BoostModel fit_adaboost(const Dataset& d, const BoostConfig& cfg) {
    BoostModel m = fit_adaboost(d.X, d.y, cfg);
    m.descriptors = d.descriptors;
    return m;
}

/// Margin sum of alpha_t * h_t(x) over the first `use_rounds` rounds (all
/// when 0); class 1 iff margin >= 0.
inline ClassScores boost_predict(const BoostModel& m, const Matrix& X, std::size_t use_rounds = 0) {
    if (X.cols() != m.width) throw ModelError("boost_predict: width mismatch");
    const std::size_t T = use_rounds == 0 ? m.trees.size() : std::min(use_rounds, m.trees.size());
    ClassScores out;
    out.classes.resize(X.rows());
    out.scores.resize(X.rows());
    for (std::size_t i = 0; i < X.rows(); ++i) {
        double margin = 0.0;
        for (std::size_t t = 0; t < T; ++t)
            margin += m.alpha[t] * (tree_predict(m.trees[t], X.row(i)).predicted_class ? 1.0 : -1.0);
        out.scores[i] = margin;
        out.classes[i] = margin >= 0.0 ? 1 : 0;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Importance

namespace detail {

inline void accumulate_decrease(const Tree& t, double weight, std::vector<double>& ri) {
    for (const auto& n : t.nodes)
        if (!n.leaf()) ri[static_cast<std::size_t>(n.feature)] += weight * n.impurity_decrease;
}

inline void normalise_to_100(std::vector<double>& ri) {
    double total = 0.0;
    for (double v : ri) total += v;
    if (total > 0.0)
        for (double& v : ri) v = 100.0 * v / total;
}

}  // namespace detail

/// Summed weighted Gini decrease per column, normalised to sum 100. All zeros
/// when no tree ever split.
inline std::vector<double> impurity_importance(const Forest& f, std::size_t use_trees = 0) {
    std::vector<double> ri(f.width, 0.0);
    const std::size_t T = use_trees == 0 ? f.trees.size() : std::min(use_trees, f.trees.size());
    for (std::size_t t = 0; t < T; ++t) {
        // Each tree's decreases are scaled to its own root mass so trees count equally.
        const double mass = f.trees[t].nodes[0].weight_neg + f.trees[t].nodes[0].weight_pos;
        detail::accumulate_decrease(f.trees[t], 1.0 / mass, ri);
    }
    detail::normalise_to_100(ri);
    return ri;
}

inline std::vector<double> impurity_importance(const BoostModel& m, std::size_t use_rounds = 0) {
    std::vector<double> ri(m.width, 0.0);
    const std::size_t T = use_rounds == 0 ? m.trees.size() : std::min(use_rounds, m.trees.size());
    for (std::size_t t = 0; t < T; ++t) {
        const double mass = m.trees[t].nodes[0].weight_neg + m.trees[t].nodes[0].weight_pos;
        detail::accumulate_decrease(m.trees[t], m.alpha[t] / mass, ri);
    }
    detail::normalise_to_100(ri);
    return ri;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json to_json(const ForestConfig& c) {
    return {{"trees", c.trees},
            {"max_depth", c.tree.max_depth},
            {"min_samples_leaf", c.tree.min_samples_leaf},
            {"mtry", c.tree.mtry},
            {"seed", c.seed}};
}

inline nlohmann::json to_json(const BoostConfig& c) {
    return {{"rounds", c.rounds},
            {"depth", c.depth},
            {"alpha_form", to_string(c.alpha_form)},
            {"variant", to_string(c.variant)},
            {"epsilon_floor", c.epsilon_floor},
            {"seed", c.seed}};
}

inline nlohmann::json to_json(const Forest& f) {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : f.trees) trees.push_back(to_json(t));
    return {{"model", "forest"},
            {"config", to_json(f.config)},
            {"trees", trees},
            {"descriptors", descriptors_to_json(f.descriptors)}};
}

inline nlohmann::json to_json(const BoostModel& m) {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : m.trees) trees.push_back(to_json(t));
    return {{"model", "adaboost"},
            {"config", to_json(m.config)},
            {"trees", trees},
            {"alpha", m.alpha},
            {"stopped_early", m.stopped_early},
            {"descriptors", descriptors_to_json(m.descriptors)}};
}

}  // namespace dropout
