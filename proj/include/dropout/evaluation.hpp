#pragma once

// Confusion-matrix metrics, AUROC, F-beta and the nested cross-validation
// driver with inner-loop hyperparameter selection.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dropout/common.hpp"
#include "dropout/ensembles.hpp"
#include "dropout/features.hpp"
#include "dropout/linmodel.hpp"
#include "dropout/resampling.hpp"
#include "dropout/rng.hpp"

namespace dropout {

// ---------------------------------------------------------------------------
// Point metrics

struct ConfusionMatrix {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

    std::size_t total() const noexcept { return tp + fp + fn + tn; }
    std::optional<double> tpr() const { return tp + fn ? std::optional(double(tp) / double(tp + fn)) : std::nullopt; }
    std::optional<double> fpr() const { return fp + tn ? std::optional(double(fp) / double(fp + tn)) : std::nullopt; }
    std::optional<double> precision() const {
        return tp + fp ? std::optional(double(tp) / double(tp + fp)) : std::nullopt;
    }
    std::optional<double> recall() const { return tpr(); }

    ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
        tn += o.tn;
        return *this;
    }
    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

/// Positive = dropout = 1.
inline ConfusionMatrix confusion(std::span<const int> labels, std::span<const int> predicted) {
    if (labels.size() != predicted.size()) throw ModelError("confusion: length mismatch");
    require_binary(labels, "confusion");
    require_binary(predicted, "confusion");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i])
            ++(predicted[i] ? cm.tp : cm.fn);
        else
            ++(predicted[i] ? cm.fp : cm.tn);
    }
    return cm;
}

/// Rank statistic (#{pos > neg} + #{ties}/2) / (P N). Empty when a class is
/// absent. The numerator is accumulated in integers as 2*wins + ties.
inline std::optional<double> roc_auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw ModelError("roc_auc: length mismatch");
    require_binary(labels, "roc_auc");
    const std::size_t n = scores.size();
    std::vector<std::size_t> order = iota_indices(n);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    std::uint64_t P = 0, N = 0, twice = 0, neg_below = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        std::uint64_t gp = 0, gn = 0;
        while (j < n && scores[order[j]] == scores[order[i]]) {
            if (std::isnan(scores[order[j]])) throw ModelError("roc_auc: NaN score");
            (labels[order[j]] ? gp : gn) += 1;
            ++j;
        }
        twice += 2 * gp * neg_below + gp * gn;
        neg_below += gn;
        P += gp;
        N += gn;
        i = j;
    }
    if (P == 0 || N == 0) return std::nullopt;
    return static_cast<double>(twice) / static_cast<double>(2 * P * N);
}

inline double f_beta(double precision, double recall, double beta) {
    const double b2 = beta * beta;
    const double den = b2 * precision + recall;
    return den > 0.0 ? (1.0 + b2) * precision * recall / den : 0.0;
}

/// F_beta = (1+b^2) P R / (b^2 P + R). Zero when TP = 0 but errors exist;
/// empty when TP = FP = FN = 0.
inline std::optional<double> f_beta(const ConfusionMatrix& cm, double beta) {
    if (!(beta > 0.0)) throw ConfigError("f_beta: beta must be > 0");
    if (cm.tp == 0) {
        if (cm.fp == 0 && cm.fn == 0) return std::nullopt;
        return 0.0;
    }
    const double p = double(cm.tp) / double(cm.tp + cm.fp);
    const double r = double(cm.tp) / double(cm.tp + cm.fn);
    return f_beta(p, r, beta);
}

// ---------------------------------------------------------------------------
// Nested cross-validation

enum class ClassifierId { logistic, forest, adaboost };
enum class SelectionMetric { auroc, f2 };

inline std::string_view to_string(ClassifierId c) {
    switch (c) {
        case ClassifierId::logistic: return "logistic";
        case ClassifierId::forest: return "forest";
        case ClassifierId::adaboost: return "adaboost";
    }
    return "?";
}

inline ClassifierId classifier_from(std::string_view s) {
    if (s == "logistic") return ClassifierId::logistic;
    if (s == "forest") return ClassifierId::forest;
    if (s == "adaboost") return ClassifierId::adaboost;
    throw ConfigError("unknown classifier '" + std::string(s) + "'");
}

struct CvConfig {
    std::size_t outer_k = 10;
    std::size_t inner_k = 3;
    std::vector<double> lambdas = {1e-4, 6.812920690579608e-4, 4.641588833612782e-3, 3.1622776601683795e-2,
                                   0.21544346900318834, 1.4677992676220695, 10.0};
    std::vector<double> alphas = {0.0, 0.25, 0.5, 0.75, 1.0};
    std::vector<int> forest_trees = {200, 500};
    std::vector<int> boost_rounds = {100, 200};
    std::vector<int> boost_depths = {1, 2, 3};
    SelectionMetric selection = SelectionMetric::auroc;
    double threshold = 0.5;
    bool smote = false;
    SmoteConfig smote_config{};
    ElasticNetConfig logistic_base{};  // lambda and alpha overridden by the grid
    TreeConfig forest_tree{};
    AlphaForm alpha_form = AlphaForm::log;
    BoostVariant boost_variant = BoostVariant::resample;
    std::uint64_t seed = 0;

    void validate() const {
        if (outer_k < 2) throw ConfigError("cv: outer_k must be >= 2");
        if (inner_k < 2) throw ConfigError("cv: inner_k must be >= 2");
        if (lambdas.empty() || alphas.empty() || forest_trees.empty() || boost_rounds.empty() || boost_depths.empty())
            throw ConfigError("cv: hyperparameter grids must be non-empty");
        for (double l : lambdas)
            if (!(l >= 0.0)) throw ConfigError("cv: lambda grid values must be >= 0");
        for (double a : alphas)
            if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("cv: alpha grid values must lie in [0,1]");
        for (int b : forest_trees)
            if (b < 1) throw ConfigError("cv: forest sizes must be >= 1");
        for (int t : boost_rounds)
            if (t < 1) throw ConfigError("cv: boosting rounds must be >= 1");
        for (int d : boost_depths)
            if (d < 1) throw ConfigError("cv: boosting depths must be >= 1");
        if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("cv: threshold must lie in (0,1)");
        smote_config.validate();
    }
};

struct Hyper {
    double lambda = 0.0, alpha = 0.0;
    int trees = 0;
    int rounds = 0, depth = 0;

    friend bool operator==(const Hyper&, const Hyper&) = default;
};

inline std::string describe(ClassifierId c, const Hyper& h) {
    std::ostringstream s;
    switch (c) {
        case ClassifierId::logistic: s << "lambda=" << h.lambda << " alpha=" << h.alpha; break;
        case ClassifierId::forest: s << "B=" << h.trees; break;
        case ClassifierId::adaboost: s << "T=" << h.rounds << " depth=" << h.depth; break;
    }
    return s.str();
}

/// Candidate grid in preference order: stronger regularization and smaller
/// models first, so the first maximum wins ties.
inline std::vector<Hyper> candidate_grid(ClassifierId c, const CvConfig& cv) {
    std::vector<Hyper> out;
    if (c == ClassifierId::logistic) {
        std::vector<double> l = cv.lambdas, a = cv.alphas;
        std::sort(l.rbegin(), l.rend());
        std::sort(a.rbegin(), a.rend());
        for (double lv : l)
            for (double av : a) out.push_back({lv, av, 0, 0, 0});
    } else if (c == ClassifierId::forest) {
        std::vector<int> b = cv.forest_trees;
        std::sort(b.begin(), b.end());
        for (int v : b) out.push_back({0, 0, v, 0, 0});
    } else {
        std::vector<int> t = cv.boost_rounds, d = cv.boost_depths;
        std::sort(t.begin(), t.end());
        std::sort(d.begin(), d.end());
        for (int tv : t)
            for (int dv : d) out.push_back({0, 0, 0, tv, dv});
    }
    return out;
}

struct HygieneAudit {
    std::size_t checks = 0;
    std::size_t violations = 0;
    std::vector<std::string> details;

    void check(bool ok, const std::string& what) {
        ++checks;
        if (!ok) {
            ++violations;
            if (details.size() < 20) details.push_back(what);
        }
    }
    HygieneAudit& operator+=(const HygieneAudit& o) {
        checks += o.checks;
        violations += o.violations;
        for (const auto& d : o.details)
            if (details.size() < 20) details.push_back(d);
        return *this;
    }
};

struct FoldResult {
    std::size_t fold = 0;
    bool skipped = false;
    std::string skip_reason;
    std::size_t test_rows = 0, test_positives = 0;
    std::size_t train_rows = 0, synthetic_rows = 0;
    Hyper selected;
    double inner_score = std::numeric_limits<double>::quiet_NaN();
    ConfusionMatrix cm;
    std::optional<double> auroc, f2, precision, recall;
    std::vector<double> importance;  // per column, tree models only
    std::vector<double> test_scores;
    Labels test_labels;
};

struct MetricsReport {
    ClassifierId classifier = ClassifierId::logistic;
    Task task;
    std::size_t rows = 0, positives = 0, cols = 0;
    std::vector<FoldResult> folds;
    bool evaluable = true;
    std::string unevaluable_reason;
    std::optional<double> auroc, f2, precision, recall, pooled_auroc;
    ConfusionMatrix confusion_total;
    std::vector<std::string> warnings;
    HygieneAudit hygiene;

    std::size_t evaluated_folds() const {
        return static_cast<std::size_t>(std::count_if(folds.begin(), folds.end(), [](const FoldResult& f) {
            return !f.skipped;
        }));
    }

    /// Mean column importance over evaluated folds.
    std::vector<double> mean_importance() const {
        std::vector<double> out;
        std::size_t n = 0;
        for (const auto& f : folds) {
            if (f.skipped || f.importance.empty()) continue;
            if (out.empty()) out.assign(f.importance.size(), 0.0);
            for (std::size_t j = 0; j < out.size(); ++j) out[j] += f.importance[j];
            ++n;
        }
        for (double& v : out) v /= static_cast<double>(n);
        return out;
    }
};

namespace detail {

/// Scores on held-out rows for every candidate of one classifier, after a
/// single fit per shared structure (lambda path, largest forest, longest boost).
struct GridScorer {
    ClassifierId classifier;
    const CvConfig& cv;
    std::vector<Hyper> grid;

    std::vector<std::optional<double>> score(const Matrix& Xtr, const Labels& ytr, const Matrix& Xva,
                                             const Labels& yva, std::uint64_t seed) const {
        std::vector<std::optional<double>> out(grid.size());
        auto metric = [&](const std::vector<double>& s, const Labels& cls) -> std::optional<double> {
            if (cv.selection == SelectionMetric::auroc) return roc_auc(s, yva);
            return f_beta(confusion(yva, cls), 2.0);
        };
        if (classifier == ClassifierId::logistic) {
            const LogisticDesign D(Xtr);
            std::vector<double> alphas;
            for (const auto& h : grid)
                if (std::find(alphas.begin(), alphas.end(), h.alpha) == alphas.end()) alphas.push_back(h.alpha);
            for (double a : alphas) {
                std::vector<double> warm;
                // grid holds lambdas in descending order: a warm-started path
                for (std::size_t g = 0; g < grid.size(); ++g) {
                    if (grid[g].alpha != a) continue;
                    ElasticNetConfig ec = cv.logistic_base;
                    ec.lambda = grid[g].lambda;
                    ec.alpha = a;
                    auto m = fit_logistic(D, ytr, ec, warm.empty() ? nullptr : &warm);
                    warm = m.beta;
                    auto p = predict_proba(m, Xva);
                    Labels cls(p.size());
                    for (std::size_t i = 0; i < p.size(); ++i) cls[i] = p[i] >= cv.threshold ? 1 : 0;
                    out[g] = metric(p, cls);
                }
            }
        } else if (classifier == ClassifierId::forest) {
            ForestConfig fc;
            fc.trees = 0;
            for (const auto& h : grid) fc.trees = std::max(fc.trees, h.trees);
            fc.tree = cv.forest_tree;
            fc.seed = seed;
            const auto f = fit_forest(Xtr, ytr, fc);
            for (std::size_t g = 0; g < grid.size(); ++g) {
                auto pr = forest_predict(f, Xva, static_cast<std::size_t>(grid[g].trees));
                for (std::size_t i = 0; i < pr.scores.size(); ++i)
                    pr.classes[i] = pr.scores[i] >= cv.threshold ? 1 : 0;
                out[g] = metric(pr.scores, pr.classes);
            }
        } else {
            const BinnedMatrix B(Xtr);
            std::vector<int> depths;
            for (const auto& h : grid)
                if (std::find(depths.begin(), depths.end(), h.depth) == depths.end()) depths.push_back(h.depth);
            for (int d : depths) {
                BoostConfig bc;
                bc.rounds = 0;
                for (const auto& h : grid)
                    if (h.depth == d) bc.rounds = std::max(bc.rounds, h.rounds);
                bc.depth = d;
                bc.alpha_form = cv.alpha_form;
                bc.variant = cv.boost_variant;
                bc.seed = derive_seed(seed, {static_cast<std::uint64_t>(d)});
                const auto m = fit_adaboost(B, ytr, bc);
                for (std::size_t g = 0; g < grid.size(); ++g) {
                    if (grid[g].depth != d) continue;
                    auto pr = boost_predict(m, Xva, static_cast<std::size_t>(grid[g].rounds));
                    for (std::size_t i = 0; i < pr.scores.size(); ++i)
                        pr.classes[i] = logistic(2.0 * pr.scores[i]) >= cv.threshold ? 1 : 0;
                    out[g] = metric(pr.scores, pr.classes);
                }
            }
        }
        return out;
    }
};

struct FittedScores {
    std::vector<double> scores;
    Labels classes;
    std::vector<double> importance;
};

inline FittedScores fit_and_score(ClassifierId c, const Hyper& h, const CvConfig& cv, const Matrix& Xtr,
                                  const Labels& ytr, const Matrix& Xte, std::uint64_t seed) {
    FittedScores r;
    if (c == ClassifierId::logistic) {
        ElasticNetConfig ec = cv.logistic_base;
        ec.lambda = h.lambda;
        ec.alpha = h.alpha;
        const auto m = fit_logistic(Xtr, ytr, ec);
        r.scores = predict_proba(m, Xte);
        r.classes.resize(r.scores.size());
        for (std::size_t i = 0; i < r.scores.size(); ++i) r.classes[i] = r.scores[i] >= cv.threshold ? 1 : 0;
    } else if (c == ClassifierId::forest) {
        ForestConfig fc;
        fc.trees = h.trees;
        fc.tree = cv.forest_tree;
        fc.seed = seed;
        const auto f = fit_forest(Xtr, ytr, fc);
        auto pr = forest_predict(f, Xte);
        r.scores = std::move(pr.scores);
        r.classes.resize(r.scores.size());
        for (std::size_t i = 0; i < r.scores.size(); ++i) r.classes[i] = r.scores[i] >= cv.threshold ? 1 : 0;
        r.importance = impurity_importance(f);
    } else {
        BoostConfig bc;
        bc.rounds = h.rounds;
        bc.depth = h.depth;
        bc.alpha_form = cv.alpha_form;
        bc.variant = cv.boost_variant;
        bc.seed = derive_seed(seed, {static_cast<std::uint64_t>(h.depth)});
        const auto m = fit_adaboost(Xtr, ytr, bc);
        auto pr = boost_predict(m, Xte);
        r.scores = std::move(pr.scores);
        r.classes.resize(r.scores.size());
        for (std::size_t i = 0; i < r.scores.size(); ++i)
            r.classes[i] = logistic(2.0 * r.scores[i]) >= cv.threshold ? 1 : 0;
        r.importance = impurity_importance(m);
    }
    return r;
}

inline std::optional<double> mean_defined(const std::vector<std::optional<double>>& v) {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& x : v)
        if (x) {
            s += *x;
            ++n;
        }
    if (n == 0) return std::nullopt;
    return s / static_cast<double>(n);
}

}  // namespace detail

/// Stratified outer folds; per fold: standardize on outer-train rows,
/// optionally SMOTE them, choose hyperparameters by inner stratified CV on the
/// (augmented) training rows, refit and score the untouched test fold.
/// AdaBoost hard labels use the margin mapped through logistic(2m), which
/// at threshold 0.5 is the sign rule.
inline MetricsReport nested_cv(const Dataset& data, ClassifierId classifier, const CvConfig& cv) {
    cv.validate();
    MetricsReport rep;
    rep.classifier = classifier;
    rep.task = data.task;
    rep.rows = data.rows();
    rep.cols = data.cols();
    rep.positives = count_positive(data.y);
    if (data.descriptors.size() != data.cols()) throw ModelError("nested_cv: descriptor/width mismatch");

    if (rep.positives == 0 || rep.positives == rep.rows) {
        rep.evaluable = false;
        rep.unevaluable_reason = rep.positives == 0 ? "no dropouts" : "no non-dropouts";
        return rep;
    }
    if (rep.rows < cv.outer_k) {
        rep.evaluable = false;
        rep.unevaluable_reason = "fewer rows than outer folds";
        return rep;
    }

    const FoldPlan outer = kfold_plan(data.rows(), cv.outer_k, data.y, derive_seed(cv.seed, {0}));
    for (const auto& w : outer.warnings) rep.warnings.push_back("outer: " + w);
    const detail::GridScorer scorer{classifier, cv, candidate_grid(classifier, cv)};

    for (std::size_t f = 0; f < cv.outer_k; ++f) {
        FoldResult fr;
        fr.fold = f;
        const auto test = outer.test_indices(f);
        const auto train = outer.train_indices(f);
        std::vector<char> in_test(data.rows(), 0);
        for (std::size_t i : test) in_test[i] = 1;
        fr.test_rows = test.size();
        fr.train_rows = train.size();
        for (std::size_t i : test) fr.test_positives += static_cast<std::size_t>(data.y[i]);
        const std::size_t train_pos = rep.positives - fr.test_positives;

        if (fr.test_positives == 0 || fr.test_positives == test.size()) {
            fr.skipped = true;
            fr.skip_reason = fr.test_positives == 0 ? "test fold has no positives" : "test fold has no negatives";
            rep.folds.push_back(std::move(fr));
            continue;
        }
        if (train_pos == 0 || train_pos == train.size()) {
            fr.skipped = true;
            fr.skip_reason = "training partition has a single class";
            rep.folds.push_back(std::move(fr));
            continue;
        }

        HygieneAudit audit;
        const std::string tag = "fold " + std::to_string(f) + ": ";
        const Standardizer st = fit_standardizer(data.X, data.descriptors, train);
        for (std::size_t i : train) audit.check(!in_test[i], tag + "standardizer fit row " + std::to_string(i));

        Matrix Xtr = st.apply(data.X.select_rows(train));
        Labels ytr;
        for (std::size_t i : train) ytr.push_back(data.y[i]);
        // origin[r] lists the dataset rows behind training row r
        std::vector<std::vector<std::size_t>> origin;
        for (std::size_t i : train) origin.push_back({i});

        if (cv.smote) {
            for (std::size_t i : train) audit.check(!in_test[i], tag + "SMOTE input row " + std::to_string(i));
            SmoteConfig sc = cv.smote_config;
            sc.seed = derive_seed(cv.seed, {2, f});
            try {
                auto sm = smote_augment(Xtr, ytr, data.descriptors, sc);
                for (const auto& pv : sm.provenance) origin.push_back({train[pv.base], train[pv.neighbor]});
                Xtr = std::move(sm.X);
                ytr = std::move(sm.y);
                fr.synthetic_rows = sm.synthetic_count();
                if (!sm.notice.empty()) rep.warnings.push_back(tag + sm.notice);
            } catch (const ModelError& e) {
                rep.warnings.push_back(tag + "SMOTE skipped: " + e.what());
            }
        }

        // Inner loop.
        const std::size_t inner_k = std::min(cv.inner_k, std::min(count_positive(ytr), ytr.size() - count_positive(ytr)));
        std::vector<std::vector<std::optional<double>>> per_combo(scorer.grid.size());
        if (inner_k >= 2) {
            const FoldPlan inner = kfold_plan(ytr.size(), inner_k, ytr, derive_seed(cv.seed, {1, f}));
            for (const auto& w : inner.warnings) rep.warnings.push_back(tag + "inner: " + w);
            for (std::size_t g = 0; g < inner_k; ++g) {
                const auto itr = inner.train_indices(g), iva = inner.test_indices(g);
                for (std::size_t r : itr)
                    for (std::size_t o : origin[r])
                        audit.check(!in_test[o], tag + "inner training row from " + std::to_string(o));
                for (std::size_t r : iva)
                    for (std::size_t o : origin[r])
                        audit.check(!in_test[o], tag + "inner validation row from " + std::to_string(o));
                Labels y_itr, y_iva;
                for (std::size_t r : itr) y_itr.push_back(ytr[r]);
                for (std::size_t r : iva) y_iva.push_back(ytr[r]);
                const std::size_t ip = count_positive(y_itr);
                if (ip == 0 || ip == y_itr.size()) continue;
                if (scorer.grid.size() == 1) continue;  // nothing to select
                auto s = scorer.score(Xtr.select_rows(itr), y_itr, Xtr.select_rows(iva), y_iva,
                                      derive_seed(cv.seed, {3, f, g}));
                for (std::size_t c = 0; c < s.size(); ++c) per_combo[c].push_back(s[c]);
            }
        } else {
            rep.warnings.push_back(tag + "too few minority rows for inner CV; first grid candidate used");
        }
        std::size_t best = 0;
        double best_score = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < scorer.grid.size(); ++c) {
            const auto m = detail::mean_defined(per_combo[c]);
            if (m && *m > best_score) {
                best_score = *m;
                best = c;
            }
        }
        fr.selected = scorer.grid[best];
        if (std::isfinite(best_score)) fr.inner_score = best_score;

        const Matrix Xte = st.apply(data.X.select_rows(test));
        Labels yte;
        for (std::size_t i : test) yte.push_back(data.y[i]);
        auto fit = detail::fit_and_score(classifier, fr.selected, cv, Xtr, ytr, Xte, derive_seed(cv.seed, {4, f}));
        fr.cm = confusion(yte, fit.classes);
        fr.auroc = roc_auc(fit.scores, yte);
        fr.f2 = f_beta(fr.cm, 2.0);
        fr.precision = fr.cm.precision();
        fr.recall = fr.cm.recall();
        fr.importance = std::move(fit.importance);
        fr.test_scores = std::move(fit.scores);
        fr.test_labels = std::move(yte);
        rep.hygiene += audit;
        rep.folds.push_back(std::move(fr));
    }

    std::vector<std::optional<double>> au, f2, pr, rc;
    std::vector<double> pooled_s;
    Labels pooled_y;
    for (const auto& fr : rep.folds) {
        if (fr.skipped) continue;
        au.push_back(fr.auroc);
        f2.push_back(fr.f2);
        pr.push_back(fr.precision);
        rc.push_back(fr.recall);
        rep.confusion_total += fr.cm;
        pooled_s.insert(pooled_s.end(), fr.test_scores.begin(), fr.test_scores.end());
        pooled_y.insert(pooled_y.end(), fr.test_labels.begin(), fr.test_labels.end());
    }
    if (au.empty()) {
        rep.evaluable = false;
        rep.unevaluable_reason = "all outer folds skipped";
        return rep;
    }
    rep.auroc = detail::mean_defined(au);
    rep.f2 = detail::mean_defined(f2);
    rep.precision = detail::mean_defined(pr);
    rep.recall = detail::mean_defined(rc);
    rep.pooled_auroc = roc_auc(pooled_s, pooled_y);
    return rep;
}

// ---------------------------------------------------------------------------
// Report serialization

namespace detail {
inline nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }
inline nlohmann::json cm_json(const ConfusionMatrix& c) {
    return {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}};
}
}  // namespace detail

inline nlohmann::json to_json(ClassifierId c, const Hyper& h) {
    switch (c) {
        case ClassifierId::logistic: return {{"lambda", h.lambda}, {"alpha", h.alpha}};
        case ClassifierId::forest: return {{"trees", h.trees}};
        case ClassifierId::adaboost: return {{"rounds", h.rounds}, {"depth", h.depth}};
    }
    return {};
}

inline nlohmann::json to_json(const MetricsReport& r) {
    nlohmann::json folds = nlohmann::json::array();
    for (const auto& f : r.folds) {
        nlohmann::json j = {{"fold", f.fold}, {"skipped", f.skipped}};
        if (f.skipped) {
            j["reason"] = f.skip_reason;
        } else {
            j["test_rows"] = f.test_rows;
            j["test_positives"] = f.test_positives;
            j["train_rows"] = f.train_rows;
            j["synthetic_rows"] = f.synthetic_rows;
            j["selected"] = to_json(r.classifier, f.selected);
            j["inner_score"] = std::isfinite(f.inner_score) ? nlohmann::json(f.inner_score) : nlohmann::json();
            j["confusion"] = detail::cm_json(f.cm);
            j["auroc"] = detail::opt_json(f.auroc);
            j["f2"] = detail::opt_json(f.f2);
            j["precision"] = detail::opt_json(f.precision);
            j["recall"] = detail::opt_json(f.recall);
        }
        folds.push_back(std::move(j));
    }
    nlohmann::json j = {{"classifier", to_string(r.classifier)},
                        {"task", to_string(r.task.kind)},
                        {"week", r.task.week},
                        {"lag", r.task.lag},
                        {"rows", r.rows},
                        {"positives", r.positives},
                        {"columns", r.cols},
                        {"evaluable", r.evaluable},
                        {"folds", folds},
                        {"warnings", r.warnings},
                        {"hygiene", {{"checks", r.hygiene.checks}, {"violations", r.hygiene.violations}}}};
    if (!r.evaluable) j["reason"] = r.unevaluable_reason;
    j["aggregate"] = {{"auroc", detail::opt_json(r.auroc)},
                      {"f2", detail::opt_json(r.f2)},
                      {"precision", detail::opt_json(r.precision)},
                      {"recall", detail::opt_json(r.recall)},
                      {"pooled_auroc", detail::opt_json(r.pooled_auroc)},
                      {"confusion", detail::cm_json(r.confusion_total)}};
    return j;
}

/// Aligned-column text rendering of one report.
inline std::string to_text(const MetricsReport& r) {
    std::ostringstream os;
    auto num = [](const std::optional<double>& v) {
        std::ostringstream s;
        if (v)
            s << std::fixed << std::setprecision(4) << *v;
        else
            s << "n/a";
        return s.str();
    };
    os << to_string(r.classifier) << "  task=" << to_string(r.task.kind) << " week=" << r.task.week
       << " lag=" << r.task.lag << "  rows=" << r.rows << " positives=" << r.positives << '\n';
    if (!r.evaluable) {
        os << "  unevaluable: " << r.unevaluable_reason << '\n';
        return os.str();
    }
    os << std::left << "  " << std::setw(6) << "fold" << std::setw(9) << "auroc" << std::setw(9) << "f2"
       << std::setw(11) << "precision" << std::setw(9) << "recall" << std::setw(20) << "tp/fp/fn/tn"
       << "selected\n";
    for (const auto& f : r.folds) {
        os << "  " << std::setw(6) << f.fold;
        if (f.skipped) {
            os << "skipped: " << f.skip_reason << '\n';
            continue;
        }
        const std::string cm = std::to_string(f.cm.tp) + "/" + std::to_string(f.cm.fp) + "/" +
                               std::to_string(f.cm.fn) + "/" + std::to_string(f.cm.tn);
        os << std::setw(9) << num(f.auroc) << std::setw(9) << num(f.f2) << std::setw(11) << num(f.precision)
           << std::setw(9) << num(f.recall) << std::setw(20) << cm << describe(r.classifier, f.selected) << '\n';
    }
    os << "  " << std::setw(6) << "mean" << std::setw(9) << num(r.auroc) << std::setw(9) << num(r.f2)
       << std::setw(11) << num(r.precision) << std::setw(9) << num(r.recall) << '\n';
    os << "  pooled auroc " << num(r.pooled_auroc) << "  hygiene " << r.hygiene.violations << "/"
       << r.hygiene.checks << " violations\n";
    return os.str();
}

}  // namespace dropout
