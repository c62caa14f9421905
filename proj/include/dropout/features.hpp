#pragma once

// Design-matrix construction: profile encoding, per-week temporal features,
// task labelling and train-only standardization.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "dropout/common.hpp"
#include "dropout/csv.hpp"
#include "dropout/dataset.hpp"

namespace dropout {

enum class Encoding { one_hot_level, ordinal_code, numeric_standardized, boolean };

inline std::string_view to_string(Encoding e) {
    switch (e) {
        case Encoding::one_hot_level: return "one_hot_level";
        case Encoding::ordinal_code: return "ordinal_code";
        case Encoding::numeric_standardized: return "numeric_standardized";
        case Encoding::boolean: return "boolean";
    }
    return "?";
}

struct FeatureDescriptor {
    std::string feature_id;         // e.g. "fp", "a", "pd_f"
    std::optional<int> source_week;  // temporal features only
    Encoding encoding = Encoding::numeric_standardized;
    std::string level;     // one-hot level name, or "NC" for indicators
    std::string group_id;  // un-lagged feature family

    /// Column header "featureid[_wN][_level]".
    std::string header() const {
        std::string h = feature_id;
        if (source_week) h += "_w" + std::to_string(*source_week);
        if (!level.empty()) h += "_" + level;
        return h;
    }

    bool temporal() const noexcept { return source_week.has_value(); }

    friend bool operator==(const FeatureDescriptor&, const FeatureDescriptor&) = default;
};

enum class TaskKind { state, exact_week };

inline std::string_view to_string(TaskKind k) { return k == TaskKind::state ? "state" : "exact_week"; }

/// Prediction task: target week and lag (highest temporal week used; -1 means
/// profile features only).
struct Task {
    TaskKind kind = TaskKind::state;
    int week = 0;
    int lag = 0;

    friend bool operator==(const Task&, const Task&) = default;
};

struct Dataset {
    Matrix X;
    Labels y;
    std::vector<FeatureDescriptor> descriptors;
    Task task;
    std::vector<std::string> user_ids;

    std::size_t rows() const noexcept { return X.rows(); }
    std::size_t cols() const noexcept { return X.cols(); }

    Dataset select_rows(std::span<const std::size_t> idx) const {
        Dataset d;
        d.X = X.select_rows(idx);
        d.y.reserve(idx.size());
        d.user_ids.reserve(idx.size());
        for (std::size_t i : idx) {
            d.y.push_back(y[i]);
            d.user_ids.push_back(user_ids[i]);
        }
        d.descriptors = descriptors;
        d.task = task;
        return d;
    }
};

struct FeatureOptions {
    bool include_dropped = false;  // italicized questionnaire/forum features and instructor variants
    bool cumulative = false;       // temporal counts over weeks 0..w instead of week w only
};

/// A block of columns with their descriptors, one row per cohort user.
struct FeatureBlock {
    Matrix X;
    std::vector<FeatureDescriptor> descriptors;
};

// ---------------------------------------------------------------------------
// Profile block

/// One-hot nominal fields with an explicit NC column; ordinal fields as codes
/// 0..L-1 plus an NC indicator; biography and objectives as text lengths.
inline FeatureBlock extract_profile(const LabeledCohort& lc, const FeatureOptions& opt = {}) {
    const Cohort& c = lc.cohort;
    const auto& fields = profile_fields();
    FeatureBlock b;

    struct Plan {
        std::size_t field;
        std::size_t first_col;
        std::unordered_map<std::string, std::size_t> level_index;
    };
    std::vector<Plan> plans;
    for (std::size_t f = 0; f < kProfileFieldCount; ++f) {
        const auto& spec = fields[f];
        if (spec.dropped_by_default && !opt.include_dropped) continue;
        Plan p{f, b.descriptors.size(), {}};
        const auto& levels = c.schema.levels[f];
        for (std::size_t l = 0; l < levels.size(); ++l) p.level_index.emplace(levels[l], l);
        switch (spec.kind) {
            case FieldKind::nominal:
                for (const auto& lv : levels)
                    b.descriptors.push_back({spec.id, std::nullopt, Encoding::one_hot_level, lv, spec.id});
                b.descriptors.push_back({spec.id, std::nullopt, Encoding::one_hot_level, "NC", spec.id});
                break;
            case FieldKind::ordinal:
                b.descriptors.push_back({spec.id, std::nullopt, Encoding::ordinal_code, "", spec.id});
                b.descriptors.push_back({spec.id, std::nullopt, Encoding::boolean, "NC", spec.id});
                break;
            case FieldKind::length:
                b.descriptors.push_back({spec.id, std::nullopt, Encoding::numeric_standardized, "", spec.id});
                break;
        }
        plans.push_back(std::move(p));
    }

    b.X = Matrix(c.users.size(), b.descriptors.size());
    for (std::size_t r = 0; r < c.users.size(); ++r) {
        const ProfileRecord& pr = c.users[r].profile;
        for (const auto& p : plans) {
            const auto& spec = fields[p.field];
            if (spec.kind == FieldKind::length) {
                b.X(r, p.first_col) = static_cast<double>(p.field == kBiographyField ? pr.biography_length
                                                                                     : pr.objectives_length);
                continue;
            }
            const std::string& v = pr.answers[p.field];
            std::optional<std::size_t> level;
            if (!v.empty()) {
                auto it = p.level_index.find(v);
                if (it == p.level_index.end())
                    throw DataError("unknown level '" + v + "' for profile feature " + spec.id + " (" + spec.column +
                                    ") of user " + c.users[r].id);
                level = it->second;
            }
            if (spec.kind == FieldKind::nominal) {
                const std::size_t nc_col = p.first_col + c.schema.levels[p.field].size();
                b.X(r, level ? p.first_col + *level : nc_col) = 1.0;
            } else {
                b.X(r, p.first_col) = level ? static_cast<double>(*level) : 0.0;
                b.X(r, p.first_col + 1) = level ? 0.0 : 1.0;
            }
        }
    }
    return b;
}

// ---------------------------------------------------------------------------
// Temporal block

struct TemporalFeatureSpec {
    std::string id;
    Encoding encoding;
    bool dropped_by_default;
};

/// Forum, course-activity and hangout features in questionnaire order.
inline const std::vector<TemporalFeatureSpec>& temporal_features() {
    static const std::vector<TemporalFeatureSpec> t = {
        {"fp", Encoding::numeric_standardized, false},      {"fp_l", Encoding::numeric_standardized, false},
        {"fr_ba", Encoding::numeric_standardized, false},   {"fr_ba_l", Encoding::numeric_standardized, true},
        {"fr_ba_u", Encoding::numeric_standardized, true},  {"fr_ab", Encoding::numeric_standardized, false},
        {"fr_ab_l", Encoding::numeric_standardized, false}, {"fr_ab_p", Encoding::numeric_standardized, true},
        {"fc_ba", Encoding::numeric_standardized, false},   {"fc_ba_l", Encoding::numeric_standardized, true},
        {"fc_ba_u", Encoding::numeric_standardized, true},  {"fc_ab", Encoding::numeric_standardized, false},
        {"fc_ab_l", Encoding::numeric_standardized, false}, {"fc_ab_p", Encoding::numeric_standardized, false},
        {"fr_ba_i", Encoding::numeric_standardized, true},  {"fr_ba_l_i", Encoding::numeric_standardized, true},
        {"fr_ba_u_i", Encoding::numeric_standardized, true}, {"fc_ba_i", Encoding::numeric_standardized, true},
        {"fc_ba_l_i", Encoding::numeric_standardized, true}, {"fc_ba_u_i", Encoding::numeric_standardized, true},
        {"a", Encoding::boolean, false},                     {"ar", Encoding::boolean, false},
        {"gh", Encoding::boolean, false},
    };
    return t;
}

/// Identifiers of every feature family active under the given options.
inline std::vector<std::string> declared_feature_groups(const FeatureOptions& opt = {}) {
    std::vector<std::string> out;
    for (const auto& f : profile_fields())
        if (opt.include_dropped || !f.dropped_by_default) out.push_back(f.id);
    for (const auto& f : temporal_features())
        if (opt.include_dropped || !f.dropped_by_default) out.push_back(f.id);
    return out;
}

namespace detail {

struct WeekAccumulator {
    double fp = 0, fp_len = 0;
    double fr_ba = 0, fr_ba_len = 0;
    std::set<std::string> fr_ba_users;
    double fr_ab = 0, fr_ab_len = 0;
    std::set<std::string> fr_ab_posts;
    double fc_ba = 0, fc_ba_len = 0;
    std::set<std::string> fc_ba_users;
    double fc_ab = 0, fc_ab_len = 0;
    std::set<std::string> fc_ab_posts;
    double fr_ba_i = 0, fr_ba_i_len = 0;
    std::set<std::string> fr_ba_i_users;
    double fc_ba_i = 0, fc_ba_i_len = 0;
    std::set<std::string> fc_ba_i_users;
    bool a = false, ar = false, gh = false;

    static double mean(double sum, double n) { return n > 0 ? sum / n : 0.0; }

    double value(const std::string& id) const {
        if (id == "fp") return fp;
        if (id == "fp_l") return mean(fp_len, fp);
        if (id == "fr_ba") return fr_ba;
        if (id == "fr_ba_l") return mean(fr_ba_len, fr_ba);
        if (id == "fr_ba_u") return static_cast<double>(fr_ba_users.size());
        if (id == "fr_ab") return fr_ab;
        if (id == "fr_ab_l") return mean(fr_ab_len, fr_ab);
        if (id == "fr_ab_p") return static_cast<double>(fr_ab_posts.size());
        if (id == "fc_ba") return fc_ba;
        if (id == "fc_ba_l") return mean(fc_ba_len, fc_ba);
        if (id == "fc_ba_u") return static_cast<double>(fc_ba_users.size());
        if (id == "fc_ab") return fc_ab;
        if (id == "fc_ab_l") return mean(fc_ab_len, fc_ab);
        if (id == "fc_ab_p") return static_cast<double>(fc_ab_posts.size());
        if (id == "fr_ba_i") return fr_ba_i;
        if (id == "fr_ba_l_i") return mean(fr_ba_i_len, fr_ba_i);
        if (id == "fr_ba_u_i") return static_cast<double>(fr_ba_i_users.size());
        if (id == "fc_ba_i") return fc_ba_i;
        if (id == "fc_ba_l_i") return mean(fc_ba_i_len, fc_ba_i);
        if (id == "fc_ba_u_i") return static_cast<double>(fc_ba_i_users.size());
        if (id == "a") return a ? 1.0 : 0.0;
        if (id == "ar") return ar ? 1.0 : 0.0;
        if (id == "gh") return gh ? 1.0 : 0.0;
        throw ModelError("unknown temporal feature " + id);
    }
};

}  // namespace detail

/// Per-user forum/activity features for one week (or weeks 0..week when
/// cumulative). Mean lengths are 0 when the matching count is 0.
inline FeatureBlock extract_temporal(const LabeledCohort& lc, int week, const FeatureOptions& opt = {}) {
    const Cohort& c = lc.cohort;
    if (week < 0 || week >= c.calendar.week_count)
        throw ModelError("extract_temporal: week " + std::to_string(week) + " out of range");
    const auto index = c.user_index();
    std::vector<detail::WeekAccumulator> acc(c.users.size());
    auto in_window = [&](std::int64_t t) {
        const int w = *c.calendar.week_of(t);
        return opt.cumulative ? w <= week : w == week;
    };

    for (const auto& e : c.forum_events) {
        if (!in_window(e.timestamp)) continue;
        const double len = static_cast<double>(e.text_length);
        if (!e.author_is_instructor) {
            auto it = index.find(e.user_id);
            if (it != index.end()) {
                auto& a = acc[it->second];
                switch (e.kind) {
                    case ForumKind::post: a.fp += 1; a.fp_len += len; break;
                    case ForumKind::reply_given:
                        a.fr_ab += 1; a.fr_ab_len += len; a.fr_ab_posts.insert(e.target_post_id);
                        break;
                    case ForumKind::comment_given:
                        a.fc_ab += 1; a.fc_ab_len += len; a.fc_ab_posts.insert(e.target_post_id);
                        break;
                }
            }
        }
        if (e.kind == ForumKind::post || e.target_user_id.empty()) continue;
        auto jt = index.find(e.target_user_id);
        if (jt == index.end()) continue;
        auto& r = acc[jt->second];
        if (e.kind == ForumKind::reply_given) {
            r.fr_ba += 1; r.fr_ba_len += len; r.fr_ba_users.insert(e.user_id);
            if (e.author_is_instructor) { r.fr_ba_i += 1; r.fr_ba_i_len += len; r.fr_ba_i_users.insert(e.user_id); }
        } else {
            r.fc_ba += 1; r.fc_ba_len += len; r.fc_ba_users.insert(e.user_id);
            if (e.author_is_instructor) { r.fc_ba_i += 1; r.fc_ba_i_len += len; r.fc_ba_i_users.insert(e.user_id); }
        }
    }
    for (const auto& e : c.activity_events) {
        if (!in_window(e.timestamp)) continue;
        auto& a = acc[index.at(e.user_id)];
        switch (e.kind) {
            case ActivityKind::assignment_submitted: a.a = true; break;
            case ActivityKind::review_submitted: a.ar = true; break;
            case ActivityKind::hangout_attended: a.gh = true; break;
        }
    }

    FeatureBlock b;
    std::vector<const TemporalFeatureSpec*> active;
    for (const auto& f : temporal_features()) {
        if (f.dropped_by_default && !opt.include_dropped) continue;
        active.push_back(&f);
        b.descriptors.push_back({f.id, week, f.encoding, "", f.id});
    }
    b.X = Matrix(c.users.size(), active.size());
    for (std::size_t r = 0; r < c.users.size(); ++r)
        for (std::size_t j = 0; j < active.size(); ++j) b.X(r, j) = acc[r].value(active[j]->id);
    return b;
}

// ---------------------------------------------------------------------------
// Matrix assembly

/// Profile block and every week block of a cohort, computed once and shared
/// by all (task, week, lag) combinations.
struct FeatureBank {
    FeatureBlock profile;
    std::vector<FeatureBlock> weeks;
    std::vector<std::string> user_ids;
    std::vector<std::optional<int>> dropout_week;
    std::vector<bool> profile_empty;
    int week_count = 0;

    static FeatureBank build(const LabeledCohort& lc, const FeatureOptions& opt = {}) {
        FeatureBank bank;
        bank.profile = extract_profile(lc, opt);
        bank.week_count = lc.cohort.calendar.week_count;
        for (int w = 0; w < bank.week_count; ++w) bank.weeks.push_back(extract_temporal(lc, w, opt));
        for (const auto& u : lc.cohort.users) {
            bank.user_ids.push_back(u.id);
            bank.profile_empty.push_back(u.profile.empty());
        }
        bank.dropout_week = lc.dropout_week;
        return bank;
    }
};

struct AssembleOptions {
    bool include_profile = true;
    bool exclude_empty_profiles = false;
};

/// Build the design matrix for one task. Columns: profile block (optional)
/// followed by week blocks 0..lag. State labels: dropped out by `week`.
/// Exact-week labels: dropped out in `week`, restricted to users still enrolled.
inline Dataset assemble_matrix(const FeatureBank& bank, TaskKind kind, int week, int lag,
                               const AssembleOptions& opt = {}) {
    if (week < 0 || week >= bank.week_count) throw ModelError("assemble_matrix: week out of range");
    if (lag < -1) throw ModelError("assemble_matrix: lag must be >= -1");
    if (lag > week) throw ModelError("assemble_matrix: lag " + std::to_string(lag) + " > week " +
                                     std::to_string(week) + " would use future data");
    if (lag == -1 && !opt.include_profile) throw ModelError("assemble_matrix: profile-only task without profile");

    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < bank.user_ids.size(); ++i) {
        if (opt.exclude_empty_profiles && bank.profile_empty[i]) continue;
        if (kind == TaskKind::exact_week && bank.dropout_week[i] && *bank.dropout_week[i] < week) continue;
        rows.push_back(i);
    }
    if (rows.empty()) throw ModelError("assemble_matrix: no eligible rows for week " + std::to_string(week));

    std::vector<const FeatureBlock*> blocks;
    if (opt.include_profile) blocks.push_back(&bank.profile);
    for (int w = 0; w <= lag; ++w) blocks.push_back(&bank.weeks[static_cast<std::size_t>(w)]);

    Dataset d;
    d.task = {kind, week, lag};
    std::size_t width = 0;
    for (const auto* b : blocks) {
        width += b->descriptors.size();
        d.descriptors.insert(d.descriptors.end(), b->descriptors.begin(), b->descriptors.end());
    }
    d.X = Matrix(rows.size(), width);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        std::size_t col = 0;
        for (const auto* b : blocks) {
            auto src = b->X.row(rows[r]);
            std::copy(src.begin(), src.end(), d.X.row(r).begin() + static_cast<std::ptrdiff_t>(col));
            col += src.size();
        }
        const auto& dw = bank.dropout_week[rows[r]];
        if (kind == TaskKind::state)
            d.y.push_back(dw && *dw <= week ? 1 : 0);
        else
            d.y.push_back(dw && *dw == week ? 1 : 0);
        d.user_ids.push_back(bank.user_ids[rows[r]]);
    }
    return d;
}

inline Dataset assemble_matrix(const LabeledCohort& lc, TaskKind kind, int week, int lag,
                               const AssembleOptions& opt = {}, const FeatureOptions& fopt = {}) {
    return assemble_matrix(FeatureBank::build(lc, fopt), kind, week, lag, opt);
}

// ---------------------------------------------------------------------------
// Standardization

/// Per-column (x - mean) / sd for numeric_standardized columns, with
/// population statistics taken from training rows only. A zero sd is
/// replaced by 1 so constant columns map to 0.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> sd;
    std::vector<bool> active;

    Matrix apply(const Matrix& X) const {
        if (X.cols() != active.size()) throw ModelError("standardizer: width mismatch");
        Matrix out = X;
        for (std::size_t r = 0; r < out.rows(); ++r)
            for (std::size_t j = 0; j < out.cols(); ++j)
                if (active[j]) out(r, j) = (out(r, j) - mean[j]) / sd[j];
        return out;
    }

    Dataset apply(const Dataset& d) const {
        Dataset out = d;
        out.X = apply(d.X);
        return out;
    }
};

inline Standardizer fit_standardizer(const Matrix& X, const std::vector<FeatureDescriptor>& descriptors,
                                     std::span<const std::size_t> train_rows) {
    if (train_rows.empty()) throw ModelError("fit_standardizer: empty training rows");
    if (descriptors.size() != X.cols()) throw ModelError("fit_standardizer: descriptor/width mismatch");
    Standardizer s;
    const std::size_t p = X.cols();
    s.mean.assign(p, 0.0);
    s.sd.assign(p, 1.0);
    s.active.assign(p, false);
    const double n = static_cast<double>(train_rows.size());
    for (std::size_t j = 0; j < p; ++j) {
        if (descriptors[j].encoding != Encoding::numeric_standardized) continue;
        s.active[j] = true;
        double m = 0.0;
        for (std::size_t r : train_rows) m += X(r, j);
        m /= n;
        double v = 0.0;
        for (std::size_t r : train_rows) v += (X(r, j) - m) * (X(r, j) - m);
        const double sd = std::sqrt(v / n);
        s.mean[j] = m;
        s.sd[j] = sd > 0.0 ? sd : 1.0;
    }
    return s;
}

inline Standardizer fit_standardizer(const Dataset& d, std::span<const std::size_t> train_rows) {
    return fit_standardizer(d.X, d.descriptors, train_rows);
}

// ---------------------------------------------------------------------------
// Export

inline nlohmann::json descriptors_to_json(const std::vector<FeatureDescriptor>& ds) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& d : ds) {
        nlohmann::json j = {{"feature_id", d.feature_id},
                            {"encoding", to_string(d.encoding)},
                            {"group_id", d.group_id},
                            {"header", d.header()}};
        j["source_week"] = d.source_week ? nlohmann::json(*d.source_week) : nlohmann::json(nullptr);
        j["level"] = d.level;
        arr.push_back(std::move(j));
    }
    return arr;
}

/// CSV with a leading user_id column and a trailing label column, plus a JSON
/// sidecar describing each feature column and the task.
inline void export_dataset(const Dataset& d, const std::string& csv_path, const std::string& json_path) {
    {
        std::ofstream os(csv_path, std::ios::binary);
        if (!os) throw DataError("cannot write " + csv_path);
        std::vector<std::string> header = {"user_id"};
        for (const auto& desc : d.descriptors) header.push_back(desc.header());
        header.emplace_back("label");
        csv::write_row(os, header);
        char buf[32];
        for (std::size_t r = 0; r < d.rows(); ++r) {
            std::vector<std::string> row = {d.user_ids[r]};
            for (double v : d.X.row(r)) {
                std::snprintf(buf, sizeof buf, "%.17g", v);
                row.emplace_back(buf);
            }
            row.push_back(std::to_string(d.y[r]));
            csv::write_row(os, row);
        }
    }
    nlohmann::json j;
    j["task"] = {{"kind", to_string(d.task.kind)}, {"week", d.task.week}, {"lag", d.task.lag}};
    j["descriptors"] = descriptors_to_json(d.descriptors);
    std::ofstream js(json_path, std::ios::binary);
    if (!js) throw DataError("cannot write " + json_path);
    js << j.dump(2) << '\n';
}

}  // namespace dropout
