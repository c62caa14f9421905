#pragma once

// Grouped relative importance across week-lagged copies of a feature, the
// temporal-weight metric and box-plot summaries.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dropout/common.hpp"
#include "dropout/features.hpp"

namespace dropout {

struct ImportanceRecord {
    std::string group_id;
    double ri = 0.0;
    std::map<int, double> components;  // source week -> RI, temporal groups only
    int lag = -1;
    bool temporal = false;
};

/// Sum column importance by group, in order of first appearance. One-hot
/// levels collapse into their feature's group.
inline std::vector<ImportanceRecord> group_importance(std::span<const double> ri,
                                                      const std::vector<FeatureDescriptor>& descriptors,
                                                      int lag = -1) {
    if (ri.size() != descriptors.size()) throw ModelError("group_importance: descriptor/vector length mismatch");
    std::vector<ImportanceRecord> out;
    std::map<std::string, std::size_t> slot;
    for (std::size_t j = 0; j < ri.size(); ++j) {
        const auto& d = descriptors[j];
        auto [it, fresh] = slot.try_emplace(d.group_id, out.size());
        if (fresh) {
            ImportanceRecord r;
            r.group_id = d.group_id;
            r.lag = lag;
            r.temporal = d.temporal();
            out.push_back(std::move(r));
        }
        auto& r = out[it->second];
        r.ri += ri[j];
        if (d.source_week) r.components[*d.source_week] += ri[j];
    }
    return out;
}

/// TW = sum_i RI(x_i)/RI(x) * (lag - i). Empty when RI is zero or the record
/// is not temporal.
inline std::optional<double> temporal_weight(const ImportanceRecord& r) {
    if (!r.temporal || r.lag < 0) return std::nullopt;
    double total = 0.0;
    for (const auto& [w, v] : r.components) {
        if (v < 0.0) throw ModelError("temporal_weight: negative component");
        if (w > r.lag) throw ModelError("temporal_weight: component week beyond lag");
        total += v;
    }
    if (!(total > 0.0)) return std::nullopt;
    double tw = 0.0;
    for (const auto& [w, v] : r.components) tw += v / total * static_cast<double>(r.lag - w);
    return tw;
}

struct BoxStats {
    double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
    double lower_fence = 0.0, upper_fence = 0.0;
    double lower_whisker = 0.0, upper_whisker = 0.0;  // most extreme values inside the fences
    std::vector<double> outliers;
    std::size_t count = 0;
    double mean = 0.0;
};

/// Quantile at p by linear interpolation between order statistics at
/// position (n - 1) p.
inline double quantile_sorted(std::span<const double> sorted, double p) {
    if (sorted.empty()) throw ModelError("quantile: empty input");
    const double h = static_cast<double>(sorted.size() - 1) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline BoxStats summarize_distribution(std::span<const double> values) {
    if (values.empty()) throw ModelError("summarize_distribution: empty list");
    std::vector<double> v(values.begin(), values.end());
    std::sort(v.begin(), v.end());
    BoxStats b;
    b.count = v.size();
    b.min = v.front();
    b.max = v.back();
    b.q1 = quantile_sorted(v, 0.25);
    b.median = quantile_sorted(v, 0.5);
    b.q3 = quantile_sorted(v, 0.75);
    const double iqr = b.q3 - b.q1;
    b.lower_fence = b.q1 - 1.5 * iqr;
    b.upper_fence = b.q3 + 1.5 * iqr;
    b.lower_whisker = b.max;
    b.upper_whisker = b.min;
    double s = 0.0;
    for (double x : v) {
        s += x;
        if (x < b.lower_fence || x > b.upper_fence) {
            b.outliers.push_back(x);
        } else {
            b.lower_whisker = std::min(b.lower_whisker, x);
            b.upper_whisker = std::max(b.upper_whisker, x);
        }
    }
    b.mean = s / static_cast<double>(v.size());
    return b;
}

inline nlohmann::json to_json(const BoxStats& b) {
    return {{"count", b.count},         {"min", b.min},
            {"q1", b.q1},               {"median", b.median},
            {"q3", b.q3},               {"max", b.max},
            {"mean", b.mean},           {"lower_fence", b.lower_fence},
            {"upper_fence", b.upper_fence}, {"lower_whisker", b.lower_whisker},
            {"upper_whisker", b.upper_whisker}, {"outliers", b.outliers}};
}

}  // namespace dropout
