#pragma once

// Experiment harness: run configuration and its key-value grammar, the
// (week, lag) grids for both tasks, importance extraction and file writers.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "dropout/common.hpp"
#include "dropout/csv.hpp"
#include "dropout/dataset.hpp"
#include "dropout/evaluation.hpp"
#include "dropout/features.hpp"
#include "dropout/importance.hpp"
#include "dropout/rng.hpp"

namespace dropout {

enum class InputMode { synthetic, csv };
enum class TaskSet { state_grid, exactweek_grid, importance };

inline std::string_view to_string(TaskSet t) {
    switch (t) {
        case TaskSet::state_grid: return "state_grid";
        case TaskSet::exactweek_grid: return "exactweek_grid";
        case TaskSet::importance: return "importance";
    }
    return "?";
}

struct RunConfig {
    InputMode input = InputMode::synthetic;
    std::string profiles_path, forum_path, activity_path;
    CourseCalendar calendar{};
    IngestOptions ingest{};
    SynthConfig synth{};

    std::vector<ClassifierId> classifiers = {ClassifierId::logistic, ClassifierId::forest, ClassifierId::adaboost};
    std::vector<TaskSet> tasks = {TaskSet::state_grid, TaskSet::exactweek_grid, TaskSet::importance};
    CvConfig cv{};
    bool smote_state = false;
    bool smote_exactweek = true;
    FeatureOptions features{};
    std::string output_dir = "out";
    std::uint64_t seed = 0;
    std::size_t threads = 0;  // 0 = hardware concurrency, capped by DROPOUT_LAB_THREADS

    void validate() const {
        if (classifiers.empty()) throw ConfigError("run: classifier set must be non-empty");
        if (tasks.empty()) throw ConfigError("run: task set must be non-empty");
        if (input == InputMode::csv && (profiles_path.empty() || forum_path.empty() || activity_path.empty()))
            throw ConfigError("run: csv input needs input.profiles, input.forum and input.activity");
        if (input == InputMode::synthetic) synth.validate();
        calendar.validate();
        cv.validate();
    }
};

// ---------------------------------------------------------------------------
// Config grammar
//
//   # comment
//   key = value
//
// Lists are comma separated. Booleans: true/false/1/0/yes/no/on/off.
// Relative csv paths resolve against the config file's directory.

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config: " + key + " expects a number, got '" + v + "'");
    }
}

inline long long parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const long long d = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config: " + key + " expects an integer, got '" + v + "'");
    }
}

inline std::uint64_t parse_seed(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const unsigned long long d = std::stoull(v, &used);
        if (used != v.size() || v.front() == '-') throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config: " + key + " expects a non-negative integer, got '" + v + "'");
    }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("config: " + key + " expects a boolean, got '" + v + "'");
}

inline std::size_t parse_count(const std::string& key, const std::string& v) {
    const long long n = parse_int(key, v);
    if (n < 0) throw ConfigError("config: " + key + " must be >= 0");
    return static_cast<std::size_t>(n);
}

}  // namespace detail

/// Apply one key = value setting to a config.
inline void apply_setting(RunConfig& c, const std::string& key, const std::string& v) {
    using namespace detail;
    auto doubles = [&] {
        std::vector<double> out;
        for (const auto& s : split_list(v)) out.push_back(parse_double(key, s));
        return out;
    };
    auto ints = [&] {
        std::vector<int> out;
        for (const auto& s : split_list(v)) out.push_back(static_cast<int>(parse_int(key, s)));
        return out;
    };
    static const std::map<std::string, std::function<void(RunConfig&, const std::string&)>> table = {
        {"input", [](RunConfig& c, const std::string& v) {
             if (v == "synthetic") c.input = InputMode::synthetic;
             else if (v == "csv") c.input = InputMode::csv;
             else throw ConfigError("config: input must be 'synthetic' or 'csv'");
         }},
        {"input.profiles", [](RunConfig& c, const std::string& v) { c.profiles_path = v; }},
        {"input.forum", [](RunConfig& c, const std::string& v) { c.forum_path = v; }},
        {"input.activity", [](RunConfig& c, const std::string& v) { c.activity_path = v; }},
        {"input.skip_unknown_users",
         [](RunConfig& c, const std::string& v) { c.ingest.skip_unknown_users = parse_bool("input.skip_unknown_users", v); }},
        {"calendar.start", [](RunConfig& c, const std::string& v) {
             const auto t = parse_iso8601(v);
             if (!t) throw ConfigError("config: calendar.start is not an ISO-8601 timestamp");
             c.calendar.start = *t;
             c.synth.start = *t;
         }},
        {"calendar.week_count", [](RunConfig& c, const std::string& v) {
             c.calendar.week_count = static_cast<int>(parse_int("calendar.week_count", v));
             c.synth.week_count = c.calendar.week_count;
         }},
        {"synth.user_count", [](RunConfig& c, const std::string& v) { c.synth.user_count = parse_count("synth.user_count", v); }},
        {"synth.dropout_rate", [](RunConfig& c, const std::string& v) { c.synth.dropout_rate = parse_double("synth.dropout_rate", v); }},
        {"synth.no_assignment_fraction",
         [](RunConfig& c, const std::string& v) { c.synth.no_assignment_fraction = parse_double("synth.no_assignment_fraction", v); }},
        {"synth.completion_among_submitters",
         [](RunConfig& c, const std::string& v) { c.synth.completion_among_submitters = parse_double("synth.completion_among_submitters", v); }},
        {"synth.empty_profile_fraction",
         [](RunConfig& c, const std::string& v) { c.synth.empty_profile_fraction = parse_double("synth.empty_profile_fraction", v); }},
        {"synth.completion_among_empty",
         [](RunConfig& c, const std::string& v) { c.synth.completion_among_empty = parse_double("synth.completion_among_empty", v); }},
        {"synth.assignment_signal",
         [](RunConfig& c, const std::string& v) { c.synth.assignment_signal = parse_double("synth.assignment_signal", v); }},
        {"synth.forum_signal", [](RunConfig& c, const std::string& v) { c.synth.forum_signal = parse_double("synth.forum_signal", v); }},
        {"synth.profile_signal",
         [](RunConfig& c, const std::string& v) { c.synth.profile_signal = parse_double("synth.profile_signal", v); }},
        {"tasks", [](RunConfig& c, const std::string& v) {
             c.tasks.clear();
             for (const auto& t : split_list(v)) {
                 if (t == "state_grid") c.tasks.push_back(TaskSet::state_grid);
                 else if (t == "exactweek_grid") c.tasks.push_back(TaskSet::exactweek_grid);
                 else if (t == "importance") c.tasks.push_back(TaskSet::importance);
                 else throw ConfigError("config: unknown task '" + t + "'");
             }
         }},
        {"classifiers", [](RunConfig& c, const std::string& v) {
             c.classifiers.clear();
             for (const auto& s : split_list(v)) c.classifiers.push_back(classifier_from(s));
         }},
        {"cv.outer_k", [](RunConfig& c, const std::string& v) { c.cv.outer_k = parse_count("cv.outer_k", v); }},
        {"cv.inner_k", [](RunConfig& c, const std::string& v) { c.cv.inner_k = parse_count("cv.inner_k", v); }},
        {"cv.selection", [](RunConfig& c, const std::string& v) {
             if (v == "auroc") c.cv.selection = SelectionMetric::auroc;
             else if (v == "f2") c.cv.selection = SelectionMetric::f2;
             else throw ConfigError("config: cv.selection must be 'auroc' or 'f2'");
         }},
        {"cv.threshold", [](RunConfig& c, const std::string& v) { c.cv.threshold = parse_double("cv.threshold", v); }},
        {"smote.state", [](RunConfig& c, const std::string& v) { c.smote_state = parse_bool("smote.state", v); }},
        {"smote.exactweek", [](RunConfig& c, const std::string& v) { c.smote_exactweek = parse_bool("smote.exactweek", v); }},
        {"smote.k_neighbors", [](RunConfig& c, const std::string& v) {
             c.cv.smote_config.k_neighbors = static_cast<int>(parse_int("smote.k_neighbors", v));
         }},
        {"smote.ratio", [](RunConfig& c, const std::string& v) { c.cv.smote_config.ratio = parse_double("smote.ratio", v); }},
        {"logistic.max_iterations", [](RunConfig& c, const std::string& v) {
             c.cv.logistic_base.max_iterations = static_cast<int>(parse_int("logistic.max_iterations", v));
         }},
        {"logistic.tolerance",
         [](RunConfig& c, const std::string& v) { c.cv.logistic_base.tolerance = parse_double("logistic.tolerance", v); }},
        {"logistic.penalize_intercept", [](RunConfig& c, const std::string& v) {
             c.cv.logistic_base.penalize_intercept = parse_bool("logistic.penalize_intercept", v);
         }},
        {"forest.min_samples_leaf", [](RunConfig& c, const std::string& v) {
             c.cv.forest_tree.min_samples_leaf = static_cast<int>(parse_int("forest.min_samples_leaf", v));
         }},
        {"forest.max_depth",
         [](RunConfig& c, const std::string& v) { c.cv.forest_tree.max_depth = static_cast<int>(parse_int("forest.max_depth", v)); }},
        {"boost.alpha_form", [](RunConfig& c, const std::string& v) {
             if (v == "log") c.cv.alpha_form = AlphaForm::log;
             else if (v == "literal") c.cv.alpha_form = AlphaForm::literal;
             else throw ConfigError("config: boost.alpha_form must be 'log' or 'literal'");
         }},
        {"boost.variant", [](RunConfig& c, const std::string& v) {
             if (v == "resample") c.cv.boost_variant = BoostVariant::resample;
             else if (v == "reweight") c.cv.boost_variant = BoostVariant::reweight;
             else throw ConfigError("config: boost.variant must be 'resample' or 'reweight'");
         }},
        {"features.include_dropped",
         [](RunConfig& c, const std::string& v) { c.features.include_dropped = parse_bool("features.include_dropped", v); }},
        {"features.cumulative",
         [](RunConfig& c, const std::string& v) { c.features.cumulative = parse_bool("features.cumulative", v); }},
        {"output", [](RunConfig& c, const std::string& v) { c.output_dir = v; }},
        {"seed", [](RunConfig& c, const std::string& v) { c.seed = parse_seed("seed", v); }},
        {"threads", [](RunConfig& c, const std::string& v) { c.threads = parse_count("threads", v); }},
    };
    if (key == "grid.lambda") { c.cv.lambdas = doubles(); return; }
    if (key == "grid.alpha") { c.cv.alphas = doubles(); return; }
    if (key == "grid.forest_trees") { c.cv.forest_trees = ints(); return; }
    if (key == "grid.boost_rounds") { c.cv.boost_rounds = ints(); return; }
    if (key == "grid.boost_depth") { c.cv.boost_depths = ints(); return; }
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError("config: unknown key '" + key + "'");
    it->second(c, v);
}

inline RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir = {}) {
    RunConfig c;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t no = 0;
    std::set<std::string> seen;
    while (std::getline(in, line)) {
        ++no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string t = detail::trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(no) + ": expected 'key = value'");
        const std::string key = detail::trim(std::string_view(t).substr(0, eq));
        const std::string val = detail::trim(std::string_view(t).substr(eq + 1));
        if (!seen.insert(key).second)
            throw ConfigError("config line " + std::to_string(no) + ": duplicate key '" + key + "'");
        try {
            apply_setting(c, key, val);
        } catch (const ConfigError& e) {
            throw ConfigError("config line " + std::to_string(no) + ": " + e.what());
        }
    }
    if (!base_dir.empty()) {
        for (std::string* p : {&c.profiles_path, &c.forum_path, &c.activity_path})
            if (!p->empty() && std::filesystem::path(*p).is_relative()) *p = (base_dir / *p).string();
    }
    return c;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str(), std::filesystem::path(path).parent_path());
}

/// Canonical text form; parse_run_config(to_text(c)) reproduces c.
inline std::string to_text(const RunConfig& c) {
    std::ostringstream os;
    os << std::setprecision(17);
    auto list = [&](const auto& v) {
        std::ostringstream s;
        s << std::setprecision(17);
        for (std::size_t i = 0; i < v.size(); ++i) s << (i ? "," : "") << v[i];
        return s.str();
    };
    auto b = [](bool v) { return v ? "true" : "false"; };
    os << "input = " << (c.input == InputMode::synthetic ? "synthetic" : "csv") << '\n';
    if (c.input == InputMode::csv) {
        os << "input.profiles = " << c.profiles_path << '\n'
           << "input.forum = " << c.forum_path << '\n'
           << "input.activity = " << c.activity_path << '\n';
    }
    os << "input.skip_unknown_users = " << b(c.ingest.skip_unknown_users) << '\n'
       << "calendar.start = " << format_iso8601(c.calendar.start) << '\n'
       << "calendar.week_count = " << c.calendar.week_count << '\n'
       << "synth.user_count = " << c.synth.user_count << '\n'
       << "synth.dropout_rate = " << c.synth.dropout_rate << '\n'
       << "synth.no_assignment_fraction = " << c.synth.no_assignment_fraction << '\n'
       << "synth.completion_among_submitters = " << c.synth.completion_among_submitters << '\n'
       << "synth.empty_profile_fraction = " << c.synth.empty_profile_fraction << '\n'
       << "synth.completion_among_empty = " << c.synth.completion_among_empty << '\n'
       << "synth.assignment_signal = " << c.synth.assignment_signal << '\n'
       << "synth.forum_signal = " << c.synth.forum_signal << '\n'
       << "synth.profile_signal = " << c.synth.profile_signal << '\n';
    std::vector<std::string> cls, tasks;
    for (auto x : c.classifiers) cls.emplace_back(to_string(x));
    for (auto x : c.tasks) tasks.emplace_back(to_string(x));
    os << "classifiers = " << list(cls) << '\n'
       << "tasks = " << list(tasks) << '\n'
       << "cv.outer_k = " << c.cv.outer_k << '\n'
       << "cv.inner_k = " << c.cv.inner_k << '\n'
       << "cv.selection = " << (c.cv.selection == SelectionMetric::auroc ? "auroc" : "f2") << '\n'
       << "cv.threshold = " << c.cv.threshold << '\n'
       << "grid.lambda = " << list(c.cv.lambdas) << '\n'
       << "grid.alpha = " << list(c.cv.alphas) << '\n'
       << "grid.forest_trees = " << list(c.cv.forest_trees) << '\n'
       << "grid.boost_rounds = " << list(c.cv.boost_rounds) << '\n'
       << "grid.boost_depth = " << list(c.cv.boost_depths) << '\n'
       << "smote.state = " << b(c.smote_state) << '\n'
       << "smote.exactweek = " << b(c.smote_exactweek) << '\n'
       << "smote.k_neighbors = " << c.cv.smote_config.k_neighbors << '\n'
       << "smote.ratio = " << c.cv.smote_config.ratio << '\n'
       << "logistic.max_iterations = " << c.cv.logistic_base.max_iterations << '\n'
       << "logistic.tolerance = " << c.cv.logistic_base.tolerance << '\n'
       << "logistic.penalize_intercept = " << b(c.cv.logistic_base.penalize_intercept) << '\n'
       << "forest.min_samples_leaf = " << c.cv.forest_tree.min_samples_leaf << '\n'
       << "forest.max_depth = " << c.cv.forest_tree.max_depth << '\n'
       << "boost.alpha_form = " << to_string(c.cv.alpha_form) << '\n'
       << "boost.variant = " << to_string(c.cv.boost_variant) << '\n'
       << "features.include_dropped = " << b(c.features.include_dropped) << '\n'
       << "features.cumulative = " << b(c.features.cumulative) << '\n'
       << "output = " << c.output_dir << '\n'
       << "seed = " << c.seed << '\n'
       << "threads = " << c.threads << '\n';
    return os.str();
}

// ---------------------------------------------------------------------------
// Worker pool

/// Threads to use: the requested count (or hardware concurrency when 0),
/// capped by DROPOUT_LAB_THREADS.
inline std::size_t worker_count(std::size_t requested) {
    std::size_t n = requested ? requested : std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("DROPOUT_LAB_THREADS")) {
        char* end = nullptr;
        const long cap = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && cap >= 1) n = std::min(n, static_cast<std::size_t>(cap));
    }
    return std::max<std::size_t>(n, 1);
}

/// Run job(i) for i in [0, n) on up to `threads` workers. The first exception
/// is rethrown after all workers stop.
inline void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& job) {
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) job(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex m;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    job(i);
                } catch (...) {
                    std::lock_guard lock(m);
                    if (!error) error = std::current_exception();
                    next.store(n);
                }
            }
        });
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Grids

struct CellResult {
    ClassifierId classifier = ClassifierId::logistic;
    int week = 0, lag = -1;
    MetricsReport report;
    std::vector<FeatureDescriptor> descriptors;
};

struct GridResult {
    TaskKind kind = TaskKind::state;
    int week_count = 0;
    std::vector<ClassifierId> classifiers;
    std::vector<CellResult> cells;  // classifier-major, then week, then lag

    const CellResult* find(ClassifierId c, int week, int lag) const {
        for (const auto& cell : cells)
            if (cell.classifier == c && cell.week == week && cell.lag == lag) return &cell;
        return nullptr;
    }
};

/// Number of (week, lag) cells with lag in {-1, 0..week}.
inline std::size_t grid_cell_count(int week_count) {
    std::size_t n = 0;
    for (int w = 0; w < week_count; ++w) n += static_cast<std::size_t>(w + 2);
    return n;
}

struct GridOptions {
    TaskKind kind = TaskKind::state;
    std::vector<ClassifierId> classifiers;
    CvConfig cv;
    AssembleOptions assemble{};
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;  // separates grids sharing a master seed
    std::size_t threads = 1;
};

inline GridResult run_grid(const FeatureBank& bank, const GridOptions& opt) {
    GridResult g;
    g.kind = opt.kind;
    g.week_count = bank.week_count;
    g.classifiers = opt.classifiers;
    for (auto c : opt.classifiers)
        for (int w = 0; w < bank.week_count; ++w)
            for (int l = -1; l <= w; ++l) {
                CellResult cell;
                cell.classifier = c;
                cell.week = w;
                cell.lag = l;
                g.cells.push_back(std::move(cell));
            }
    parallel_for(g.cells.size(), opt.threads, [&](std::size_t i) {
        CellResult& cell = g.cells[i];
        CvConfig cv = opt.cv;
        cv.seed = derive_seed(opt.seed, {opt.stream, static_cast<std::uint64_t>(cell.classifier),
                                         static_cast<std::uint64_t>(cell.week),
                                         static_cast<std::uint64_t>(cell.lag + 1)});
        try {
            const Dataset d = assemble_matrix(bank, opt.kind, cell.week, cell.lag, opt.assemble);
            cell.descriptors = d.descriptors;
            cell.report = nested_cv(d, cell.classifier, cv);
        } catch (const ModelError& e) {
            cell.report = MetricsReport{};
            cell.report.classifier = cell.classifier;
            cell.report.task = {opt.kind, cell.week, cell.lag};
            cell.report.evaluable = false;
            cell.report.unevaluable_reason = e.what();
        }
    });
    return g;
}

// ---------------------------------------------------------------------------
// Importance

struct ImportanceRow {
    std::string pool;  // "exact_week" or "state"
    std::string prediction_id;
    int week = 0, lag = -1;
    ImportanceRecord record;
    std::optional<double> tw;
};

struct ImportanceResult {
    std::vector<ImportanceRow> rows;
    std::vector<GridResult> grids;
};

inline std::string prediction_id(TaskKind k, int week, int lag) {
    return std::string(to_string(k)) + ":w" + std::to_string(week) + ":lag" + std::to_string(lag);
}

inline std::vector<ImportanceRow> importance_rows(const GridResult& g, ClassifierId c) {
    std::vector<ImportanceRow> out;
    for (const auto& cell : g.cells) {
        if (cell.classifier != c || !cell.report.evaluable) continue;
        const auto ri = cell.report.mean_importance();
        if (ri.empty()) continue;
        for (auto& rec : group_importance(ri, cell.descriptors, cell.lag)) {
            ImportanceRow row;
            row.pool = std::string(to_string(g.kind));
            row.prediction_id = prediction_id(g.kind, cell.week, cell.lag);
            row.week = cell.week;
            row.lag = cell.lag;
            row.tw = temporal_weight(rec);
            row.record = std::move(rec);
            out.push_back(std::move(row));
        }
    }
    return out;
}

/// Per pool and group: box statistics of RI over every prediction that has
/// the group, and of TW over predictions where it is defined.
inline nlohmann::json importance_boxstats(const std::vector<ImportanceRow>& rows) {
    std::map<std::string, std::map<std::string, std::pair<std::vector<double>, std::vector<double>>>> acc;
    std::map<std::string, std::vector<std::string>> order;
    for (const auto& r : rows) {
        auto& pool = acc[r.pool];
        if (!pool.count(r.record.group_id)) order[r.pool].push_back(r.record.group_id);
        auto& [ri, tw] = pool[r.record.group_id];
        ri.push_back(r.record.ri);
        if (r.tw) tw.push_back(*r.tw);
    }
    nlohmann::json out = nlohmann::json::object();
    for (const auto& [pool, groups] : acc) {
        nlohmann::json jp = nlohmann::json::array();
        for (const auto& gid : order[pool]) {
            const auto& [ri, tw] = groups.at(gid);
            nlohmann::json jg = {{"group", gid}, {"ri", to_json(summarize_distribution(ri))}};
            jg["tw"] = tw.empty() ? nlohmann::json() : to_json(summarize_distribution(tw));
            jp.push_back(std::move(jg));
        }
        out[pool] = std::move(jp);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Writers

namespace detail {

inline std::string fmt(double v) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(6) << v;
    return s.str();
}

inline std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : "n/a"; }

inline std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw DataError("cannot write " + p.string());
    return os;
}

}  // namespace detail

/// Wide grids (rows = classifier x week, columns = lags), the long cell
/// table, JSON reports and the aligned text report.
inline void write_grid(const GridResult& g, const std::filesystem::path& dir, const std::string& prefix) {
    std::filesystem::create_directories(dir);
    auto wide = [&](const std::string& metric, auto get) {
        auto os = detail::open_out(dir / (prefix + "_" + metric + ".csv"));
        std::vector<std::string> head = {"classifier", "week", "profile_only"};
        for (int l = 0; l < g.week_count; ++l) head.push_back("lag_" + std::to_string(l));
        csv::write_row(os, head);
        for (auto c : g.classifiers)
            for (int w = 0; w < g.week_count; ++w) {
                std::vector<std::string> row = {std::string(to_string(c)), std::to_string(w)};
                for (int l = -1; l < g.week_count; ++l) {
                    const CellResult* cell = l <= w ? g.find(c, w, l) : nullptr;
                    if (!cell)
                        row.emplace_back();
                    else if (!cell->report.evaluable)
                        row.emplace_back("n/a");
                    else
                        row.push_back(detail::fmt(get(cell->report)));
                }
                csv::write_row(os, row);
            }
    };
    wide("auroc", [](const MetricsReport& r) { return r.auroc; });
    wide("f2", [](const MetricsReport& r) { return r.f2; });

    {
        auto os = detail::open_out(dir / (prefix + "_cells.csv"));
        csv::write_row(os, {"classifier", "week", "lag", "status", "reason", "auroc", "pooled_auroc", "f2",
                            "precision", "recall", "tp", "fp", "fn", "tn", "rows", "positives", "evaluated_folds",
                            "hygiene_checks", "hygiene_violations"});
        for (const auto& cell : g.cells) {
            const auto& r = cell.report;
            csv::write_row(os, {std::string(to_string(cell.classifier)), std::to_string(cell.week),
                                std::to_string(cell.lag), r.evaluable ? "ok" : "n/a", r.unevaluable_reason,
                                detail::fmt(r.auroc), detail::fmt(r.pooled_auroc), detail::fmt(r.f2),
                                detail::fmt(r.precision), detail::fmt(r.recall),
                                std::to_string(r.confusion_total.tp), std::to_string(r.confusion_total.fp),
                                std::to_string(r.confusion_total.fn), std::to_string(r.confusion_total.tn),
                                std::to_string(r.rows), std::to_string(r.positives),
                                std::to_string(r.evaluated_folds()), std::to_string(r.hygiene.checks),
                                std::to_string(r.hygiene.violations)});
        }
    }
    {
        nlohmann::json j = nlohmann::json::array();
        for (const auto& cell : g.cells) j.push_back(to_json(cell.report));
        auto os = detail::open_out(dir / (prefix + "_report.json"));
        os << j.dump(1) << '\n';
    }
    {
        auto os = detail::open_out(dir / (prefix + "_report.txt"));
        for (const auto& cell : g.cells) os << to_text(cell.report) << '\n';
    }
}

inline void write_importance(const std::vector<ImportanceRow>& rows, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        auto os = detail::open_out(dir / "importance.csv");
        csv::write_row(os, {"pool", "prediction_id", "week", "lag", "group", "ri", "tw"});
        for (const auto& r : rows)
            csv::write_row(os, {r.pool, r.prediction_id, std::to_string(r.week), std::to_string(r.lag),
                                r.record.group_id, detail::fmt(r.record.ri), detail::fmt(r.tw)});
    }
    auto os = detail::open_out(dir / "boxstats.json");
    os << importance_boxstats(rows).dump(1) << '\n';
}

// ---------------------------------------------------------------------------
// Pipeline

inline LabeledCohort load_cohort(const RunConfig& c, IngestDiagnostics* diag = nullptr) {
    if (c.input == InputMode::synthetic) {
        SynthConfig s = c.synth;
        s.seed = c.seed;
        s.start = c.calendar.start;
        s.week_count = c.calendar.week_count;
        return generate_synthetic(s);
    }
    auto res = ingest_cohort(c.profiles_path, c.forum_path, c.activity_path, c.calendar, c.ingest);
    if (diag) *diag = res.diagnostics;
    return derive_labels(std::move(res.cohort));
}

inline GridOptions grid_options(const RunConfig& c, TaskKind kind, std::uint64_t stream) {
    GridOptions o;
    o.kind = kind;
    o.classifiers = c.classifiers;
    o.cv = c.cv;
    o.cv.smote = kind == TaskKind::state ? c.smote_state : c.smote_exactweek;
    o.seed = c.seed;
    o.stream = stream;
    o.threads = worker_count(c.threads);
    return o;
}

inline GridResult run_state_grid(const FeatureBank& bank, const RunConfig& c) {
    return run_grid(bank, grid_options(c, TaskKind::state, 1));
}

inline GridResult run_exactweek_grid(const FeatureBank& bank, const RunConfig& c) {
    return run_grid(bank, grid_options(c, TaskKind::exact_week, 2));
}

/// AdaBoost over users with a filled profile, on both task pools.
inline ImportanceResult run_importance(const FeatureBank& bank, const RunConfig& c) {
    if (std::find(c.classifiers.begin(), c.classifiers.end(), ClassifierId::adaboost) == c.classifiers.end())
        throw ConfigError("importance requires adaboost in the classifier set");
    ImportanceResult res;
    std::uint64_t stream = 3;
    for (TaskKind k : {TaskKind::exact_week, TaskKind::state}) {
        GridOptions o = grid_options(c, k, stream++);
        o.classifiers = {ClassifierId::adaboost};
        o.assemble.exclude_empty_profiles = true;
        res.grids.push_back(run_grid(bank, o));
        auto rows = importance_rows(res.grids.back(), ClassifierId::adaboost);
        res.rows.insert(res.rows.end(), rows.begin(), rows.end());
    }
    return res;
}

/// Weekly dropout counts, the cohort CSVs and its JSON form.
inline void write_synthetic(const LabeledCohort& lc, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_cohort_csv(lc.cohort, (dir / "profiles.csv").string(), (dir / "forum.csv").string(),
                     (dir / "activity.csv").string());
    {
        auto os = detail::open_out(dir / "cohort.json");
        os << to_json(lc).dump() << '\n';
    }
    auto os = detail::open_out(dir / "weekly_dropouts.csv");
    csv::write_row(os, {"week", "dropouts"});
    const auto counts = lc.weekly_dropouts();
    for (std::size_t w = 0; w < counts.size(); ++w) csv::write_row(os, {std::to_string(w), std::to_string(counts[w])});
}

}  // namespace dropout
