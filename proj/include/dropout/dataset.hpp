#pragma once

// Event-log data model: course calendar, learner profiles, forum and activity
// events, CSV ingestion, dropout-week labelling and the synthetic cohort
// generator.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "dropout/common.hpp"
#include "dropout/csv.hpp"
#include "dropout/rng.hpp"

namespace dropout {

// ---------------------------------------------------------------------------
// Time

inline constexpr std::int64_t kSecondsPerDay = 86400;
inline constexpr std::int64_t kSecondsPerWeek = 7 * kSecondsPerDay;

namespace detail {

// Howard Hinnant's days_from_civil / civil_from_days.
constexpr std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) noexcept {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m > 2 ? m - 3 : m + 9) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

struct Civil {
    std::int64_t y;
    unsigned m, d;
};

constexpr Civil civil_from_days(std::int64_t z) noexcept {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp < 10 ? mp + 3 : mp - 9;
    return {y + (m <= 2), m, d};
}

inline bool parse_uint(std::string_view s, unsigned& out) {
    if (s.empty()) return false;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && p == s.data() + s.size();
}

}  // namespace detail

/// Parse "YYYY-MM-DDTHH:MM:SS[.fff](Z|±HH:MM)" (a space may replace 'T';
/// a missing zone means UTC). Returns seconds since the Unix epoch.
inline std::optional<std::int64_t> parse_iso8601(std::string_view s) {
    if (s.size() < 19) return std::nullopt;
    unsigned y, mo, d, h, mi, se;
    if (s[4] != '-' || s[7] != '-' || (s[10] != 'T' && s[10] != ' ') || s[13] != ':' || s[16] != ':')
        return std::nullopt;
    if (!detail::parse_uint(s.substr(0, 4), y) || !detail::parse_uint(s.substr(5, 2), mo) ||
        !detail::parse_uint(s.substr(8, 2), d) || !detail::parse_uint(s.substr(11, 2), h) ||
        !detail::parse_uint(s.substr(14, 2), mi) || !detail::parse_uint(s.substr(17, 2), se))
        return std::nullopt;
    if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || se > 60) return std::nullopt;
    const auto check = detail::civil_from_days(detail::days_from_civil(y, mo, d));
    if (check.m != mo || check.d != d) return std::nullopt;

    std::size_t pos = 19;
    if (pos < s.size() && s[pos] == '.') {
        ++pos;
        const std::size_t start = pos;
        while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;
        if (pos == start) return std::nullopt;
    }
    std::int64_t offset = 0;
    if (pos < s.size()) {
        if (s[pos] == 'Z' && pos + 1 == s.size()) {
            // UTC
        } else if ((s[pos] == '+' || s[pos] == '-') && s.size() == pos + 6 && s[pos + 3] == ':') {
            unsigned oh, om;
            if (!detail::parse_uint(s.substr(pos + 1, 2), oh) || !detail::parse_uint(s.substr(pos + 4, 2), om))
                return std::nullopt;
            offset = (static_cast<std::int64_t>(oh) * 3600 + om * 60) * (s[pos] == '+' ? 1 : -1);
        } else {
            return std::nullopt;
        }
    }
    const std::int64_t days = detail::days_from_civil(y, mo, d);
    return days * kSecondsPerDay + h * 3600 + mi * 60 + se - offset;
}

inline std::string format_iso8601(std::int64_t t) {
    std::int64_t days = t / kSecondsPerDay;
    std::int64_t rem = t % kSecondsPerDay;
    if (rem < 0) {
        rem += kSecondsPerDay;
        --days;
    }
    const auto c = detail::civil_from_days(days);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02lld:%02lld:%02lldZ", static_cast<long long>(c.y), c.m, c.d,
                  static_cast<long long>(rem / 3600), static_cast<long long>(rem % 3600 / 60),
                  static_cast<long long>(rem % 60));
    return buf;
}

/// Course calendar: consecutive 7-day weeks starting at `start`.
struct CourseCalendar {
    std::int64_t start = 0;
    int week_count = 9;

    std::int64_t end() const noexcept { return start + week_count * kSecondsPerWeek; }

    /// Week index of a timestamp, or nullopt if it lies outside the course.
    std::optional<int> week_of(std::int64_t t) const noexcept {
        if (t < start || t >= end()) return std::nullopt;
        return static_cast<int>((t - start) / kSecondsPerWeek);
    }

    void validate() const {
        if (week_count < 1) throw DataError("calendar: week_count must be >= 1");
    }

    friend bool operator==(const CourseCalendar&, const CourseCalendar&) = default;
};

// ---------------------------------------------------------------------------
// Profile schema (Table I of the learner questionnaire)

enum class FieldKind { nominal, ordinal, length };

struct ProfileFieldSpec {
    std::string id;      // pd_a .. pd_r
    std::string column;  // CSV header name
    FieldKind kind;
    std::vector<std::string> levels;  // natural order for ordinals; empty = taken from data
    bool dropped_by_default = false;
};

inline constexpr std::size_t kProfileFieldCount = 18;

namespace detail {
inline std::vector<std::string> numbered_levels(const char* prefix, int n, int width) {
    std::vector<std::string> out;
    for (int i = 1; i <= n; ++i) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "%s%0*d", prefix, width, i);
        out.emplace_back(buf);
    }
    return out;
}
inline std::vector<std::string> timezone_levels() {
    std::vector<std::string> out;
    for (int h = -12; h <= 12; ++h) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "UTC%+d", h);
        out.emplace_back(h == 0 ? "UTC" : buf);
    }
    return out;
}
}  // namespace detail

/// The 18 profile fields in questionnaire order. Country and primary language
/// have open level sets (taken from the data); everything else is declared.
inline const std::vector<ProfileFieldSpec>& profile_fields() {
    static const std::vector<ProfileFieldSpec> fields = {
        {"pd_a", "country", FieldKind::nominal, {}, true},
        {"pd_b", "primary_language", FieldKind::nominal, {}, true},
        {"pd_c", "gender", FieldKind::nominal, {"female", "male", "other", "undisclosed"}},
        {"pd_d", "biography", FieldKind::length, {}},
        {"pd_e", "track", FieldKind::nominal, {"T1", "T2", "T3"}},
        {"pd_f", "age_range", FieldKind::ordinal, {"<25", "25-34", "35-44", "45-54", "55+"}},
        {"pd_g", "motivation", FieldKind::nominal,
         {"Personal interest", "Expand professional network", "Increase career opportunities", "other"}},
        {"pd_h", "education_role", FieldKind::nominal,
         {"Curriculum manager", "Not involved", "Teacher", "Educational adviser", "other"}},
        {"pd_i", "education_experience", FieldKind::ordinal, {"none", "some", "extensive"}},
        {"pd_j", "pbl_experience", FieldKind::ordinal, {"none", "some", "extensive"}},
        {"pd_k", "interest_area", FieldKind::nominal,
         {"Arts - literature - philosophy", "Economics - Business - Trade", "Healthy body and healthy mind",
          "International relations - politics - law", "Science - Technology", "None of these - No difference"}},
        {"pd_l", "schedule_preference", FieldKind::nominal, {"Synchronously", "Asynchronously", "No preference"}},
        {"pd_m", "timezone", FieldKind::nominal, detail::timezone_levels()},
        {"pd_n", "anxiety", FieldKind::ordinal, {"1", "2", "3", "4", "5"}},
        {"pd_o", "determination", FieldKind::ordinal, {"1", "2", "3", "4", "5"}},
        {"pd_p", "objectives", FieldKind::length, {}},
        {"pd_q", "first_mooc", FieldKind::nominal, {"yes", "no"}},
        {"pd_r", "discovery_medium", FieldKind::nominal,
         {"Professional network", "Social media", "Maastricht University's website", "NovoEd website", "other"}},
    };
    return fields;
}

inline constexpr std::size_t kBiographyField = 3;
inline constexpr std::size_t kObjectivesField = 15;

/// Level lists in force for one cohort. Declared fields copy the static
/// schema; open fields hold the sorted set of values seen in the data.
struct ProfileSchema {
    std::array<std::vector<std::string>, kProfileFieldCount> levels;

    friend bool operator==(const ProfileSchema&, const ProfileSchema&) = default;
};

inline ProfileSchema declared_schema() {
    ProfileSchema s;
    const auto& f = profile_fields();
    for (std::size_t i = 0; i < kProfileFieldCount; ++i) s.levels[i] = f[i].levels;
    return s;
}

struct ProfileRecord {
    /// Categorical answers; empty string means NC (left blank). Entries for
    /// the two length fields are unused.
    std::array<std::string, kProfileFieldCount> answers;
    std::int64_t biography_length = 0;
    std::int64_t objectives_length = 0;

    bool empty() const {
        if (biography_length != 0 || objectives_length != 0) return false;
        for (std::size_t i = 0; i < kProfileFieldCount; ++i)
            if (i != kBiographyField && i != kObjectivesField && !answers[i].empty()) return false;
        return true;
    }

    friend bool operator==(const ProfileRecord&, const ProfileRecord&) = default;
};

// ---------------------------------------------------------------------------
// Events

enum class ForumKind { post, reply_given, comment_given };
enum class ActivityKind { assignment_submitted, review_submitted, hangout_attended };

inline std::string_view to_string(ForumKind k) {
    switch (k) {
        case ForumKind::post: return "post";
        case ForumKind::reply_given: return "reply_given";
        case ForumKind::comment_given: return "comment_given";
    }
    return "?";
}

inline std::string_view to_string(ActivityKind k) {
    switch (k) {
        case ActivityKind::assignment_submitted: return "assignment_submitted";
        case ActivityKind::review_submitted: return "review_submitted";
        case ActivityKind::hangout_attended: return "hangout_attended";
    }
    return "?";
}

inline std::optional<ForumKind> forum_kind_from(std::string_view s) {
    if (s == "post") return ForumKind::post;
    if (s == "reply_given") return ForumKind::reply_given;
    if (s == "comment_given") return ForumKind::comment_given;
    return std::nullopt;
}

inline std::optional<ActivityKind> activity_kind_from(std::string_view s) {
    if (s == "assignment_submitted") return ActivityKind::assignment_submitted;
    if (s == "review_submitted") return ActivityKind::review_submitted;
    if (s == "hangout_attended") return ActivityKind::hangout_attended;
    return std::nullopt;
}

struct ForumEvent {
    std::string user_id;
    std::int64_t timestamp = 0;
    ForumKind kind = ForumKind::post;
    std::int64_t text_length = 0;
    std::string target_user_id;  // recipient of a reply/comment, may be empty
    std::string target_post_id;  // required for replies/comments, empty for posts
    bool author_is_instructor = false;

    friend bool operator==(const ForumEvent&, const ForumEvent&) = default;
};

struct ActivityEvent {
    std::string user_id;
    std::int64_t timestamp = 0;
    ActivityKind kind = ActivityKind::assignment_submitted;

    friend bool operator==(const ActivityEvent&, const ActivityEvent&) = default;
};

struct User {
    std::string id;
    ProfileRecord profile;
    bool completed = false;

    friend bool operator==(const User&, const User&) = default;
};

/// Users plus dated event streams bound to a calendar. Users are kept sorted
/// by id. Instructor-authored forum events may reference staff accounts that
/// are not learners; every other event references a known user.
struct Cohort {
    CourseCalendar calendar;
    ProfileSchema schema;
    std::vector<User> users;
    std::vector<ForumEvent> forum_events;
    std::vector<ActivityEvent> activity_events;

    std::unordered_map<std::string, std::size_t> user_index() const {
        std::unordered_map<std::string, std::size_t> m;
        m.reserve(users.size());
        for (std::size_t i = 0; i < users.size(); ++i) m.emplace(users[i].id, i);
        return m;
    }

    void validate() const {
        calendar.validate();
        std::set<std::string> seen;
        for (const auto& u : users)
            if (!seen.insert(u.id).second) throw DataError("cohort: duplicate user id " + u.id);
        for (const auto& e : forum_events) {
            if (!e.author_is_instructor && !seen.count(e.user_id))
                throw DataError("cohort: forum event references unknown user " + e.user_id);
            if (!calendar.week_of(e.timestamp)) throw DataError("cohort: forum event outside calendar");
            if ((e.kind == ForumKind::post) != e.target_post_id.empty())
                throw DataError("cohort: replies/comments need target_post_id, posts must not have one");
            if (e.text_length < 0) throw DataError("cohort: negative text length");
        }
        for (const auto& e : activity_events) {
            if (!seen.count(e.user_id)) throw DataError("cohort: activity event references unknown user " + e.user_id);
            if (!calendar.week_of(e.timestamp)) throw DataError("cohort: activity event outside calendar");
        }
        for (const auto& u : users)
            if (u.profile.biography_length < 0 || u.profile.objectives_length < 0)
                throw DataError("cohort: negative profile length for " + u.id);
    }

    friend bool operator==(const Cohort&, const Cohort&) = default;
};

/// Cohort plus the derived target: dropout week per user (nullopt for completers).
struct LabeledCohort {
    Cohort cohort;
    std::vector<std::optional<int>> dropout_week;  // aligned with cohort.users

    /// Number of users whose dropout week equals w, for every week.
    std::vector<std::size_t> weekly_dropouts() const {
        std::vector<std::size_t> out(static_cast<std::size_t>(cohort.calendar.week_count), 0);
        for (const auto& d : dropout_week)
            if (d) ++out[static_cast<std::size_t>(*d)];
        return out;
    }

    friend bool operator==(const LabeledCohort&, const LabeledCohort&) = default;
};

// ---------------------------------------------------------------------------
// Labels

/// Dropout week := week of the learner's last own event + 1, clamped to the
/// final week; learners without events drop out in week 0; completers get none.
inline LabeledCohort derive_labels(Cohort cohort) {
    cohort.validate();
    const auto index = cohort.user_index();
    std::vector<int> last(cohort.users.size(), -1);
    auto touch = [&](const std::string& uid, std::int64_t t) {
        auto it = index.find(uid);
        if (it == index.end()) return;
        const int w = *cohort.calendar.week_of(t);
        last[it->second] = std::max(last[it->second], w);
    };
    for (const auto& e : cohort.forum_events)
        if (!e.author_is_instructor) touch(e.user_id, e.timestamp);
    for (const auto& e : cohort.activity_events) touch(e.user_id, e.timestamp);

    LabeledCohort out;
    out.dropout_week.resize(cohort.users.size());
    const int final_week = cohort.calendar.week_count - 1;
    for (std::size_t i = 0; i < cohort.users.size(); ++i) {
        if (cohort.users[i].completed) continue;
        out.dropout_week[i] = std::min(last[i] + 1, final_week);
    }
    out.cohort = std::move(cohort);
    return out;
}

// ---------------------------------------------------------------------------
// CSV ingestion

struct IngestOptions {
    bool skip_unknown_users = false;
};

struct IngestDiagnostics {
    std::size_t duplicate_users = 0;
    std::size_t skipped_unknown_user_events = 0;
};

struct IngestResult {
    Cohort cohort;
    IngestDiagnostics diagnostics;
};

inline std::vector<std::string> profile_csv_header() {
    std::vector<std::string> h = {"user_id", "completed"};
    for (const auto& f : profile_fields()) h.push_back(f.column);
    return h;
}

inline const std::vector<std::string>& forum_csv_header() {
    static const std::vector<std::string> h = {"user_id", "iso8601_timestamp", "kind", "text",
                                               "target_user_id", "target_post_id", "author_is_instructor"};
    return h;
}

inline const std::vector<std::string>& activity_csv_header() {
    static const std::vector<std::string> h = {"user_id", "iso8601_timestamp", "kind"};
    return h;
}

namespace detail {

inline std::vector<csv::Record> load_csv(const std::string& path, const std::vector<std::string>& header) {
    if (!std::filesystem::exists(path)) throw DataError("missing file: " + path);
    auto records = csv::parse(csv::read_file(path));
    if (records.empty() || records.front().fields != header) {
        std::string expected;
        for (const auto& h : header) expected += (expected.empty() ? "" : ",") + h;
        throw DataError("header mismatch in " + path + " (expected: " + expected + ")");
    }
    records.erase(records.begin());
    for (const auto& r : records)
        if (r.fields.size() != header.size())
            throw DataError(path + ": line " + std::to_string(r.line) + " has " + std::to_string(r.fields.size()) +
                            " fields, expected " + std::to_string(header.size()));
    return records;
}

inline bool parse_flag(const std::string& s, bool& out) {
    if (s == "0") out = false;
    else if (s == "1") out = true;
    else return false;
    return true;
}

}  // namespace detail

/// Read profiles.csv, forum.csv and activity.csv into a validated cohort.
/// Duplicate user ids keep their first row. Every bad timestamp or calendar
/// violation is collected and reported together with its line number.
inline IngestResult ingest_cohort(const std::string& profile_path, const std::string& forum_path,
                                  const std::string& activity_path, const CourseCalendar& calendar,
                                  const IngestOptions& options = {}) {
    calendar.validate();
    IngestResult result;
    Cohort& cohort = result.cohort;
    cohort.calendar = calendar;
    cohort.schema = declared_schema();
    const auto& fields = profile_fields();

    std::vector<std::string> problems;
    std::set<std::string> seen;
    for (const auto& rec : detail::load_csv(profile_path, profile_csv_header())) {
        const auto& f = rec.fields;
        if (!seen.insert(f[0]).second) {
            ++result.diagnostics.duplicate_users;
            continue;
        }
        if (f[0].empty()) {
            problems.push_back(profile_path + ":" + std::to_string(rec.line) + ": empty user_id");
            continue;
        }
        User u;
        u.id = f[0];
        if (!detail::parse_flag(f[1], u.completed)) {
            problems.push_back(profile_path + ":" + std::to_string(rec.line) + ": completed must be 0 or 1");
            continue;
        }
        for (std::size_t i = 0; i < kProfileFieldCount; ++i) {
            const std::string& cell = f[2 + i];
            if (fields[i].kind == FieldKind::length) {
                (i == kBiographyField ? u.profile.biography_length : u.profile.objectives_length) =
                    static_cast<std::int64_t>(cell.size());
            } else {
                u.profile.answers[i] = cell;
            }
        }
        cohort.users.push_back(std::move(u));
    }
    std::sort(cohort.users.begin(), cohort.users.end(), [](const User& a, const User& b) { return a.id < b.id; });

    // Open level sets come from the data.
    for (std::size_t i = 0; i < kProfileFieldCount; ++i) {
        if (fields[i].kind == FieldKind::length || !fields[i].levels.empty()) continue;
        std::set<std::string> lv;
        for (const auto& u : cohort.users)
            if (!u.profile.answers[i].empty()) lv.insert(u.profile.answers[i]);
        cohort.schema.levels[i].assign(lv.begin(), lv.end());
    }

    auto check_time = [&](const std::string& path, std::size_t line, const std::string& cell,
                          std::int64_t& out) -> bool {
        const auto t = parse_iso8601(cell);
        if (!t) {
            problems.push_back(path + ":" + std::to_string(line) + ": unparseable timestamp '" + cell + "'");
            return false;
        }
        if (!calendar.week_of(*t)) {
            problems.push_back(path + ":" + std::to_string(line) + ": timestamp " + cell + " outside course calendar");
            return false;
        }
        out = *t;
        return true;
    };
    auto check_user = [&](const std::string& path, std::size_t line, const std::string& uid) -> bool {
        if (seen.count(uid)) return true;
        if (options.skip_unknown_users) {
            ++result.diagnostics.skipped_unknown_user_events;
            return false;
        }
        problems.push_back(path + ":" + std::to_string(line) + ": unknown user '" + uid + "'");
        return false;
    };

    for (const auto& rec : detail::load_csv(forum_path, forum_csv_header())) {
        const auto& f = rec.fields;
        ForumEvent e;
        e.user_id = f[0];
        const auto kind = forum_kind_from(f[2]);
        if (!kind) {
            problems.push_back(forum_path + ":" + std::to_string(rec.line) + ": unknown forum kind '" + f[2] + "'");
            continue;
        }
        e.kind = *kind;
        e.text_length = static_cast<std::int64_t>(f[3].size());
        e.target_user_id = f[4];
        e.target_post_id = f[5];
        if (!detail::parse_flag(f[6], e.author_is_instructor)) {
            problems.push_back(forum_path + ":" + std::to_string(rec.line) + ": author_is_instructor must be 0 or 1");
            continue;
        }
        if ((e.kind == ForumKind::post) != e.target_post_id.empty()) {
            problems.push_back(forum_path + ":" + std::to_string(rec.line) +
                               ": replies/comments need target_post_id, posts must not have one");
            continue;
        }
        if (!check_time(forum_path, rec.line, f[1], e.timestamp)) continue;
        if (!e.author_is_instructor && !check_user(forum_path, rec.line, e.user_id)) continue;
        cohort.forum_events.push_back(std::move(e));
    }

    for (const auto& rec : detail::load_csv(activity_path, activity_csv_header())) {
        const auto& f = rec.fields;
        ActivityEvent e;
        e.user_id = f[0];
        const auto kind = activity_kind_from(f[2]);
        if (!kind) {
            problems.push_back(activity_path + ":" + std::to_string(rec.line) + ": unknown activity kind '" + f[2] +
                               "'");
            continue;
        }
        e.kind = *kind;
        if (!check_time(activity_path, rec.line, f[1], e.timestamp)) continue;
        if (!check_user(activity_path, rec.line, e.user_id)) continue;
        cohort.activity_events.push_back(std::move(e));
    }

    if (!problems.empty()) {
        std::string msg = "ingestion failed with " + std::to_string(problems.size()) + " problem(s):";
        for (const auto& p : problems) msg += "\n  " + p;
        throw DataError(msg);
    }
    cohort.validate();
    return result;
}

/// Write the three CSV files. Text columns are filled with placeholder
/// characters of the recorded length so that re-ingestion reproduces the cohort.
inline void write_cohort_csv(const Cohort& cohort, const std::string& profile_path, const std::string& forum_path,
                             const std::string& activity_path) {
    auto open = [](const std::string& p) {
        std::ofstream os(p, std::ios::binary);
        if (!os) throw DataError("cannot write " + p);
        return os;
    };
    const auto& fields = profile_fields();
    {
        auto os = open(profile_path);
        csv::write_row(os, profile_csv_header());
        for (const auto& u : cohort.users) {
            std::vector<std::string> row = {u.id, u.completed ? "1" : "0"};
            for (std::size_t i = 0; i < kProfileFieldCount; ++i) {
                if (fields[i].kind == FieldKind::length)
                    row.emplace_back(static_cast<std::size_t>(i == kBiographyField ? u.profile.biography_length
                                                                                   : u.profile.objectives_length),
                                     'x');
                else
                    row.push_back(u.profile.answers[i]);
            }
            csv::write_row(os, row);
        }
    }
    {
        auto os = open(forum_path);
        csv::write_row(os, forum_csv_header());
        for (const auto& e : cohort.forum_events)
            csv::write_row(os, {e.user_id, format_iso8601(e.timestamp), std::string(to_string(e.kind)),
                                std::string(static_cast<std::size_t>(e.text_length), 'x'), e.target_user_id,
                                e.target_post_id, e.author_is_instructor ? "1" : "0"});
    }
    {
        auto os = open(activity_path);
        csv::write_row(os, activity_csv_header());
        for (const auto& e : cohort.activity_events)
            csv::write_row(os, {e.user_id, format_iso8601(e.timestamp), std::string(to_string(e.kind))});
    }
}

// ---------------------------------------------------------------------------
// JSON serialization (keys are emitted sorted, so output is stable)

inline nlohmann::json to_json(const Cohort& c) {
    nlohmann::json j;
    j["calendar"] = {{"start", format_iso8601(c.calendar.start)}, {"week_count", c.calendar.week_count}};
    nlohmann::json schema = nlohmann::json::object();
    for (std::size_t i = 0; i < kProfileFieldCount; ++i) schema[profile_fields()[i].id] = c.schema.levels[i];
    j["schema"] = schema;
    nlohmann::json users = nlohmann::json::array();
    for (const auto& u : c.users) {
        nlohmann::json ans = nlohmann::json::array();
        for (const auto& a : u.profile.answers) ans.push_back(a);
        users.push_back({{"id", u.id},
                         {"completed", u.completed},
                         {"answers", ans},
                         {"biography_length", u.profile.biography_length},
                         {"objectives_length", u.profile.objectives_length}});
    }
    j["users"] = std::move(users);
    nlohmann::json forum = nlohmann::json::array();
    for (const auto& e : c.forum_events)
        forum.push_back({{"user_id", e.user_id},
                         {"timestamp", format_iso8601(e.timestamp)},
                         {"kind", to_string(e.kind)},
                         {"text_length", e.text_length},
                         {"target_user_id", e.target_user_id},
                         {"target_post_id", e.target_post_id},
                         {"author_is_instructor", e.author_is_instructor}});
    j["forum_events"] = std::move(forum);
    nlohmann::json act = nlohmann::json::array();
    for (const auto& e : c.activity_events)
        act.push_back({{"user_id", e.user_id}, {"timestamp", format_iso8601(e.timestamp)}, {"kind", to_string(e.kind)}});
    j["activity_events"] = std::move(act);
    return j;
}

inline nlohmann::json to_json(const LabeledCohort& lc) {
    nlohmann::json j = to_json(lc.cohort);
    nlohmann::json d = nlohmann::json::array();
    for (const auto& w : lc.dropout_week) d.push_back(w ? nlohmann::json(*w) : nlohmann::json(nullptr));
    j["dropout_week"] = std::move(d);
    return j;
}

inline Cohort cohort_from_json(const nlohmann::json& j) {
    Cohort c;
    auto parse_time = [](const nlohmann::json& v) {
        const auto t = parse_iso8601(v.get<std::string>());
        if (!t) throw DataError("cohort json: bad timestamp");
        return *t;
    };
    c.calendar.start = parse_time(j.at("calendar").at("start"));
    c.calendar.week_count = j.at("calendar").at("week_count").get<int>();
    for (std::size_t i = 0; i < kProfileFieldCount; ++i)
        c.schema.levels[i] = j.at("schema").at(profile_fields()[i].id).get<std::vector<std::string>>();
    for (const auto& ju : j.at("users")) {
        User u;
        u.id = ju.at("id").get<std::string>();
        u.completed = ju.at("completed").get<bool>();
        const auto ans = ju.at("answers").get<std::vector<std::string>>();
        if (ans.size() != kProfileFieldCount) throw DataError("cohort json: wrong answer count");
        std::copy(ans.begin(), ans.end(), u.profile.answers.begin());
        u.profile.biography_length = ju.at("biography_length").get<std::int64_t>();
        u.profile.objectives_length = ju.at("objectives_length").get<std::int64_t>();
        c.users.push_back(std::move(u));
    }
    for (const auto& je : j.at("forum_events")) {
        ForumEvent e;
        e.user_id = je.at("user_id").get<std::string>();
        e.timestamp = parse_time(je.at("timestamp"));
        const auto k = forum_kind_from(je.at("kind").get<std::string>());
        if (!k) throw DataError("cohort json: bad forum kind");
        e.kind = *k;
        e.text_length = je.at("text_length").get<std::int64_t>();
        e.target_user_id = je.at("target_user_id").get<std::string>();
        e.target_post_id = je.at("target_post_id").get<std::string>();
        e.author_is_instructor = je.at("author_is_instructor").get<bool>();
        c.forum_events.push_back(std::move(e));
    }
    for (const auto& je : j.at("activity_events")) {
        ActivityEvent e;
        e.user_id = je.at("user_id").get<std::string>();
        e.timestamp = parse_time(je.at("timestamp"));
        const auto k = activity_kind_from(je.at("kind").get<std::string>());
        if (!k) throw DataError("cohort json: bad activity kind");
        e.kind = *k;
        c.activity_events.push_back(std::move(e));
    }
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// Synthetic cohort generator

struct SynthConfig {
    std::size_t user_count = 3000;
    int week_count = 9;
    std::int64_t start = parse_iso8601("2015-10-05T00:00:00Z").value();

    // Target marginals.
    double dropout_rate = 0.87;
    double no_assignment_fraction = 0.75;
    double completion_among_submitters = 0.51;
    double empty_profile_fraction = 0.37;
    double completion_among_empty = 0.005;

    // Log-odds contributions to weekly persistence.
    double assignment_signal = 2.0;
    double forum_signal = 1.0;
    double profile_signal = 0.8;

    std::uint64_t seed = 0;

    void validate() const {
        auto rate = [](double v, const char* name) {
            if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(std::string("synth: ") + name + " must lie in [0,1]");
        };
        rate(dropout_rate, "dropout_rate");
        rate(no_assignment_fraction, "no_assignment_fraction");
        rate(completion_among_submitters, "completion_among_submitters");
        rate(empty_profile_fraction, "empty_profile_fraction");
        rate(completion_among_empty, "completion_among_empty");
        if (user_count < 1) throw ConfigError("synth: user_count must be >= 1");
        if (week_count < 2) throw ConfigError("synth: week_count must be >= 2");
    }
};

/// Per-stratum head counts implied by a config. Throws ConfigError naming the
/// violated constraint when the marginals cannot hold simultaneously.
struct SynthStrata {
    std::size_t completers = 0;
    std::size_t submitters = 0;
    std::size_t completing_submitters = 0;
    std::size_t completing_non_submitters = 0;
    std::size_t empty_profiles = 0;
    std::size_t completing_empty = 0;
};

inline SynthStrata synth_strata(const SynthConfig& cfg) {
    cfg.validate();
    const double n = static_cast<double>(cfg.user_count);
    auto rnd = [](double v) { return static_cast<std::int64_t>(std::llround(v)); };
    const std::int64_t N = static_cast<std::int64_t>(cfg.user_count);
    const std::int64_t C = rnd(n * (1.0 - cfg.dropout_rate));
    const std::int64_t S = rnd(n * (1.0 - cfg.no_assignment_fraction));
    const std::int64_t CS = rnd(static_cast<double>(S) * cfg.completion_among_submitters);
    const std::int64_t CN = C - CS;
    const std::int64_t E = rnd(n * cfg.empty_profile_fraction);
    const std::int64_t CE = rnd(static_cast<double>(E) * cfg.completion_among_empty);

    if (CN < 0)
        throw ConfigError("synth: completion_among_submitters implies more completing submitters (" +
                          std::to_string(CS) + ") than completers overall (" + std::to_string(C) + ")");
    if (CN > N - S)
        throw ConfigError("synth: overall completion needs more non-submitting completers than there are non-submitters");
    if (CE > C) throw ConfigError("synth: completion_among_empty implies more empty-profile completers than completers");
    if (E - CE > N - C)
        throw ConfigError("synth: empty_profile_fraction leaves more empty-profile dropouts than dropouts");

    return {static_cast<std::size_t>(C),  static_cast<std::size_t>(S),  static_cast<std::size_t>(CS),
            static_cast<std::size_t>(CN), static_cast<std::size_t>(E), static_cast<std::size_t>(CE)};
}

namespace detail {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct SynthUserPlan {
    bool completer = false;
    bool submitter = false;
    bool empty_profile = false;
};

struct WeekCounts {
    int posts = 0, replies = 0, comments = 0;
    bool assignment = false, review = false, hangout = false;
    bool any() const { return posts + replies + comments > 0 || assignment || review || hangout; }
};

struct SynthUserDraw {
    ProfileRecord profile;
    std::vector<WeekCounts> weeks;  // per week
};

inline std::string user_id_for(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "u%05zu", i + 1);
    return buf;
}

inline std::int64_t text_length(Rng& rng, double log_mean) {
    return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::exp(rng.normal(log_mean, 0.6))));
}

/// Phase one for a single learner: profile plus per-week event counts, drawn
/// from the learner's own stream so the result is independent of other users.
inline SynthUserDraw draw_user(const SynthConfig& cfg, const SynthUserPlan& plan, const ProfileSchema& schema,
                               Rng& rng) {
    SynthUserDraw out;
    const auto& fields = profile_fields();
    const int W = cfg.week_count;

    // Profile richness: latent, shifts both answer density and persistence.
    double richness = 0.0;
    if (!plan.empty_profile) {
        richness = rng.normal() + (plan.completer ? 0.8 : 0.0);
        const double fill = sigmoid(1.6 + 0.6 * richness);
        for (std::size_t i = 0; i < kProfileFieldCount; ++i) {
            if (fields[i].kind == FieldKind::length) {
                const bool present = rng.bernoulli(sigmoid(1.0 + richness));
                std::int64_t len = 0;
                if (present)
                    len = std::max<std::int64_t>(
                        1, static_cast<std::int64_t>(std::exp(rng.normal(4.5 + 0.5 * richness, 0.7))));
                (i == kBiographyField ? out.profile.biography_length : out.profile.objectives_length) = len;
                continue;
            }
            if (!rng.bernoulli(fill)) continue;
            const auto& lv = schema.levels[i];
            std::size_t pick;
            if (fields[i].kind == FieldKind::ordinal) {
                // Ordinal answers lean upward with richness.
                const double z = std::clamp(0.5 + 0.15 * richness + 0.25 * rng.normal(), 0.0, 0.999999);
                pick = static_cast<std::size_t>(z * static_cast<double>(lv.size()));
            } else {
                pick = rng.index(lv.size());
            }
            out.profile.answers[i] = lv[pick];
        }
        if (out.profile.empty()) out.profile.biography_length = 1 + static_cast<std::int64_t>(rng.index(40));
    }

    // Forum propensity (posts per active week).
    const double forum_rate = 0.35 * std::exp(0.9 * rng.normal() + 0.3 * richness) * (plan.empty_profile ? 0.3 : 1.0);

    out.weeks.assign(static_cast<std::size_t>(W), WeekCounts{});
    auto emit_week = [&](int w, bool allow_skip) {
        WeekCounts& wc = out.weeks[static_cast<std::size_t>(w)];
        if (allow_skip && rng.bernoulli(0.04)) return false;  // silent but still enrolled
        if (plan.submitter) wc.assignment = rng.bernoulli(plan.completer ? 0.85 : 0.7);
        wc.review = rng.bernoulli(plan.submitter ? 0.3 : 0.08);
        wc.hangout = rng.bernoulli(0.07);
        wc.posts = rng.poisson(forum_rate);
        wc.replies = rng.poisson(0.6 * forum_rate);
        wc.comments = rng.poisson(0.5 * forum_rate);
        if (!wc.any()) {
            if (plan.submitter) {
                wc.assignment = true;
            } else {
                switch (rng.index(3)) {
                    case 0: wc.posts = 1; break;
                    case 1: wc.hangout = true; break;
                    default: wc.review = true;
                }
            }
        }
        return true;
    };

    if (plan.completer) {
        for (int w = 0; w < W; ++w) emit_week(w, false);
    } else {
        // Learners who never show up.
        const double no_start_logit = -0.2 + (plan.empty_profile ? 1.8 : 0.0) - cfg.profile_signal * richness;
        const bool starts = plan.submitter || !rng.bernoulli(sigmoid(no_start_logit));
        if (starts) {
            // Some learners only begin in week 1 or 2.
            int first = 0;
            if (W > 2 && rng.bernoulli(0.5)) first = rng.bernoulli(0.7) ? 1 : 2;
            bool forum_seen = false;
            for (int w = first; w < W; ++w) {
                const bool active = emit_week(w, w > first && w < W - 1);
                const WeekCounts& wc = out.weeks[static_cast<std::size_t>(w)];
                if (wc.posts + wc.replies + wc.comments > 0) forum_seen = true;
                if (w == W - 1) break;
                if (!active) continue;
                // Weekly hazard of leaving after this week.
                const double logit = 0.4 + (plan.empty_profile ? 0.8 : 0.0) - (plan.submitter ? 0.6 : 0.0) -
                                     cfg.assignment_signal * (wc.assignment ? 1.0 : 0.0) -
                                     cfg.forum_signal * (forum_seen ? 1.0 : 0.0) - cfg.profile_signal * richness;
                if (rng.bernoulli(sigmoid(logit))) {
                    for (int r = w + 1; r < W; ++r) out.weeks[static_cast<std::size_t>(r)] = WeekCounts{};
                    break;
                }
            }
        }
    }

    if (plan.submitter) {
        bool any = false;
        int last_active = -1;
        for (int w = 0; w < W; ++w) {
            any |= out.weeks[static_cast<std::size_t>(w)].assignment;
            if (out.weeks[static_cast<std::size_t>(w)].any()) last_active = w;
        }
        if (!any) out.weeks[static_cast<std::size_t>(std::max(last_active, 0))].assignment = true;
    }
    return out;
}

}  // namespace detail

/// Generate a labelled cohort whose headline marginals hold by construction
/// (stratified head counts) and whose weekly activity follows a logistic
/// hazard with planted assignment, forum and profile signals.
inline LabeledCohort generate_synthetic(const SynthConfig& cfg) {
    const SynthStrata strata = synth_strata(cfg);
    const std::size_t N = cfg.user_count;

    Cohort cohort;
    cohort.calendar = {cfg.start, cfg.week_count};
    cohort.schema = declared_schema();
    cohort.schema.levels[0] = detail::numbered_levels("C", 113, 3);
    cohort.schema.levels[1] = detail::numbered_levels("L", 62, 2);

    // Stratified assignment of (completer, submitter, empty profile).
    std::vector<detail::SynthUserPlan> plans(N);
    {
        Rng rng(derive_seed(cfg.seed, {1}));
        auto perm = iota_indices(N);
        rng.shuffle(perm);
        std::vector<std::size_t> completers(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(strata.completers));
        std::vector<std::size_t> dropouts(perm.begin() + static_cast<std::ptrdiff_t>(strata.completers), perm.end());
        for (std::size_t k = 0; k < completers.size(); ++k) {
            plans[completers[k]].completer = true;
            plans[completers[k]].submitter = k < strata.completing_submitters;
        }
        const std::size_t dropout_submitters = strata.submitters - strata.completing_submitters;
        for (std::size_t k = 0; k < dropouts.size(); ++k) plans[dropouts[k]].submitter = k < dropout_submitters;

        // Empty profiles go to non-submitters first.
        auto pick_empty = [&](std::vector<std::size_t> pool, std::size_t count) {
            rng.shuffle(pool);
            std::stable_partition(pool.begin(), pool.end(), [&](std::size_t i) { return !plans[i].submitter; });
            for (std::size_t k = 0; k < count; ++k) plans[pool[k]].empty_profile = true;
        };
        pick_empty(completers, strata.completing_empty);
        pick_empty(dropouts, strata.empty_profiles - strata.completing_empty);
    }

    std::vector<detail::SynthUserDraw> draws(N);
    for (std::size_t i = 0; i < N; ++i) {
        Rng rng(derive_seed(cfg.seed, {2, i}));
        draws[i] = detail::draw_user(cfg, plans[i], cohort.schema, rng);
    }

    cohort.users.resize(N);
    for (std::size_t i = 0; i < N; ++i) {
        cohort.users[i].id = detail::user_id_for(i);
        cohort.users[i].profile = draws[i].profile;
        cohort.users[i].completed = plans[i].completer;
    }

    // Phase two: timestamps, text lengths and reply targets.
    struct PostRef {
        std::int64_t t;
        std::size_t author;
        std::string id;
    };
    std::vector<PostRef> posts;
    std::vector<std::vector<std::int64_t>> post_times(N);
    for (std::size_t i = 0; i < N; ++i) {
        Rng rng(derive_seed(cfg.seed, {3, i}));
        int k = 0;
        for (int w = 0; w < cfg.week_count; ++w) {
            const auto& wc = draws[i].weeks[static_cast<std::size_t>(w)];
            const std::int64_t ws = cfg.start + w * kSecondsPerWeek;
            for (int p = 0; p < wc.posts; ++p) {
                const std::int64_t t = ws + static_cast<std::int64_t>(rng.index(kSecondsPerWeek));
                const std::string pid = cohort.users[i].id + "-p" + std::to_string(k++);
                posts.push_back({t, i, pid});
                cohort.forum_events.push_back({cohort.users[i].id, t, ForumKind::post, detail::text_length(rng, 5.3),
                                               "", "", false});
            }
            for (auto [flag, kind] : {std::pair{wc.assignment, ActivityKind::assignment_submitted},
                                      std::pair{wc.review, ActivityKind::review_submitted},
                                      std::pair{wc.hangout, ActivityKind::hangout_attended}})
                if (flag)
                    cohort.activity_events.push_back(
                        {cohort.users[i].id, ws + static_cast<std::int64_t>(rng.index(kSecondsPerWeek)), kind});
        }
    }
    std::sort(posts.begin(), posts.end(), [](const PostRef& a, const PostRef& b) {
        return a.t != b.t ? a.t < b.t : a.id < b.id;
    });

    for (std::size_t i = 0; i < N; ++i) {
        Rng rng(derive_seed(cfg.seed, {4, i}));
        for (int w = 0; w < cfg.week_count; ++w) {
            const auto& wc = draws[i].weeks[static_cast<std::size_t>(w)];
            const std::int64_t ws = cfg.start + w * kSecondsPerWeek;
            for (auto [count, kind] : {std::pair{wc.replies, ForumKind::reply_given},
                                       std::pair{wc.comments, ForumKind::comment_given}}) {
                for (int r = 0; r < count; ++r) {
                    const std::int64_t t = ws + static_cast<std::int64_t>(rng.index(kSecondsPerWeek));
                    // Target a post published before t by someone else.
                    auto end = std::lower_bound(posts.begin(), posts.end(), t,
                                                [](const PostRef& p, std::int64_t v) { return p.t < v; });
                    const std::size_t avail = static_cast<std::size_t>(end - posts.begin());
                    const PostRef* target = nullptr;
                    for (int attempt = 0; attempt < 4 && avail > 0; ++attempt) {
                        // Recent posts attract most responses.
                        const std::size_t back = std::min<std::size_t>(avail, 200);
                        const PostRef& cand = posts[avail - 1 - rng.index(back)];
                        if (cand.author != i) {
                            target = &cand;
                            break;
                        }
                    }
                    if (!target) {
                        cohort.forum_events.push_back({cohort.users[i].id, t, ForumKind::post,
                                                       detail::text_length(rng, 5.3), "", "", false});
                        continue;
                    }
                    cohort.forum_events.push_back({cohort.users[i].id, t, kind,
                                                   detail::text_length(rng, kind == ForumKind::reply_given ? 4.8 : 4.0),
                                                   cohort.users[target->author].id, target->id, false});
                }
            }
        }
    }

    // Instructors answer a share of posts within the same week.
    {
        Rng rng(derive_seed(cfg.seed, {5}));
        for (const auto& p : posts) {
            if (!rng.bernoulli(0.12)) continue;
            const std::int64_t week_end = cfg.start + (*cohort.calendar.week_of(p.t) + 1) * kSecondsPerWeek;
            const std::int64_t gap = week_end - p.t - 1;
            if (gap <= 0) continue;
            const std::int64_t t = p.t + 1 + static_cast<std::int64_t>(rng.index(static_cast<std::size_t>(gap)));
            const bool reply = rng.bernoulli(0.6);
            cohort.forum_events.push_back({"instructor_" + std::to_string(rng.index(3) + 1), t,
                                           reply ? ForumKind::reply_given : ForumKind::comment_given,
                                           detail::text_length(rng, 5.0), cohort.users[p.author].id, p.id, true});
        }
    }

    std::stable_sort(cohort.forum_events.begin(), cohort.forum_events.end(),
                     [](const ForumEvent& a, const ForumEvent& b) {
                         return a.timestamp != b.timestamp ? a.timestamp < b.timestamp : a.user_id < b.user_id;
                     });
    std::stable_sort(cohort.activity_events.begin(), cohort.activity_events.end(),
                     [](const ActivityEvent& a, const ActivityEvent& b) {
                         return a.timestamp != b.timestamp ? a.timestamp < b.timestamp : a.user_id < b.user_id;
                     });
    return derive_labels(std::move(cohort));
}

}  // namespace dropout
