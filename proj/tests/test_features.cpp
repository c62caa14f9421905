#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "dropout/features.hpp"
#include "test_util.hpp"

using namespace dropout;
using namespace dropout::testing;

namespace {

std::size_t col(const std::vector<FeatureDescriptor>& d, const std::string& id, const std::string& level = "",
                std::optional<int> week = std::nullopt) {
    for (std::size_t j = 0; j < d.size(); ++j)
        if (d[j].feature_id == id && d[j].level == level && d[j].source_week == week) return j;
    ADD_FAILURE() << "no column " << id << " " << level;
    return 0;
}

LabeledCohort small_labeled() {
    Cohort c = empty_cohort();
    c.users.push_back(user("a"));
    c.users.push_back(user("b"));
    c.users.push_back(user("c", true));
    c.users[1].profile.answers[9] = "extensive";  // pbl_experience
    c.users[1].profile.answers[2] = "male";
    c.forum_events.push_back(post("a", 1, 10));
    c.forum_events.push_back(post("a", 2, 30));
    c.forum_events.push_back(answer("b", 3, ForumKind::reply_given, "a", "pa", 8));
    c.activity_events.push_back(activity("b", 9));  // week 1
    for (int w = 0; w < 9; ++w) c.activity_events.push_back(activity("c", 7 * w));
    return derive_labels(c);
}

}  // namespace

TEST(Profile, BlankProfileIsAllNc) {
    const auto lc = small_labeled();
    const auto b = extract_profile(lc);
    ASSERT_EQ(b.X.rows(), 3u);
    for (std::size_t j = 0; j < b.descriptors.size(); ++j) {
        const auto& d = b.descriptors[j];
        if (d.level == "NC") { EXPECT_EQ(b.X(0, j), 1.0) << d.header(); }
        else EXPECT_EQ(b.X(0, j), 0.0) << d.header();
    }
}

TEST(Profile, OrdinalCodeAndIndicator) {
    const auto lc = small_labeled();
    const auto b = extract_profile(lc);
    EXPECT_EQ(b.X(1, col(b.descriptors, "pd_j")), 2.0);
    EXPECT_EQ(b.X(1, col(b.descriptors, "pd_j", "NC")), 0.0);
    EXPECT_EQ(b.X(1, col(b.descriptors, "pd_c", "male")), 1.0);
    EXPECT_EQ(b.X(1, col(b.descriptors, "pd_c", "NC")), 0.0);
}

TEST(Profile, UnknownLevelIsDataError) {
    Cohort c = empty_cohort();
    c.users.push_back(user("a"));
    c.users[0].profile.answers[2] = "martian";
    EXPECT_THROW(extract_profile(derive_labels(c)), DataError);
}

TEST(Profile, RowPerUser) {
    SynthConfig s;
    s.user_count = 2769;
    s.seed = 2;
    EXPECT_EQ(extract_profile(generate_synthetic(s)).X.rows(), 2769u);
}

TEST(Profile, OneHotPartitionOnSyntheticCohort) {
    SynthConfig s;
    s.user_count = 600;
    s.seed = 9;
    const auto b = extract_profile(generate_synthetic(s), FeatureOptions{true, false});
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t j = 0; j < b.descriptors.size(); ++j)
        if (b.descriptors[j].encoding == Encoding::one_hot_level) groups[b.descriptors[j].group_id].push_back(j);
    EXPECT_FALSE(groups.empty());
    for (std::size_t r = 0; r < b.X.rows(); ++r)
        for (const auto& [g, cols] : groups) {
            double s1 = 0.0;
            for (auto j : cols) {
                EXPECT_TRUE(b.X(r, j) == 0.0 || b.X(r, j) == 1.0);
                s1 += b.X(r, j);
            }
            EXPECT_EQ(s1, 1.0) << g << " row " << r;
        }
}

TEST(Temporal, CountsAndMeanLengths) {
    const auto lc = small_labeled();
    const auto w0 = extract_temporal(lc, 0);
    EXPECT_EQ(w0.X(0, col(w0.descriptors, "fp", "", 0)), 2.0);
    EXPECT_EQ(w0.X(0, col(w0.descriptors, "fp_l", "", 0)), 20.0);
    EXPECT_EQ(w0.X(0, col(w0.descriptors, "fr_ba", "", 0)), 1.0);
    EXPECT_EQ(w0.X(1, col(w0.descriptors, "fr_ab", "", 0)), 1.0);
    EXPECT_EQ(w0.X(1, col(w0.descriptors, "fr_ab_l", "", 0)), 8.0);
    EXPECT_EQ(w0.X(1, col(w0.descriptors, "a", "", 0)), 0.0);
    const auto w1 = extract_temporal(lc, 1);
    EXPECT_EQ(w1.X(1, col(w1.descriptors, "a", "", 1)), 1.0);
    for (std::size_t j = 0; j < w1.X.cols(); ++j) EXPECT_EQ(w1.X(0, j), 0.0);
}

TEST(Temporal, CumulativeWindow) {
    const auto lc = small_labeled();
    const auto w3 = extract_temporal(lc, 3, FeatureOptions{false, true});
    EXPECT_EQ(w3.X(1, col(w3.descriptors, "a", "", 3)), 1.0);
    EXPECT_EQ(w3.X(0, col(w3.descriptors, "fp", "", 3)), 2.0);
}

TEST(Temporal, DroppedFeaturesOnlyOnRequest) {
    const auto lc = small_labeled();
    const auto def = extract_temporal(lc, 0), all = extract_temporal(lc, 0, FeatureOptions{true, false});
    EXPECT_EQ(def.descriptors.size(), 12u);
    EXPECT_EQ(all.descriptors.size(), temporal_features().size());
}

TEST(Assemble, ColumnsCoverLaggedWeeks) {
    const auto lc = small_labeled();
    const auto bank = FeatureBank::build(lc);
    const auto d = assemble_matrix(bank, TaskKind::state, 2, 2);
    std::set<int> weeks;
    for (const auto& desc : d.descriptors)
        if (desc.source_week) weeks.insert(*desc.source_week);
    EXPECT_EQ(weeks, (std::set<int>{0, 1, 2}));
    EXPECT_EQ(d.cols(), bank.profile.descriptors.size() + 3 * 12);
}

TEST(Assemble, ProfileOnly) {
    const auto bank = FeatureBank::build(small_labeled());
    const auto d = assemble_matrix(bank, TaskKind::state, 0, -1);
    for (const auto& desc : d.descriptors) EXPECT_FALSE(desc.temporal());
    EXPECT_EQ(d.cols(), bank.profile.descriptors.size());
}

TEST(Assemble, FutureLagRejected) {
    const auto bank = FeatureBank::build(small_labeled());
    EXPECT_THROW(assemble_matrix(bank, TaskKind::state, 2, 3), ModelError);
    EXPECT_THROW(assemble_matrix(bank, TaskKind::state, 9, 0), ModelError);
}

TEST(Assemble, ExactWeekDropsEarlierDropouts) {
    Cohort c = empty_cohort();
    for (const char* id : {"x", "y", "z"}) c.users.push_back(user(id));
    c.activity_events.push_back(activity("x", 1));       // dropout week 1
    c.activity_events.push_back(activity("y", 2 * 7));   // dropout week 3
    c.activity_events.push_back(activity("z", 5 * 7));   // dropout week 6
    const auto bank = FeatureBank::build(derive_labels(c));
    const auto d = assemble_matrix(bank, TaskKind::exact_week, 3, 3);
    EXPECT_EQ(d.user_ids, (std::vector<std::string>{"y", "z"}));
    EXPECT_EQ(d.y, (Labels{1, 0}));
    const auto s = assemble_matrix(bank, TaskKind::state, 3, 3);
    EXPECT_EQ(s.y, (Labels{1, 1, 0}));
}

TEST(Assemble, CausalityOverFullGrid) {
    SynthConfig s;
    s.user_count = 300;
    s.seed = 4;
    const auto bank = FeatureBank::build(generate_synthetic(s));
    for (int w = 0; w < 9; ++w)
        for (int l = -1; l <= w; ++l)
            for (auto k : {TaskKind::state, TaskKind::exact_week}) {
                const auto d = assemble_matrix(bank, k, w, l);
                for (const auto& desc : d.descriptors)
                    if (desc.source_week) { EXPECT_LE(*desc.source_week, l); }
            }
}

TEST(Assemble, EveryDeclaredGroupAppears) {
    SynthConfig s;
    s.user_count = 200;
    const auto bank = FeatureBank::build(generate_synthetic(s));
    const auto d = assemble_matrix(bank, TaskKind::state, 8, 8);
    std::set<std::string> seen;
    for (const auto& desc : d.descriptors) seen.insert(desc.group_id);
    const auto declared = declared_feature_groups();
    EXPECT_EQ(seen, std::set<std::string>(declared.begin(), declared.end()));
}

TEST(Standardize, HandArithmetic) {
    Matrix X(3, 2);
    X(0, 0) = 0;  X(1, 0) = 10; X(2, 0) = 20;
    X(0, 1) = 4;  X(1, 1) = 4;  X(2, 1) = 9;
    std::vector<FeatureDescriptor> desc = {{"n", std::nullopt, Encoding::numeric_standardized, "", "n"},
                                           {"k", std::nullopt, Encoding::numeric_standardized, "", "k"}};
    const std::vector<std::size_t> train = {0, 1};
    const auto s = fit_standardizer(X, desc, train);
    const Matrix Z = s.apply(X);
    EXPECT_DOUBLE_EQ(Z(0, 0), -1.0);
    EXPECT_DOUBLE_EQ(Z(1, 0), 1.0);
    EXPECT_DOUBLE_EQ(Z(2, 0), 3.0);
    EXPECT_EQ(Z(0, 1), 0.0);  // constant on the training rows
    EXPECT_EQ(Z(1, 1), 0.0);
}

TEST(Standardize, LeavesNonNumericColumnsAlone) {
    Matrix X(2, 2);
    X(0, 0) = 1; X(1, 0) = 0; X(0, 1) = 2; X(1, 1) = 0;
    std::vector<FeatureDescriptor> desc = {{"b", std::nullopt, Encoding::boolean, "", "b"},
                                           {"o", std::nullopt, Encoding::ordinal_code, "", "o"}};
    const std::vector<std::size_t> train = {0, 1};
    EXPECT_EQ(fit_standardizer(X, desc, train).apply(X), X);
}

TEST(Standardize, TrainingColumnsHaveUnitMoments) {
    SynthConfig s;
    s.user_count = 500;
    const auto d = assemble_matrix(generate_synthetic(s), TaskKind::state, 3, 3);
    std::vector<std::size_t> train;
    for (std::size_t i = 0; i < d.rows(); i += 2) train.push_back(i);
    const auto st = fit_standardizer(d, train);
    const Matrix Z = st.apply(d.X);
    for (std::size_t j = 0; j < d.cols(); ++j) {
        if (!st.active[j]) continue;
        double m = 0, v = 0;
        for (auto r : train) m += Z(r, j);
        m /= double(train.size());
        for (auto r : train) v += (Z(r, j) - m) * (Z(r, j) - m);
        v /= double(train.size());
        EXPECT_NEAR(m, 0.0, 1e-9);
        if (v > 0) { EXPECT_NEAR(std::sqrt(v), 1.0, 1e-9); }
    }
}

TEST(Export, WritesCsvAndDescriptors) {
    TempDir dir("export");
    const auto d = assemble_matrix(small_labeled(), TaskKind::state, 1, 1);
    export_dataset(d, dir.file("d.csv"), dir.file("d.json"));
    const auto recs = csv::parse(csv::read_file(dir.file("d.csv")));
    ASSERT_EQ(recs.size(), d.rows() + 1);
    const auto j = nlohmann::json::parse(csv::read_file(dir.file("d.json")));
    EXPECT_TRUE(j.is_object() || j.is_array());
}
