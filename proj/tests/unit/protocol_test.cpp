#include "fcac/protocol.hpp"

#include <gtest/gtest.h>

#include <map>
#include <set>
#include <sstream>

using namespace fcac;

namespace {

/// `classes` labels named prefix0.., `train` + `test` records each.
SessionManifest make_session(const std::string& prefix, int classes, int train, int test)
{
    SessionManifest s;
    for (int c = 0; c < classes; ++c) {
        const std::string label = prefix + std::to_string(c);
        for (int i = 0; i < train; ++i) s.train.push_back({label + "/tr" + std::to_string(i), label});
        for (int i = 0; i < test; ++i) s.test.push_back({label + "/te" + std::to_string(i), label});
    }
    return s;
}

std::map<std::string, int> label_counts(const Manifest& m)
{
    std::map<std::string, int> counts;
    for (const auto& r : m) ++counts[r.label];
    return counts;
}

} // namespace

TEST(LabelSpace, RejectsDuplicates)
{
    EXPECT_THROW(LabelSpace({"a", "b", "a"}), ProtocolError);
    EXPECT_NO_THROW(LabelSpace({"a", "b"}));
}

TEST(LabelSpace, FirstSeenOrder)
{
    Manifest m{{"1", "z"}, {"2", "a"}, {"3", "z"}, {"4", "m"}};
    EXPECT_EQ(LabelSpace::from_manifest(m).labels(), (std::vector<std::string>{"z", "a", "m"}));
}

TEST(BuildSchedule, NsynthLayout)
{
    std::vector<SessionManifest> inc;
    for (int i = 0; i < 9; ++i) inc.push_back(make_session("s" + std::to_string(i) + "_", 5, 5, 2));
    auto schedule = build_schedule(make_session("b", 55, 10, 2), inc, 5, 5, 1);
    ASSERT_EQ(schedule.size(), 10u);
    std::set<std::string> all;
    for (const auto& s : schedule.sessions) all.insert(s.label_space.labels().begin(), s.label_space.labels().end());
    EXPECT_EQ(all.size(), 100u);
    EXPECT_EQ(label_counts(cumulative_test_set(schedule, 9)).size(), 100u);
}

TEST(BuildSchedule, BaseOnly)
{
    auto schedule = build_schedule(make_session("b", 3, 4, 1), {}, 2, 2, 0);
    EXPECT_EQ(schedule.size(), 1u);
}

TEST(BuildSchedule, OverlapRejected)
{
    SessionManifest base{{{"x1", "a"}, {"x2", "b"}}, {}};
    SessionManifest inc{{{"y1", "b"}, {"y2", "c"}}, {}};
    EXPECT_THROW(build_schedule(base, {inc}, 2, 1, 0), ProtocolError);

    // Refused even when the shared class would not survive the N-way cut.
    auto wide = make_session("n", 6, 2, 1);
    wide.train.push_back({"dup", "b0"});
    for (std::uint64_t seed = 0; seed < 20; ++seed)
        EXPECT_THROW(build_schedule(make_session("b", 3, 2, 1), {wide}, 1, 1, seed), ProtocolError);
}

TEST(BuildSchedule, UndersuppliedRejected)
{
    EXPECT_THROW(build_schedule(make_session("b", 3, 4, 1), {make_session("n", 1, 5, 1)}, 2, 5, 0), ProtocolError);
    EXPECT_THROW(build_schedule(make_session("b", 3, 4, 1), {make_session("n", 2, 4, 1)}, 2, 5, 0), ProtocolError);
    EXPECT_THROW(build_schedule(SessionManifest{}, {}, 2, 5, 0), ProtocolError);
}

TEST(BuildSchedule, TestLabelWithoutTrainingDataRejected)
{
    auto base = make_session("b", 2, 3, 1);
    base.test.push_back({"stray", "ghost"});
    EXPECT_THROW(build_schedule(base, {}, 1, 1, 0), ProtocolError);
}

TEST(BuildSchedule, OversuppliedSessionIsCut)
{
    auto schedule = build_schedule(make_session("b", 3, 4, 1), {make_session("n", 4, 9, 3)}, 2, 5, 7);
    const auto& s = schedule.sessions[1];
    const auto counts = label_counts(s.train);
    ASSERT_EQ(counts.size(), 2u);
    for (const auto& [label, n] : counts) EXPECT_EQ(n, 5);
    // Test records follow the chosen classes.
    EXPECT_EQ(s.test.size(), 6u);
    for (const auto& r : s.test) EXPECT_TRUE(s.label_space.contains(r.label));
    // Seeded: same seed, same cut.
    auto again = build_schedule(make_session("b", 3, 4, 1), {make_session("n", 4, 9, 3)}, 2, 5, 7);
    EXPECT_EQ(again.sessions[1].train, s.train);
}

TEST(BuildSchedule, RandomizedSchedulesKeepInvariants)
{
    Rng rng(42);
    for (int trial = 0; trial < 50; ++trial) {
        std::uniform_int_distribution<int> small(1, 4), big(5, 12);
        const int n = small(rng), k = small(rng);
        std::vector<SessionManifest> inc;
        const int sessions = small(rng);
        for (int i = 0; i < sessions; ++i)
            inc.push_back(make_session("s" + std::to_string(i) + "_", n + small(rng) - 1, k + small(rng) - 1, small(rng)));
        const auto base = make_session("b", big(rng), big(rng), small(rng));
        const auto schedule = build_schedule(base, inc, n, k, static_cast<std::uint64_t>(trial));

        std::size_t running = 0;
        for (std::size_t l = 0; l < schedule.size(); ++l) {
            for (std::size_t j = 0; j < schedule.size(); ++j)
                if (j != l) EXPECT_TRUE(schedule.sessions[l].label_space.disjoint(schedule.sessions[j].label_space));
            running += schedule.sessions[l].test.size();
            EXPECT_EQ(cumulative_test_set(schedule, l).size(), running);
            if (l == 0) continue;
            const auto counts = label_counts(schedule.sessions[l].train);
            EXPECT_EQ(counts.size(), static_cast<std::size_t>(n));
            for (const auto& [label, c] : counts) EXPECT_EQ(c, k);
        }
    }
}

TEST(CumulativeTestSet, Sizes)
{
    auto schedule = build_schedule(make_session("b", 10, 2, 10), {make_session("n", 2, 2, 5), make_session("m", 2, 2, 5)},
                                   2, 2, 0);
    EXPECT_EQ(cumulative_test_set(schedule, 0), schedule.sessions[0].test);
    EXPECT_EQ(cumulative_test_set(schedule, 2).size(), 120u);
    EXPECT_THROW(cumulative_test_set(schedule, 3), ProtocolError);
}

TEST(SampleEpisode, ShapeAndErrors)
{
    const auto base = make_session("b", 55, 10, 0).train;
    Rng rng(1);
    auto e = sample_episode(base, 5, 5, rng);
    EXPECT_EQ(e.support.size(), 25u);
    EXPECT_EQ(e.label_set.size(), 5u);
    EXPECT_EQ(label_counts(e.support).size(), 5u);
    std::set<std::string> refs;
    for (const auto& r : e.support) refs.insert(r.ref);
    EXPECT_EQ(refs.size(), 25u);
    EXPECT_THROW(sample_episode(base, 56, 5, rng), SamplingError);
    EXPECT_THROW(sample_episode(base, 5, 11, rng), SamplingError);
}

TEST(SampleEpisode, SupportGroupedByLabel)
{
    const auto base = make_session("b", 8, 6, 0).train;
    Rng rng(3);
    auto e = sample_episode(base, 3, 4, rng);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(e.support[c * 4 + i].label, e.label_set.labels()[c]);
}

TEST(SampleEpisode, SeedReproducible)
{
    const auto base = make_session("b", 12, 8, 0).train;
    Rng a(99), b(99);
    auto ea = sample_episode(base, 4, 3, a);
    auto eb = sample_episode(base, 4, 3, b);
    EXPECT_EQ(ea.support, eb.support);
    EXPECT_EQ(ea.label_set, eb.label_set);
}

TEST(SampleEpisode, RandomizedShapes)
{
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        std::uniform_int_distribution<int> classes(2, 20), per(1, 8);
        const int n_classes = classes(rng), n_per = per(rng);
        const auto base = make_session("b", n_classes, n_per, 0).train;
        std::uniform_int_distribution<int> pick_n(1, n_classes), pick_k(1, n_per);
        const int n = pick_n(rng), k = pick_k(rng);
        auto e = sample_episode(base, n, k, rng);
        const auto counts = label_counts(e.support);
        EXPECT_EQ(counts.size(), static_cast<std::size_t>(n));
        for (const auto& [label, c] : counts) EXPECT_EQ(c, k);
    }
}

TEST(SampleQuerySet, CoversEveryClass)
{
    Rng rng(2);
    auto q = sample_query_set(make_session("b", 10, 4, 0).train, 2, rng);
    EXPECT_EQ(q.samples.size(), 20u);
    EXPECT_EQ(label_counts(q.samples).size(), 10u);

    auto single = sample_query_set(make_session("b", 1, 3, 0).train, 1, rng);
    EXPECT_EQ(single.samples.size(), 1u);

    EXPECT_THROW(sample_query_set(make_session("b", 3, 2, 0).train, 3, rng), SamplingError);
    EXPECT_THROW(sample_query_set(make_session("b", 3, 2, 0).train, 0, rng), SamplingError);
}

TEST(SampleQuerySet, SeedReproducible)
{
    const auto base = make_session("b", 6, 7, 0).train;
    Rng a(4), b(4);
    EXPECT_EQ(sample_query_set(base, 3, a).samples, sample_query_set(base, 3, b).samples);
}

TEST(Manifest, RoundTripAndGrouping)
{
    std::vector<ManifestEntry> entries{{"a/1.wav", "dog", 0, "train"}, {"a/2.wav", "dog", 0, "test"},
                                       {"b/1.wav", "cat", 1, "train"}, {"b/2.wav", "cat", 1, "test"},
                                       {"c/1.wav", "owl", 2, "train"}};
    std::stringstream ss;
    write_manifest(ss, entries);
    const auto parsed = parse_manifest(ss);
    ASSERT_EQ(parsed.size(), entries.size());
    EXPECT_EQ(parsed[2].ref, "b/1.wav");
    EXPECT_EQ(parsed[2].session, 1);

    auto [base, inc] = group_sessions(parsed);
    EXPECT_EQ(base.train.size(), 1u);
    EXPECT_EQ(base.test.size(), 1u);
    ASSERT_EQ(inc.size(), 2u);
    EXPECT_EQ(inc[1].train.front().label, "owl");
}

TEST(Manifest, MalformedLinesRejected)
{
    std::stringstream three("x\ty\t0\n");
    EXPECT_THROW(parse_manifest(three), ProtocolError);
    std::stringstream session("x\ty\tone\ttrain\n");
    EXPECT_THROW(parse_manifest(session), ProtocolError);
    std::stringstream split("x\ty\t0\tdev\n");
    EXPECT_THROW(parse_manifest(split), ProtocolError);
    std::stringstream comments("# header\n\nx\ty\t0\ttrain\r\n");
    EXPECT_EQ(parse_manifest(comments).size(), 1u);
}

TEST(Manifest, SessionGapRejected)
{
    std::vector<ManifestEntry> entries{{"a", "x", 0, "train"}, {"b", "y", 2, "train"}};
    EXPECT_THROW(group_sessions(entries), ProtocolError);
}

TEST(Schedule, JsonRoundTrip)
{
    auto schedule = build_schedule(make_session("b", 4, 3, 1), {make_session("n", 3, 3, 1)}, 2, 2, 5);
    auto back = schedule_from_json(to_json(schedule));
    ASSERT_EQ(back.size(), schedule.size());
    EXPECT_EQ(back.n_way, 2);
    EXPECT_EQ(back.k_shot, 2);
    for (std::size_t l = 0; l < schedule.size(); ++l) {
        EXPECT_EQ(back.sessions[l].train, schedule.sessions[l].train);
        EXPECT_EQ(back.sessions[l].test, schedule.sessions[l].test);
        EXPECT_EQ(back.sessions[l].label_space, schedule.sessions[l].label_space);
    }
}
