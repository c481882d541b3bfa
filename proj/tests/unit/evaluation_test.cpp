#include "fcac/evaluation.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

using namespace fcac;
using fcac::testing::trained_fixture;

namespace {

const std::vector<double> table2{99.96, 95.95, 93.60, 92.06, 90.32, 89.14, 86.16, 83.47, 82.28, 79.69};
const std::vector<double> table3{42.04, 39.95, 37.01, 34.68, 32.97, 31.45, 30.09};

} // namespace

TEST(SessionAccuracy, Examples)
{
    const std::vector<int> all{1, 2, 3, 4}, half{1, 2, 0, 0};
    EXPECT_EQ(session_accuracy<int>(all, all), 1.0);
    EXPECT_EQ(session_accuracy<int>(half, all), 0.5);
    EXPECT_THROW(session_accuracy<int>(std::vector<int>{}, std::vector<int>{}), MetricError);
    EXPECT_THROW(session_accuracy<int>(half, std::vector<int>{1}), MetricError);
}

TEST(Metrics, PublishedRows)
{
    EXPECT_NEAR(average_accuracy(table2), 89.26, 0.01);
    EXPECT_NEAR(performance_drop(table2), 20.27, 0.01);
    EXPECT_NEAR(average_accuracy(table3), 35.46, 0.01);
    EXPECT_NEAR(performance_drop(table3), 11.95, 0.01);
}

TEST(Metrics, SingleSessionAndEmpty)
{
    const std::vector<double> one{0.7};
    EXPECT_EQ(average_accuracy(one), 0.7);
    EXPECT_EQ(performance_drop(one), 0.0);
    EXPECT_THROW(average_accuracy(std::vector<double>{}), MetricError);
    EXPECT_THROW(performance_drop(std::vector<double>{}), MetricError);
}

TEST(Metrics, AverageIsBounded)
{
    Rng rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> a(1 + trial % 10);
        for (auto& x : a) x = u(rng);
        const double aa = average_accuracy(a);
        EXPECT_GE(aa, *std::min_element(a.begin(), a.end()) - 1e-15);
        EXPECT_LE(aa, *std::max_element(a.begin(), a.end()) + 1e-15);
    }
}

TEST(RunIncremental, PrototypeRowsAndFrozenWeights)
{
    const auto& f = trained_fixture();
    auto bundle = f.bundle;
    const auto before = bundle.frozen_digest();
    std::vector<Eigen::Index> rows;
    IncrementalOptions opts;
    opts.on_session = [&](std::size_t, const PrototypeMatrix& p) { rows.push_back(p.size()); };
    const auto report = run_incremental(bundle, f.schedule, f.data.features, opts);

    EXPECT_EQ(bundle.frozen_digest(), before);
    ASSERT_EQ(rows.size(), f.schedule.size());
    for (std::size_t l = 0; l < rows.size(); ++l) EXPECT_EQ(rows[l], 6 + 2 * static_cast<Eigen::Index>(l));

    std::size_t n_test = 0;
    for (std::size_t l = 0; l < report.sessions.size(); ++l) {
        n_test += f.schedule.sessions[l].test.size();
        EXPECT_EQ(report.sessions[l].n_test, static_cast<int>(n_test));
        EXPECT_EQ(report.sessions[l].n_classes_seen, 6 + 2 * static_cast<int>(l));
        EXPECT_GE(report.sessions[l].accuracy, 0.0);
        EXPECT_LE(report.sessions[l].accuracy, 1.0);
    }
    EXPECT_EQ(report.aa, average_accuracy(report.accuracies()));
    EXPECT_EQ(report.pd, performance_drop(report.accuracies()));
}

TEST(RunIncremental, Deterministic)
{
    const auto& f = trained_fixture();
    auto a = f.bundle, b = f.bundle;
    EXPECT_EQ(to_json(run_incremental(a, f.schedule, f.data.features)),
              to_json(run_incremental(b, f.schedule, f.data.features)));
}

TEST(RunIncremental, NoDrpmUsesInitialPrototypes)
{
    const auto& f = trained_fixture();
    auto bundle = f.bundle;
    std::vector<PrototypeMatrix> seen;
    IncrementalOptions opts;
    opts.no_drpm = true;
    opts.on_session = [&](std::size_t, const PrototypeMatrix& p) { seen.push_back(p); };
    run_incremental(bundle, f.schedule, f.data.features, opts);
    ASSERT_EQ(seen.size(), f.schedule.size());
    // Every session extends the previous table verbatim.
    for (std::size_t l = 1; l < seen.size(); ++l)
        EXPECT_EQ(seen[l].rows().topRows(seen[l - 1].size()), seen[l - 1].rows());
    EXPECT_EQ(seen[0].rows(), bundle.base_matrix().rows());
}

TEST(RunIncremental, SingleSessionHasNoDrop)
{
    const auto& f = trained_fixture();
    auto bundle = f.bundle;
    SessionSchedule base_only = f.schedule;
    base_only.sessions.resize(1);
    const auto report = run_incremental(bundle, base_only, f.data.features);
    EXPECT_EQ(report.sessions.size(), 1u);
    EXPECT_EQ(report.pd, 0.0);
    EXPECT_EQ(report.aa, report.sessions[0].accuracy);
}

TEST(RunIncremental, TamperingIsDetected)
{
    const auto& f = trained_fixture();
    auto bundle = f.bundle;
    IncrementalOptions opts;
    opts.on_session = [&](std::size_t l, const PrototypeMatrix&) {
        if (l == 1) bundle.relation.stage3.bias.value(0, 0) += 1.0;
    };
    EXPECT_THROW(run_incremental(bundle, f.schedule, f.data.features, opts), IntegrityError);
}

TEST(RunIncremental, MismatchedBaseClassesRejected)
{
    const auto& f = trained_fixture();
    auto bundle = f.bundle;
    bundle.base_classes[0] = "someone-else";
    EXPECT_THROW(run_incremental(bundle, f.schedule, f.data.features), ProtocolError);
}

TEST(RunFinetune, SameScheduleShape)
{
    const auto& f = trained_fixture();
    FinetuneConfig c;
    c.steps = 3;
    const auto report = run_finetune(f.bundle, f.schedule, f.data.features, c);
    EXPECT_EQ(report.method, "finetune");
    ASSERT_EQ(report.sessions.size(), f.schedule.size());
    for (std::size_t l = 0; l < report.sessions.size(); ++l)
        EXPECT_EQ(report.sessions[l].n_classes_seen, 6 + 2 * static_cast<int>(l));
}

TEST(RunReport, JsonRoundTrip)
{
    RunReport r;
    r.experiment_id = "x";
    r.method = "proposed";
    r.seed = 4;
    r.sessions = {{0, 0.9, 10, 6}, {1, 0.8, 14, 8}};
    r.aa = 0.85;
    r.pd = 0.1;
    r.config = {{"a", 1}};
    const auto back = report_from_json(to_json(r));
    EXPECT_EQ(to_json(back), to_json(r));

    nlohmann::json bare{{"sessions", {{{"session_index", 0}, {"accuracy", 0.5}}, {{"session_index", 1}, {"accuracy", 0.25}}}}};
    const auto derived = report_from_json(bare);
    EXPECT_EQ(derived.aa, 0.375);
    EXPECT_EQ(derived.pd, 0.25);
    EXPECT_THROW(report_from_json({{"sessions", nlohmann::json::array()}}), MetricError);
}

TEST(Aggregate, MeansAcrossSeeds)
{
    RunReport a, b;
    a.method = b.method = "proposed";
    a.seed = 1;
    b.seed = 2;
    a.sessions = {{0, 1.0, 1, 1}, {1, 0.5, 1, 1}};
    b.sessions = {{0, 0.8, 1, 1}, {1, 0.7, 1, 1}};
    for (auto* r : {&a, &b}) {
        r->aa = average_accuracy(r->accuracies());
        r->pd = performance_drop(r->accuracies());
    }
    const auto j = aggregate_reports({a, b});
    EXPECT_NEAR(j.at("mean_aa").get<double>(), (a.aa + b.aa) / 2.0, 1e-15);
    EXPECT_NEAR(j.at("mean_pd").get<double>(), (a.pd + b.pd) / 2.0, 1e-15);
    EXPECT_NEAR(j.at("mean_accuracy")[1].get<double>(), 0.6, 1e-15);
    b.sessions.pop_back();
    EXPECT_THROW(aggregate_reports({a, b}), MetricError);
    EXPECT_THROW(aggregate_reports({}), MetricError);
}
