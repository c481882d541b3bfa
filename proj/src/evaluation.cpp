#include "fcac/evaluation.hpp"

namespace fcac {

std::vector<double> RunReport::accuracies() const
{
    std::vector<double> a;
    for (const auto& s : sessions) a.push_back(s.accuracy);
    return a;
}

double evaluate_manifest(ModelBundle& bundle, const PrototypeMatrix& prototypes, const Manifest& test,
                         const FeatureStore& features)
{
    if (test.empty()) throw MetricError("empty test set");
    std::vector<const Matrix*> inputs;
    for (const auto& r : test) inputs.push_back(&features.at(r.ref));
    const Matrix embeddings = embed_batch(inputs, bundle.backbone);
    const auto rows = classify_rows(embeddings, prototypes, bundle.relation);
    std::vector<std::string> predicted, labels;
    for (std::size_t i = 0; i < test.size(); ++i) {
        predicted.push_back(prototypes.ids()[static_cast<std::size_t>(rows[i])]);
        labels.push_back(test[i].label);
    }
    return session_accuracy<std::string>(predicted, labels);
}

namespace {

SessionResult score_session(ModelBundle& bundle, const PrototypeMatrix& prototypes, const SessionSchedule& schedule,
                            std::size_t l, const FeatureStore& features)
{
    const auto test = cumulative_test_set(schedule, l);
    return {static_cast<int>(l), evaluate_manifest(bundle, prototypes, test, features), static_cast<int>(test.size()),
            static_cast<int>(prototypes.size())};
}

PrototypeMatrix support_prototypes(ModelBundle& bundle, const SessionDescriptor& session, const FeatureStore& features)
{
    ClassIndex classes(session.train);
    Matrix rows(static_cast<Eigen::Index>(classes.num_classes()), bundle.dim());
    for (std::size_t c = 0; c < classes.num_classes(); ++c) {
        std::vector<const Matrix*> inputs;
        for (std::size_t i : classes.members(c)) inputs.push_back(&features.at(session.train[i].ref));
        rows.row(static_cast<Eigen::Index>(c)) = compute_prototype(embed_batch(inputs, bundle.backbone));
    }
    return PrototypeMatrix(std::move(rows), classes.labels());
}

void finish(RunReport& r)
{
    const auto acc = r.accuracies();
    r.aa = average_accuracy(acc);
    r.pd = performance_drop(acc);
}

} // namespace

RunReport run_incremental(ModelBundle& bundle, const SessionSchedule& schedule, const FeatureStore& features,
                          const IncrementalOptions& options)
{
    if (schedule.sessions.empty()) throw ProtocolError("empty schedule");
    const auto& base_labels = schedule.sessions.front().label_space.labels();
    if (base_labels != bundle.base_classes) throw ProtocolError("schedule base classes do not match the model");

    bundle.set_frozen(true);
    bundle.set_norm_mode(NormMode::eval);
    const std::uint64_t frozen = bundle.frozen_digest();

    RunReport report;
    report.schedule = to_json(schedule);
    PrototypeMatrix previous = bundle.base_matrix();
    PrototypeMatrix current = previous;
    if (options.refine_base_session && !options.no_drpm) current = refine(previous, previous, bundle.drpm);
    if (options.on_session) options.on_session(0, current);
    report.sessions.push_back(score_session(bundle, current, schedule, 0, features));

    for (std::size_t l = 1; l < schedule.sessions.size(); ++l) {
        auto fresh = support_prototypes(bundle, schedule.sessions[l], features);
        const PrototypeMatrix& pre = options.chain_refined ? current : previous;
        auto initial = merge(pre, fresh);
        current = options.no_drpm ? initial : refine(initial, pre, bundle.drpm);
        previous = merge(previous, fresh);
        if (options.on_session) options.on_session(l, current);
        report.sessions.push_back(score_session(bundle, current, schedule, l, features));
        if (bundle.frozen_digest() != frozen)
            throw IntegrityError("frozen parameters changed during session " + std::to_string(l));
    }
    finish(report);
    return report;
}

RunReport run_finetune(const ModelBundle& trained, const SessionSchedule& schedule, const FeatureStore& features,
                       const FinetuneConfig& config)
{
    if (schedule.sessions.empty()) throw ProtocolError("empty schedule");
    ModelBundle bundle = trained;
    bundle.set_norm_mode(NormMode::eval);

    RunReport report;
    report.method = "finetune";
    report.schedule = to_json(schedule);
    report.sessions.push_back(score_session(bundle, bundle.base_matrix(), schedule, 0, features));
    for (std::size_t l = 1; l < schedule.sessions.size(); ++l) {
        FinetuneConfig step = config;
        step.seed = derive_seed(config.seed, "session-" + std::to_string(l));
        bundle = finetune_baseline(std::move(bundle), schedule.sessions[l].train, features, step);
        bundle.set_norm_mode(NormMode::eval);
        report.sessions.push_back(score_session(bundle, bundle.base_matrix(), schedule, l, features));
    }
    finish(report);
    return report;
}

nlohmann::json to_json(const RunReport& r)
{
    auto sessions = nlohmann::json::array();
    for (const auto& s : r.sessions)
        sessions.push_back({{"session_index", s.session_index},
                            {"accuracy", s.accuracy},
                            {"n_test", s.n_test},
                            {"n_classes_seen", s.n_classes_seen}});
    return {{"experiment_id", r.experiment_id}, {"method", r.method}, {"seed", r.seed},
            {"sessions", std::move(sessions)},  {"aa", r.aa},         {"pd", r.pd},
            {"config", r.config},               {"schedule", r.schedule}};
}

RunReport report_from_json(const nlohmann::json& j)
{
    RunReport r;
    r.experiment_id = j.value("experiment_id", std::string());
    r.method = j.value("method", std::string());
    r.seed = j.value("seed", std::uint64_t{0});
    for (const auto& s : j.at("sessions"))
        r.sessions.push_back({s.at("session_index").get<int>(), s.at("accuracy").get<double>(), s.value("n_test", 0),
                              s.value("n_classes_seen", 0)});
    if (r.sessions.empty()) throw MetricError("report has no sessions");
    r.aa = j.contains("aa") ? j.at("aa").get<double>() : average_accuracy(r.accuracies());
    r.pd = j.contains("pd") ? j.at("pd").get<double>() : performance_drop(r.accuracies());
    r.config = j.value("config", nlohmann::json::object());
    r.schedule = j.value("schedule", nlohmann::json::object());
    return r;
}

nlohmann::json aggregate_reports(const std::vector<RunReport>& reports)
{
    if (reports.empty()) throw MetricError("nothing to aggregate");
    const std::size_t n_sessions = reports.front().sessions.size();
    std::vector<double> mean_acc(n_sessions, 0.0);
    std::vector<double> aas, pds;
    std::vector<std::uint64_t> seeds;
    for (const auto& r : reports) {
        if (r.sessions.size() != n_sessions) throw MetricError("reports disagree on the session count");
        for (std::size_t l = 0; l < n_sessions; ++l) mean_acc[l] += r.sessions[l].accuracy / static_cast<double>(reports.size());
        aas.push_back(r.aa);
        pds.push_back(r.pd);
        seeds.push_back(r.seed);
    }
    return {{"method", reports.front().method},
            {"seeds", seeds},
            {"mean_accuracy", mean_acc},
            {"aa", aas},
            {"pd", pds},
            {"mean_aa", average_accuracy(aas)},
            {"mean_pd", average_accuracy(pds)}};
}

} // namespace fcac
