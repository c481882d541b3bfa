#pragma once

#include "fcac/bundle.hpp"
#include "fcac/features.hpp"
#include "fcac/protocol.hpp"
#include "fcac/training.hpp"

#include <nlohmann/json.hpp>

#include <numeric>
#include <ranges>

namespace fcac {

struct SessionResult {
    int session_index = 0;
    double accuracy = 0.0;
    int n_test = 0;
    int n_classes_seen = 0;
};

struct RunReport {
    std::string experiment_id;
    std::string method;
    std::uint64_t seed = 0;
    std::vector<SessionResult> sessions;
    double aa = 0.0;
    double pd = 0.0;
    nlohmann::json config;
    nlohmann::json schedule;

    std::vector<double> accuracies() const;
};

/// Fraction of matching entries.
template <typename T>
double session_accuracy(std::span<const T> predictions, std::span<const T> labels)
{
    if (predictions.empty() || predictions.size() != labels.size())
        throw MetricError("accuracy needs equal-length nonempty inputs");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) correct += predictions[i] == labels[i];
    return static_cast<double>(correct) / static_cast<double>(labels.size());
}

/// Mean over every session, base session included.
template <std::ranges::input_range R>
double average_accuracy(const R& accuracies)
{
    if (std::ranges::empty(accuracies)) throw MetricError("average accuracy of no sessions");
    double sum = 0.0;
    std::size_t n = 0;
    for (double a : accuracies) {
        sum += a;
        ++n;
    }
    return sum / static_cast<double>(n);
}

/// First session's accuracy minus the last one's.
template <std::ranges::input_range R>
double performance_drop(const R& accuracies)
{
    if (std::ranges::empty(accuracies)) throw MetricError("performance drop of no sessions");
    double first = 0.0, last = 0.0;
    bool seen = false;
    for (double a : accuracies) {
        if (!seen) first = a;
        last = a;
        seen = true;
    }
    return first - last;
}

struct IncrementalOptions {
    /// Refined prototypes are replaced by the initial ones.
    bool no_drpm = false;
    /// Session 0 scores against refine(P0, P0) instead of P0.
    bool refine_base_session = false;
    /// Previous-session prototypes for refinement are the refined ones
    /// (true) or the unrefined running table (false).
    bool chain_refined = false;
    /// Observer called with the prototype matrix in force at each session.
    std::function<void(std::size_t session, const PrototypeMatrix&)> on_session;
};

/// Frozen-model incremental loop: session 0 scores against P0; each later
/// session appends support-mean prototypes, refines against the previous
/// session's prototypes and scores the cumulative test set.
RunReport run_incremental(ModelBundle& bundle, const SessionSchedule& schedule, const FeatureStore& features,
                          const IncrementalOptions& options = {});

/// Finetune baseline over the same schedule: the model is retrained on each
/// session's support set and scored directly against its prototype table.
RunReport run_finetune(const ModelBundle& trained, const SessionSchedule& schedule, const FeatureStore& features,
                       const FinetuneConfig& config);

/// Accuracy of `prototypes` + the relation module on a labeled manifest.
double evaluate_manifest(ModelBundle& bundle, const PrototypeMatrix& prototypes, const Manifest& test,
                         const FeatureStore& features);

nlohmann::json to_json(const RunReport& r);
RunReport report_from_json(const nlohmann::json& j);

/// Per-session mean accuracy plus mean AA and PD across reports.
nlohmann::json aggregate_reports(const std::vector<RunReport>& reports);

} // namespace fcac
