#pragma once

// Base-session training with random episodic training (RETS): every iteration
// draws a query set covering all base classes plus t pseudo-incremental
// N-way K-shot episodes, scores the queries against the refined episode
// prototypes and takes one SGD step on the accumulated cross-entropy.

#include "fcac/bundle.hpp"
#include "fcac/features.hpp"
#include "fcac/protocol.hpp"

#include <functional>

namespace fcac {

struct RetsConfig {
    int episodes = 3; // t
    int n_way = 5;
    int k_shot = 5;
    int q_per_class = 5;
    double lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    int max_iterations = 100;
    std::uint64_t seed = 0;
    /// Average instead of sum the per-episode losses.
    bool mean_reduction = false;
    bool cosine_decay = true;

    void validate(std::size_t base_classes) const;
};

struct Ablation {
    /// Refined prototypes are the initial prototypes.
    bool no_drpm = false;
    /// Plain minibatch cross-entropy against P0 instead of episodes.
    bool no_rets = false;
};

struct IterationDraw {
    QuerySet query;
    std::vector<Episode> episodes;
};

struct IterationLog {
    int iteration = 0;
    double loss = 0.0;
    double lr = 0.0;
    std::uint64_t seed = 0;
};

struct TrainingStats {
    std::size_t episodes_sampled = 0;
    std::size_t iterations = 0;
    std::vector<IterationLog> log;
};

/// Momentum SGD with L2 weight decay.
class Sgd {
public:
    Sgd(double momentum, double weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}
    void step(std::span<ad::Parameter* const> params, double lr) const;

private:
    double momentum_;
    double weight_decay_;
};

double scheduled_lr(const RetsConfig& config, int iteration);

/// Query set plus t episodes for one iteration.
IterationDraw draw_iteration(const ClassIndex& base, const RetsConfig& config, Rng& rng, TrainingStats* stats = nullptr);

/// Accumulated episode loss on `tape` (no optimizer step).
ad::Var rets_loss(ad::Tape& tape, ModelBundle& bundle, const IterationDraw& draw, const FeatureStore& features,
                  const RetsConfig& config, const Ablation& ablation, const Pass& pass);

/// Minibatch cross-entropy against the base prototypes (no_rets ablation).
ad::Var plain_loss(ad::Tape& tape, ModelBundle& bundle, const QuerySet& batch, const FeatureStore& features,
                   const Pass& pass);

/// One optimizer step. Returns the loss; throws TrainingError if it is not finite.
double rets_iteration(ModelBundle& bundle, const ClassIndex& base, const FeatureStore& features,
                      const RetsConfig& config, const Ablation& ablation, Rng& rng, double lr,
                      TrainingStats* stats = nullptr);

using IterationCallback = std::function<void(const IterationLog&)>;

ModelBundle train_base(ModelBundle bundle, const Manifest& base_train, const FeatureStore& features,
                       const RetsConfig& config, const Ablation& ablation = {}, TrainingStats* stats = nullptr,
                       const IterationCallback& on_iteration = {});

struct FinetuneConfig {
    int steps = 100;
    double lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::uint64_t seed = 0;
};

/// Appends randomly initialized prototypes for the session's classes and
/// retrains the whole model on the session's support samples only.
ModelBundle finetune_baseline(ModelBundle bundle, const Manifest& session_train, const FeatureStore& features,
                              const FinetuneConfig& config);

/// Fingerprint of the pipeline configuration including ablation switches.
std::string pipeline_fingerprint(const ModelConfig& model, const RetsConfig& rets, const Ablation& ablation);

nlohmann::json to_json(const RetsConfig& c);
RetsConfig rets_from_json(const nlohmann::json& j);
nlohmann::json to_json(const FinetuneConfig& c);
FinetuneConfig finetune_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Ablation& a);
Ablation ablation_from_json(const nlohmann::json& j);
nlohmann::json to_json(const IterationLog& l);

} // namespace fcac
