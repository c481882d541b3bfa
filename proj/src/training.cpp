#include "fcac/training.hpp"

#include <cmath>
#include <numbers>
#include <unordered_map>

namespace fcac {

void RetsConfig::validate(std::size_t base_classes) const
{
    if (episodes < 1) throw ConfigError("rets.t must be at least 1");
    if (n_way < 1 || k_shot < 1 || q_per_class < 1) throw ConfigError("episode shape must be positive");
    if (static_cast<std::size_t>(n_way) >= base_classes)
        throw ConfigError("rets.n_way must be smaller than the number of base classes");
    if (!(lr > 0.0) || momentum < 0.0 || weight_decay < 0.0) throw ConfigError("invalid optimizer settings");
    if (max_iterations < 0) throw ConfigError("max_iterations must be nonnegative");
}

void Sgd::step(std::span<ad::Parameter* const> params, double lr) const
{
    for (ad::Parameter* p : params) {
        if (p->grad.size() == 0) continue;
        if (p->velocity.size() == 0) p->velocity = Matrix::Zero(p->value.rows(), p->value.cols());
        p->velocity = momentum_ * p->velocity + p->grad + weight_decay_ * p->value;
        p->value -= lr * p->velocity;
    }
}

double scheduled_lr(const RetsConfig& config, int iteration)
{
    if (!config.cosine_decay || config.max_iterations <= 0) return config.lr;
    return 0.5 * config.lr * (1.0 + std::cos(std::numbers::pi * iteration / config.max_iterations));
}

IterationDraw draw_iteration(const ClassIndex& base, const RetsConfig& config, Rng& rng, TrainingStats* stats)
{
    IterationDraw draw;
    draw.query = sample_query_set(base, config.q_per_class, rng);
    for (int i = 0; i < config.episodes; ++i) {
        draw.episodes.push_back(sample_episode(base, config.n_way, config.k_shot, rng));
        if (stats) ++stats->episodes_sampled;
    }
    return draw;
}

namespace {

std::unordered_map<std::string, int> row_lookup(const std::vector<std::string>& ids)
{
    std::unordered_map<std::string, int> m;
    for (std::size_t i = 0; i < ids.size(); ++i) m.emplace(ids[i], static_cast<int>(i));
    return m;
}

int lookup(const std::unordered_map<std::string, int>& m, const std::string& label)
{
    auto it = m.find(label);
    if (it == m.end()) throw TrainingError("label '" + label + "' is not a base class");
    return it->second;
}

} // namespace

ad::Var rets_loss(ad::Tape& tape, ModelBundle& bundle, const IterationDraw& draw, const FeatureStore& features,
                  const RetsConfig& config, const Ablation& ablation, const Pass& pass)
{
    const auto base_rows = row_lookup(bundle.base_classes);
    const auto n_base = static_cast<int>(bundle.base_classes.size());

    // One backbone pass over queries followed by every episode's support.
    std::vector<const Matrix*> inputs;
    for (const auto& r : draw.query.samples) inputs.push_back(&features.at(r.ref));
    for (const auto& e : draw.episodes)
        for (const auto& r : e.support) inputs.push_back(&features.at(r.ref));
    auto embeddings = bundle.backbone.forward(tape, inputs, pass);

    const auto n_query = static_cast<int>(draw.query.samples.size());
    std::vector<int> query_rows(static_cast<std::size_t>(n_query));
    for (int i = 0; i < n_query; ++i) query_rows[static_cast<std::size_t>(i)] = i;
    auto query = ad::gather_rows(embeddings, query_rows);
    auto p0 = tape.parameter(bundle.base_prototypes, pass.grad && !bundle.prototypes_frozen);

    std::vector<ad::Var> losses;
    int offset = n_query;
    for (const auto& episode : draw.episodes) {
        const auto& new_labels = episode.label_set.labels();
        const auto n_new = static_cast<int>(new_labels.size());
        const auto per_class = static_cast<int>(episode.support.size()) / n_new;

        // pseudo-base: base rows not drawn into this episode, original order
        std::vector<char> excluded(static_cast<std::size_t>(n_base), 0);
        for (const auto& l : new_labels) excluded[static_cast<std::size_t>(lookup(base_rows, l))] = 1;
        std::vector<int> keep;
        std::vector<int> merged_row(static_cast<std::size_t>(n_base), -1);
        for (int r = 0; r < n_base; ++r)
            if (!excluded[static_cast<std::size_t>(r)]) {
                merged_row[static_cast<std::size_t>(r)] = static_cast<int>(keep.size());
                keep.push_back(r);
            }
        const auto n_keep = static_cast<int>(keep.size());
        for (int j = 0; j < n_new; ++j)
            merged_row[static_cast<std::size_t>(lookup(base_rows, new_labels[static_cast<std::size_t>(j)]))] = n_keep + j;

        auto pseudo_base = ad::gather_rows(p0, keep);

        // pseudo-new prototypes: per-class means of the support embeddings
        std::vector<int> support_rows(episode.support.size());
        for (std::size_t i = 0; i < support_rows.size(); ++i) support_rows[i] = offset + static_cast<int>(i);
        offset += static_cast<int>(support_rows.size());
        Matrix averaging = Matrix::Zero(n_new, static_cast<Eigen::Index>(support_rows.size()));
        for (int j = 0; j < n_new; ++j)
            averaging.block(j, j * per_class, 1, per_class).setConstant(1.0 / per_class);
        auto pseudo_new = ad::matmul(tape.constant(std::move(averaging)), ad::gather_rows(embeddings, support_rows));

        auto initial = ad::concat_rows(pseudo_base, pseudo_new);
        auto refined = ablation.no_drpm ? initial : bundle.drpm.refine(tape, initial, pseudo_base, pass);
        auto logits = bundle.relation.scores(tape, query, refined, pass);

        std::vector<int> targets;
        for (const auto& r : draw.query.samples)
            targets.push_back(merged_row[static_cast<std::size_t>(lookup(base_rows, r.label))]);
        losses.push_back(ad::cross_entropy(logits, targets));
    }
    auto total = ad::sum(losses);
    return config.mean_reduction ? ad::scale(total, 1.0 / static_cast<double>(losses.size())) : total;
}

ad::Var plain_loss(ad::Tape& tape, ModelBundle& bundle, const QuerySet& batch, const FeatureStore& features,
                   const Pass& pass)
{
    const auto base_rows = row_lookup(bundle.base_classes);
    std::vector<const Matrix*> inputs;
    std::vector<int> targets;
    for (const auto& r : batch.samples) {
        inputs.push_back(&features.at(r.ref));
        targets.push_back(lookup(base_rows, r.label));
    }
    auto embeddings = bundle.backbone.forward(tape, inputs, pass);
    auto p0 = tape.parameter(bundle.base_prototypes, pass.grad && !bundle.prototypes_frozen);
    return ad::cross_entropy(bundle.relation.scores(tape, embeddings, p0, pass), targets);
}

namespace {

std::vector<ad::Parameter*> trainable_parameters(ModelBundle& b)
{
    std::vector<ad::Parameter*> out;
    if (!b.backbone.frozen) b.backbone.collect(out);
    if (!b.drpm.frozen) b.drpm.collect(out);
    if (!b.relation.frozen) b.relation.collect(out);
    if (!b.prototypes_frozen) out.push_back(&b.base_prototypes);
    return out;
}

} // namespace

double rets_iteration(ModelBundle& bundle, const ClassIndex& base, const FeatureStore& features,
                      const RetsConfig& config, const Ablation& ablation, Rng& rng, double lr, TrainingStats* stats)
{
    auto params = trainable_parameters(bundle);
    for (auto* p : params) p->zero_grad();

    ad::Tape tape;
    const Pass pass = Pass::training(rng);
    ad::Var loss;
    if (ablation.no_rets) {
        auto batch = sample_query_set(base, config.q_per_class, rng);
        loss = plain_loss(tape, bundle, batch, features, pass);
    } else {
        auto draw = draw_iteration(base, config, rng, stats);
        loss = rets_loss(tape, bundle, draw, features, config, ablation, pass);
    }
    const double value = loss.value()(0, 0);
    if (!std::isfinite(value)) throw TrainingError("non-finite training loss");
    tape.backward(loss);
    Sgd(config.momentum, config.weight_decay).step(params, lr);
    if (stats) ++stats->iterations;
    return value;
}

ModelBundle train_base(ModelBundle bundle, const Manifest& base_train, const FeatureStore& features,
                       const RetsConfig& config, const Ablation& ablation, TrainingStats* stats,
                       const IterationCallback& on_iteration)
{
    ClassIndex base(base_train);
    config.validate(base.num_classes());
    if (config.max_iterations == 0) return bundle;
    if (bundle.backbone.frozen || bundle.drpm.frozen || bundle.relation.frozen || bundle.prototypes_frozen)
        throw TrainingError("base training requires an unfrozen bundle");

    Rng rng(derive_seed(config.seed, "rets"));
    for (int it = 0; it < config.max_iterations; ++it) {
        const double lr = scheduled_lr(config, it);
        IterationLog entry{it, rets_iteration(bundle, base, features, config, ablation, rng, lr, stats), lr, config.seed};
        if (stats) stats->log.push_back(entry);
        if (on_iteration) on_iteration(entry);
    }
    for (auto* p : bundle.parameters()) {
        p->grad.resize(0, 0);
        p->velocity.resize(0, 0);
    }
    return bundle;
}

ModelBundle finetune_baseline(ModelBundle bundle, const Manifest& session_train, const FeatureStore& features,
                              const FinetuneConfig& config)
{
    if (session_train.empty()) throw TrainingError("finetune needs session samples");
    ClassIndex session(session_train);
    Rng rng(derive_seed(config.seed, "finetune"));

    auto fresh = init_base_prototypes(session.labels(), bundle.dim(), rng);
    auto expanded = merge(bundle.base_matrix(), fresh);
    bundle.base_classes = expanded.ids();
    bundle.base_prototypes = ad::Parameter(expanded.rows());
    bundle.set_frozen(false);

    const auto rows = row_lookup(bundle.base_classes);
    std::vector<const Matrix*> inputs;
    std::vector<int> targets;
    for (const auto& r : session_train) {
        inputs.push_back(&features.at(r.ref));
        targets.push_back(lookup(rows, r.label));
    }
    const Sgd sgd(config.momentum, config.weight_decay);
    for (int step = 0; step < config.steps; ++step) {
        auto params = trainable_parameters(bundle);
        for (auto* p : params) p->zero_grad();
        ad::Tape tape;
        const Pass pass = Pass::training(rng);
        auto embeddings = bundle.backbone.forward(tape, inputs, pass);
        auto p = tape.parameter(bundle.base_prototypes);
        auto loss = ad::cross_entropy(bundle.relation.scores(tape, embeddings, p, pass), targets);
        if (!std::isfinite(loss.value()(0, 0))) throw TrainingError("non-finite finetune loss");
        tape.backward(loss);
        sgd.step(params, config.lr);
    }
    for (auto* p : bundle.parameters()) {
        p->grad.resize(0, 0);
        p->velocity.resize(0, 0);
    }
    return bundle;
}

nlohmann::json to_json(const RetsConfig& c)
{
    return {{"t", c.episodes},           {"n_way", c.n_way},
            {"k_shot", c.k_shot},        {"q_per_class", c.q_per_class},
            {"lr", c.lr},                {"momentum", c.momentum},
            {"weight_decay", c.weight_decay}, {"max_iterations", c.max_iterations},
            {"seed", c.seed},            {"loss_reduction", c.mean_reduction ? "mean" : "sum"},
            {"cosine_decay", c.cosine_decay}};
}

RetsConfig rets_from_json(const nlohmann::json& j)
{
    RetsConfig c;
    c.episodes = j.value("t", c.episodes);
    c.n_way = j.value("n_way", c.n_way);
    c.k_shot = j.value("k_shot", c.k_shot);
    c.q_per_class = j.value("q_per_class", c.q_per_class);
    c.lr = j.value("lr", c.lr);
    c.momentum = j.value("momentum", c.momentum);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.max_iterations = j.value("max_iterations", c.max_iterations);
    c.seed = j.value("seed", c.seed);
    const auto reduction = j.value("loss_reduction", std::string("sum"));
    if (reduction != "sum" && reduction != "mean") throw ConfigError("rets.loss_reduction must be sum or mean");
    c.mean_reduction = reduction == "mean";
    c.cosine_decay = j.value("cosine_decay", c.cosine_decay);
    return c;
}

nlohmann::json to_json(const FinetuneConfig& c)
{
    return {{"steps", c.steps}, {"lr", c.lr}, {"momentum", c.momentum}, {"weight_decay", c.weight_decay}, {"seed", c.seed}};
}

FinetuneConfig finetune_from_json(const nlohmann::json& j)
{
    FinetuneConfig c;
    c.steps = j.value("steps", c.steps);
    c.lr = j.value("lr", c.lr);
    c.momentum = j.value("momentum", c.momentum);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.seed = j.value("seed", c.seed);
    return c;
}

nlohmann::json to_json(const Ablation& a)
{
    return {{"no_drpm", a.no_drpm}, {"no_rets", a.no_rets}};
}

Ablation ablation_from_json(const nlohmann::json& j)
{
    return {j.value("no_drpm", false), j.value("no_rets", false)};
}

nlohmann::json to_json(const IterationLog& l)
{
    return {{"iteration", l.iteration}, {"loss", l.loss}, {"lr", l.lr}, {"seed", l.seed}};
}

std::string pipeline_fingerprint(const ModelConfig& model, const RetsConfig& rets, const Ablation& ablation)
{
    nlohmann::json j{{"model", to_json(model)}, {"rets", to_json(rets)}, {"ablation", to_json(ablation)}};
    return Digest().text(j.dump()).hex();
}

} // namespace fcac
