#include "fcac/training.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

using namespace fcac;
using fcac::testing::tiny_config;
using fcac::testing::trained_fixture;

namespace {

struct Tiny {
    ExperimentConfig config = tiny_config();
    PreparedData data = prepare_data(config);
    ModelBundle fresh() const
    {
        return ModelBundle::create(config.model, LabelSpace::from_manifest(data.base.train).labels(), 7);
    }
};

double loss_of(ModelBundle& b, const IterationDraw& draw, const FeatureStore& f, const RetsConfig& c,
               const Ablation& a = {})
{
    ad::Tape tape;
    return rets_loss(tape, b, draw, f, c, a, Pass::inference()).value()(0, 0);
}

} // namespace

TEST(Episode, MergedTableHasOneRowPerBaseClass)
{
    const Tiny t;
    const ClassIndex base(t.data.base.train);
    Rng rng(1);
    auto bundle = t.fresh();
    for (int trial = 0; trial < 20; ++trial) {
        const auto e = sample_episode(base, 2, 2, rng);
        const auto pseudo_base = pseudo_base_subset(bundle.base_matrix(), e.label_set.labels());
        Matrix means(2, bundle.dim());
        const auto merged = merge(pseudo_base, PrototypeMatrix(means, e.label_set.labels()));
        EXPECT_EQ(merged.size(), static_cast<Eigen::Index>(base.num_classes()));
    }
}

TEST(RetsLoss, SumOfEpisodeLosses)
{
    const Tiny t;
    auto bundle = t.fresh();
    RetsConfig c = t.config.rets;
    c.episodes = 3;
    Rng rng(2);
    const auto draw = draw_iteration(ClassIndex(t.data.base.train), c, rng);
    ASSERT_EQ(draw.episodes.size(), 3u);
    const double total = loss_of(bundle, draw, t.data.features, c);
    double parts = 0.0;
    RetsConfig one = c;
    one.episodes = 1;
    for (const auto& e : draw.episodes) parts += loss_of(bundle, {draw.query, {e}}, t.data.features, one);
    EXPECT_NEAR(total, parts, 1e-10 * std::abs(parts));

    c.mean_reduction = true;
    EXPECT_NEAR(loss_of(bundle, draw, t.data.features, c), parts / 3.0, 1e-10 * std::abs(parts));
}

TEST(RetsLoss, EpisodeClassesGetNoPrototypeGradient)
{
    const Tiny t;
    auto bundle = t.fresh();
    RetsConfig c = t.config.rets;
    c.episodes = 1;
    Rng rng(3), drop(4);
    const auto draw = draw_iteration(ClassIndex(t.data.base.train), c, rng);
    bundle.zero_grad();
    ad::Tape tape;
    tape.backward(rets_loss(tape, bundle, draw, t.data.features, c, {}, Pass::training(drop)));
    const auto& g = bundle.base_prototypes.grad;
    for (std::size_t r = 0; r < bundle.base_classes.size(); ++r) {
        const bool drawn = draw.episodes[0].label_set.contains(bundle.base_classes[r]);
        const double norm = g.row(static_cast<Eigen::Index>(r)).norm();
        if (drawn)
            EXPECT_EQ(norm, 0.0) << bundle.base_classes[r];
        else
            EXPECT_GT(norm, 0.0) << bundle.base_classes[r];
    }
}

TEST(RetsLoss, NoDrpmIgnoresProjection)
{
    const Tiny t;
    auto bundle = t.fresh();
    Rng rng(5);
    const auto draw = draw_iteration(ClassIndex(t.data.base.train), t.config.rets, rng);
    const Ablation off{true, false};
    const double before = loss_of(bundle, draw, t.data.features, t.config.rets, off);
    Rng other(6);
    bundle.drpm = DrpmParams::init(bundle.drpm.config, other);
    EXPECT_EQ(loss_of(bundle, draw, t.data.features, t.config.rets, off), before);
    EXPECT_NE(loss_of(bundle, draw, t.data.features, t.config.rets), before);
}

TEST(TrainBase, LossDecreasesOnSeparableClusters)
{
    Tiny t;
    t.config.model.backbone.channels = {4, 8};
    t.config.model.relation_hidden1 = 16;
    t.config.model.relation_hidden2 = 8;
    RetsConfig c = t.config.rets;
    c.max_iterations = 60;
    TrainingStats stats;
    train_base(t.fresh(), t.data.base.train, t.data.features, c, {}, &stats);
    ASSERT_EQ(stats.log.size(), 60u);
    double head = 0.0, tail = 0.0;
    for (int i = 0; i < 10; ++i) {
        head += stats.log[static_cast<std::size_t>(i)].loss;
        tail += stats.log[stats.log.size() - 1 - static_cast<std::size_t>(i)].loss;
    }
    EXPECT_LT(tail, 0.5 * head);
}

TEST(TrainBase, ZeroIterationsLeavesBundleUntouched)
{
    const Tiny t;
    RetsConfig c = t.config.rets;
    c.max_iterations = 0;
    const auto bundle = t.fresh();
    EXPECT_EQ(train_base(bundle, t.data.base.train, t.data.features, c).digest(), bundle.digest());
}

TEST(TrainBase, DeterministicPerSeed)
{
    const Tiny t;
    const auto a = train_base(t.fresh(), t.data.base.train, t.data.features, t.config.rets);
    const auto b = train_base(t.fresh(), t.data.base.train, t.data.features, t.config.rets);
    EXPECT_EQ(a.digest(), b.digest());
    RetsConfig c = t.config.rets;
    c.seed = 99;
    EXPECT_NE(train_base(t.fresh(), t.data.base.train, t.data.features, c).digest(), a.digest());
}

TEST(TrainBase, CountsEpisodes)
{
    const Tiny t;
    TrainingStats stats;
    train_base(t.fresh(), t.data.base.train, t.data.features, t.config.rets, {}, &stats);
    EXPECT_EQ(stats.iterations, 5u);
    EXPECT_EQ(stats.episodes_sampled, 10u);
}

TEST(TrainBase, NoRetsNeverSamplesEpisodes)
{
    const Tiny t;
    TrainingStats stats;
    const auto b = train_base(t.fresh(), t.data.base.train, t.data.features, t.config.rets, {false, true}, &stats);
    EXPECT_EQ(stats.episodes_sampled, 0u);
    EXPECT_EQ(stats.iterations, 5u);
    EXPECT_NE(b.digest(), t.fresh().digest());
}

TEST(TrainBase, NonFiniteLossAborts)
{
    const Tiny t;
    auto bundle = t.fresh();
    bundle.base_prototypes.value(0, 0) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(train_base(bundle, t.data.base.train, t.data.features, t.config.rets), TrainingError);
}

TEST(TrainBase, FrozenBundleRejected)
{
    const Tiny t;
    auto bundle = t.fresh();
    bundle.set_frozen(true);
    EXPECT_THROW(train_base(bundle, t.data.base.train, t.data.features, t.config.rets), TrainingError);
}

TEST(TrainBase, HighBaseAccuracyOnSeparableClusters)
{
    const auto& f = trained_fixture();
    auto bundle = f.bundle;
    bundle.set_norm_mode(NormMode::eval);
    EXPECT_GE(evaluate_manifest(bundle, bundle.base_matrix(), f.data.base.test, f.data.features), 0.95);
}

TEST(Finetune, AppendsRowsAndMovesWeights)
{
    const auto& f = trained_fixture();
    const auto& session = f.schedule.sessions[1];
    FinetuneConfig c;
    c.steps = 5;
    const auto tuned = finetune_baseline(f.bundle, session.train, f.data.features, c);
    EXPECT_EQ(tuned.base_prototypes.value.rows(), f.bundle.base_prototypes.value.rows() + 2);
    EXPECT_NE(tuned.frozen_digest(), f.bundle.frozen_digest());
    for (Eigen::Index r = 0; r < 2; ++r)
        EXPECT_EQ(tuned.base_classes[static_cast<std::size_t>(6 + r)], session.label_space.labels()[static_cast<std::size_t>(r)]);
    EXPECT_THROW(finetune_baseline(f.bundle, {}, f.data.features, c), TrainingError);
}

TEST(PipelineFingerprint, TracksAblation)
{
    const auto c = tiny_config();
    EXPECT_EQ(pipeline_fingerprint(c.model, c.rets, {}), pipeline_fingerprint(c.model, c.rets, {false, false}));
    EXPECT_NE(pipeline_fingerprint(c.model, c.rets, {}), pipeline_fingerprint(c.model, c.rets, {true, false}));
    EXPECT_NE(pipeline_fingerprint(c.model, c.rets, {}), pipeline_fingerprint(c.model, c.rets, {false, true}));
}

TEST(Sgd, MomentumAndWeightDecay)
{
    ad::Parameter p(Matrix::Constant(1, 1, 2.0));
    p.grad = Matrix::Constant(1, 1, 0.5);
    ad::Parameter* ps[] = {&p};
    const Sgd sgd(0.9, 0.1);
    sgd.step(ps, 0.1);
    // v = 0.5 + 0.1 * 2 = 0.7; w = 2 - 0.07
    EXPECT_NEAR(p.value(0, 0), 1.93, 1e-15);
    sgd.step(ps, 0.1);
    // v = 0.9 * 0.7 + 0.5 + 0.1 * 1.93 = 1.323
    EXPECT_NEAR(p.value(0, 0), 1.93 - 0.1323, 1e-15);
}

TEST(ScheduledLr, CosineDecay)
{
    RetsConfig c;
    c.lr = 0.2;
    c.max_iterations = 100;
    EXPECT_DOUBLE_EQ(scheduled_lr(c, 0), 0.2);
    EXPECT_NEAR(scheduled_lr(c, 50), 0.1, 1e-15);
    EXPECT_GT(scheduled_lr(c, 99), 0.0);
    c.cosine_decay = false;
    EXPECT_EQ(scheduled_lr(c, 50), 0.2);
}

TEST(RetsConfig, Validate)
{
    RetsConfig c;
    c.n_way = 5;
    EXPECT_NO_THROW(c.validate(6));
    EXPECT_THROW(c.validate(5), ConfigError);
    c.episodes = 0;
    EXPECT_THROW(c.validate(6), ConfigError);
    EXPECT_EQ(rets_from_json(to_json(RetsConfig{})).lr, RetsConfig{}.lr);
    EXPECT_THROW(rets_from_json({{"loss_reduction", "max"}}), ConfigError);
}
