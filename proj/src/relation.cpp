#include "fcac/relation.hpp"

namespace fcac {

RelationParams RelationParams::init(const RelationConfig& config, Rng& rng)
{
    if (config.dim < 1 || config.hidden1 < 1 || config.hidden2 < 1) throw ModelError("relation widths must be positive");
    if (config.dropout < 0.0 || config.dropout >= 1.0) throw ModelError("dropout rate must lie in [0, 1)");
    RelationParams p;
    p.config = config;
    p.stage1 = Affine::init(2 * config.dim, config.hidden1, rng);
    p.norm1 = BatchNorm::init(config.hidden1);
    p.stage2 = Affine::init(config.hidden1, config.hidden2, rng);
    p.norm2 = BatchNorm::init(config.hidden2);
    p.stage3 = Affine::init(config.hidden2, 1, rng);
    return p;
}

ad::Var RelationParams::scores(ad::Tape& tape, const ad::Var& embeddings, const ad::Var& prototypes, const Pass& pass)
{
    const Eigen::Index d = config.dim;
    if (embeddings.cols() != d || prototypes.cols() != d)
        throw ModelError("relation module expects width " + std::to_string(d));
    if (prototypes.rows() < 1) throw ModelError("no prototypes to score against");
    const bool trainable = pass.grad && !frozen;

    // [e, p] W = e W_top + p W_bottom, so the first stage is evaluated per side
    // and broadcast over pairs instead of materializing B*C concatenations.
    auto w1 = tape.parameter(stage1.weight, trainable);
    std::vector<int> top(static_cast<std::size_t>(d)), bottom(static_cast<std::size_t>(d));
    for (Eigen::Index i = 0; i < d; ++i) {
        top[static_cast<std::size_t>(i)] = static_cast<int>(i);
        bottom[static_cast<std::size_t>(i)] = static_cast<int>(d + i);
    }
    auto from_e = ad::matmul(embeddings, ad::gather_rows(w1, top));
    auto from_p = ad::matmul(prototypes, ad::gather_rows(w1, bottom));
    auto h = ad::add_row(ad::pairwise_sum(from_e, from_p), tape.parameter(stage1.bias, trainable));
    h = dropout(ad::relu(norm1.forward(tape, h, pass, frozen)), config.dropout, pass);
    h = stage2.forward(tape, h, trainable);
    h = dropout(ad::relu(norm2.forward(tape, h, pass, frozen)), config.dropout, pass);
    h = stage3.forward(tape, h, trainable);
    return ad::unflatten(h, embeddings.rows(), prototypes.rows());
}

void RelationParams::collect(std::vector<ad::Parameter*>& out)
{
    fcac::collect(stage1, out);
    fcac::collect(norm1, out);
    fcac::collect(stage2, out);
    fcac::collect(norm2, out);
    fcac::collect(stage3, out);
}

std::uint64_t RelationParams::digest() const
{
    Digest d;
    d.text("relation").f64(config.dropout);
    fcac::digest(d, stage1);
    fcac::digest(d, norm1);
    fcac::digest(d, stage2);
    fcac::digest(d, norm2);
    fcac::digest(d, stage3);
    return d.value();
}

namespace {

Pass own_mode(const RelationParams& p)
{
    Pass pass;
    pass.norm = p.norm_mode;
    return pass;
}

} // namespace

double relation_score(const RowVector& embedding, const RowVector& prototype, RelationParams& params)
{
    if (embedding.size() != params.config.dim || prototype.size() != params.config.dim)
        throw ModelError("relation_score: vector length does not match d");
    ad::Tape tape;
    return params.scores(tape, tape.constant(embedding), tape.constant(prototype), own_mode(params)).value()(0, 0);
}

Classification classify(const RowVector& embedding, const PrototypeMatrix& prototypes, RelationParams& params)
{
    if (prototypes.empty()) throw ModelError("cannot classify against an empty prototype matrix");
    ad::Tape tape;
    RowVector scores =
        params.scores(tape, tape.constant(embedding), tape.constant(prototypes.rows()), own_mode(params)).value().row(0);
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < scores.size(); ++i)
        if (scores(i) > scores(best)) best = i;
    return {prototypes.ids()[static_cast<std::size_t>(best)], static_cast<int>(best), std::move(scores)};
}

std::vector<int> classify_rows(const Matrix& embeddings, const PrototypeMatrix& prototypes, RelationParams& params,
                               Eigen::Index chunk)
{
    if (prototypes.empty()) throw ModelError("cannot classify against an empty prototype matrix");
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(embeddings.rows()));
    for (Eigen::Index start = 0; start < embeddings.rows(); start += chunk) {
        const Eigen::Index n = std::min(chunk, embeddings.rows() - start);
        ad::Tape tape;
        const Matrix s = params
                             .scores(tape, tape.constant(embeddings.middleRows(start, n)),
                                     tape.constant(prototypes.rows()), Pass::inference())
                             .value();
        for (Eigen::Index r = 0; r < n; ++r) {
            Eigen::Index best = 0;
            for (Eigen::Index c = 1; c < s.cols(); ++c)
                if (s(r, c) > s(r, best)) best = c;
            out.push_back(static_cast<int>(best));
        }
    }
    return out;
}

nlohmann::json to_json(const RelationParams& p)
{
    return {{"dim", p.config.dim},
            {"hidden1", p.config.hidden1},
            {"hidden2", p.config.hidden2},
            {"dropout", p.config.dropout},
            {"frozen", p.frozen},
            {"stage1", to_json(p.stage1)},
            {"norm1", to_json(p.norm1)},
            {"stage2", to_json(p.stage2)},
            {"norm2", to_json(p.norm2)},
            {"stage3", to_json(p.stage3)}};
}

RelationParams relation_from_json(const nlohmann::json& j)
{
    RelationParams p;
    p.config = {j.at("dim").get<Eigen::Index>(), j.at("hidden1").get<Eigen::Index>(),
                j.at("hidden2").get<Eigen::Index>(), j.at("dropout").get<double>()};
    p.frozen = j.at("frozen").get<bool>();
    p.stage1 = affine_from_json(j.at("stage1"));
    p.norm1 = batch_norm_from_json(j.at("norm1"));
    p.stage2 = affine_from_json(j.at("stage2"));
    p.norm2 = batch_norm_from_json(j.at("norm2"));
    p.stage3 = affine_from_json(j.at("stage3"));
    return p;
}

} // namespace fcac
