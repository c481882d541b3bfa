#include "fcac/drpm.hpp"

namespace fcac {

DrpmParams DrpmParams::init(const DrpmConfig& config, Rng& rng)
{
    if (config.dim < 1 || config.latent_dim < 1) throw DrpmError("DRPM dimensions must be positive");
    DrpmParams p;
    p.config = config;
    if (config.identity) {
        if (config.latent_dim != config.dim) throw DrpmError("identity DRPM requires latent_dim == dim");
        return identity(config.dim);
    }
    p.f1 = {Affine::init(config.dim, config.latent_dim, rng), BatchNorm::init(config.latent_dim)};
    p.f2 = {Affine::init(config.dim, config.latent_dim, rng), BatchNorm::init(config.latent_dim)};
    return p;
}

DrpmParams DrpmParams::identity(Eigen::Index dim)
{
    DrpmParams p;
    p.config = {dim, dim, false, false, true};
    return p;
}

namespace {

ad::Var block_forward(ad::Tape& tape, DrpmBlock& b, const ad::Var& x, const DrpmParams& p, const Pass& pass)
{
    if (p.config.identity) return ad::relu(x);
    auto h = b.affine.forward(tape, x, pass.grad && !p.frozen);
    return ad::relu(b.norm.forward(tape, h, pass, p.frozen));
}

} // namespace

ad::Var DrpmParams::relation_weights(ad::Tape& tape, const ad::Var& init, const ad::Var& pre, const Pass& pass)
{
    if (init.cols() != config.dim || pre.cols() != config.dim)
        throw DrpmError("prototype width does not match DRPM dim " + std::to_string(config.dim));
    if (pre.rows() < 1 || init.rows() < 1) throw DrpmError("DRPM needs at least one prototype on each side");
    auto a = block_forward(tape, f1, init, *this, pass);
    auto b = block_forward(tape, f2, pre, *this, pass);
    auto m = ad::matmul_nt(a, b);
    return config.row_softmax ? ad::row_softmax(m) : m;
}

ad::Var DrpmParams::refine(ad::Tape& tape, const ad::Var& init, const ad::Var& pre, const Pass& pass)
{
    auto projected = ad::matmul(relation_weights(tape, init, pre, pass), pre);
    return config.residual ? ad::add(init, projected) : projected;
}

void DrpmParams::collect(std::vector<ad::Parameter*>& out)
{
    if (config.identity) return;
    for (auto* b : {&f1, &f2}) {
        fcac::collect(b->affine, out);
        fcac::collect(b->norm, out);
    }
}

std::uint64_t DrpmParams::digest() const
{
    Digest d;
    d.text("drpm").u64(config.identity ? 1 : 0).u64(config.row_softmax ? 1 : 0).u64(config.residual ? 1 : 0);
    if (!config.identity)
        for (const auto* b : {&f1, &f2}) {
            fcac::digest(d, b->affine);
            fcac::digest(d, b->norm);
        }
    return d.value();
}

RelationWeights relation_weights(const Matrix& init, const Matrix& pre, DrpmParams& params)
{
    ad::Tape tape;
    Pass pass;
    pass.norm = params.norm_mode;
    return params.relation_weights(tape, tape.constant(init), tape.constant(pre), pass).value();
}

PrototypeMatrix refine(const PrototypeMatrix& init, const PrototypeMatrix& pre, DrpmParams& params)
{
    ad::Tape tape;
    Pass pass;
    pass.norm = params.norm_mode;
    Matrix rows = params.refine(tape, tape.constant(init.rows()), tape.constant(pre.rows()), pass).value();
    return PrototypeMatrix(std::move(rows), init.ids(), false);
}

nlohmann::json to_json(const DrpmParams& p)
{
    nlohmann::json j{{"dim", p.config.dim},
                     {"latent_dim", p.config.latent_dim},
                     {"row_softmax", p.config.row_softmax},
                     {"residual", p.config.residual},
                     {"identity", p.config.identity},
                     {"frozen", p.frozen}};
    if (!p.config.identity) {
        j["f1"] = {{"affine", to_json(p.f1.affine)}, {"norm", to_json(p.f1.norm)}};
        j["f2"] = {{"affine", to_json(p.f2.affine)}, {"norm", to_json(p.f2.norm)}};
    }
    return j;
}

DrpmParams drpm_from_json(const nlohmann::json& j)
{
    DrpmParams p;
    p.config.dim = j.at("dim").get<Eigen::Index>();
    p.config.latent_dim = j.at("latent_dim").get<Eigen::Index>();
    p.config.row_softmax = j.at("row_softmax").get<bool>();
    p.config.residual = j.value("residual", false);
    p.config.identity = j.at("identity").get<bool>();
    p.frozen = j.at("frozen").get<bool>();
    if (!p.config.identity) {
        for (auto [key, block] : {std::pair{"f1", &p.f1}, std::pair{"f2", &p.f2}}) {
            block->affine = affine_from_json(j.at(key).at("affine"));
            block->norm = batch_norm_from_json(j.at(key).at("norm"));
        }
    }
    return p;
}

} // namespace fcac
