#include "fcac/bundle.hpp"

#include <fstream>
#include <sstream>

namespace fcac {

ModelBundle ModelBundle::create(const ModelConfig& config, std::vector<std::string> base_classes, std::uint64_t seed)
{
    ModelBundle b;
    b.config = config;
    const Eigen::Index d = config.dim();
    Rng backbone_rng(derive_seed(seed, "backbone"));
    b.backbone = BackboneParams::init(config.backbone, backbone_rng);
    Rng drpm_rng(derive_seed(seed, "drpm"));
    b.drpm = DrpmParams::init({d, config.latent_dim > 0 ? config.latent_dim : d, config.drpm_row_softmax, config.drpm_residual, false}, drpm_rng);
    Rng relation_rng(derive_seed(seed, "relation"));
    b.relation = RelationParams::init({d, config.relation_hidden1, config.relation_hidden2, config.dropout}, relation_rng);
    Rng proto_rng(derive_seed(seed, "prototypes"));
    b.base_prototypes = ad::Parameter(init_base_prototypes(base_classes, d, proto_rng).rows());
    b.base_classes = std::move(base_classes);
    return b;
}

PrototypeMatrix ModelBundle::base_matrix() const
{
    return PrototypeMatrix(base_prototypes.value, base_classes, !prototypes_frozen);
}

void ModelBundle::set_frozen(bool flag)
{
    backbone.frozen = flag;
    drpm.frozen = flag;
    relation.frozen = flag;
    prototypes_frozen = flag;
}

void ModelBundle::set_norm_mode(NormMode mode)
{
    backbone.norm_mode = mode;
    drpm.norm_mode = mode;
    relation.norm_mode = mode;
}

std::vector<ParamGroup> ModelBundle::parameter_groups()
{
    std::vector<ParamGroup> groups{{"theta", {}}, {"phi", {}}, {"psi", {}}, {"prototypes", {}}};
    backbone.collect(groups[0].params);
    drpm.collect(groups[1].params);
    relation.collect(groups[2].params);
    groups[3].params.push_back(&base_prototypes);
    return groups;
}

std::vector<ad::Parameter*> ModelBundle::parameters()
{
    std::vector<ad::Parameter*> all;
    for (auto& g : parameter_groups()) all.insert(all.end(), g.params.begin(), g.params.end());
    return all;
}

void ModelBundle::zero_grad()
{
    for (auto* p : parameters()) p->zero_grad();
}

std::uint64_t ModelBundle::frozen_digest() const
{
    return Digest().u64(backbone.digest()).u64(drpm.digest()).u64(relation.digest()).value();
}

std::uint64_t ModelBundle::digest() const
{
    Digest d;
    d.u64(frozen_digest()).matrix(base_prototypes.value);
    for (const auto& c : base_classes) d.text(c);
    return d.value();
}

nlohmann::json to_json(const ModelConfig& c)
{
    return {{"backbone", to_json(c.backbone)},
            {"latent_dim", c.latent_dim},
            {"relation_hidden", {c.relation_hidden1, c.relation_hidden2}},
            {"dropout", c.dropout},
            {"drpm_row_softmax", c.drpm_row_softmax},
            {"drpm_residual", c.drpm_residual}};
}

ModelConfig model_config_from_json(const nlohmann::json& j)
{
    ModelConfig c;
    c.backbone = backbone_config_from_json(j.value("backbone", nlohmann::json::object()));
    c.latent_dim = j.value("latent_dim", c.latent_dim);
    if (j.contains("relation_hidden")) {
        const auto h = j.at("relation_hidden").get<std::vector<Eigen::Index>>();
        if (h.size() != 2) throw ConfigError("relation_hidden must list two widths");
        c.relation_hidden1 = h[0];
        c.relation_hidden2 = h[1];
    }
    c.dropout = j.value("dropout", c.dropout);
    c.drpm_row_softmax = j.value("drpm_row_softmax", c.drpm_row_softmax);
    c.drpm_residual = j.value("drpm_residual", c.drpm_residual);
    return c;
}

nlohmann::json to_json(const ModelBundle& b)
{
    return {{"config", to_json(b.config)},
            {"backbone", to_json(b.backbone)},
            {"drpm", to_json(b.drpm)},
            {"relation", to_json(b.relation)},
            {"prototypes", to_json(b.base_matrix())},
            {"prototypes_frozen", b.prototypes_frozen}};
}

ModelBundle bundle_from_json(const nlohmann::json& j)
{
    ModelBundle b;
    b.config = model_config_from_json(j.at("config"));
    b.backbone = backbone_from_json(j.at("backbone"));
    b.drpm = drpm_from_json(j.at("drpm"));
    b.relation = relation_from_json(j.at("relation"));
    auto p = prototypes_from_json(j.at("prototypes"));
    b.base_classes = p.ids();
    b.base_prototypes = ad::Parameter(p.rows());
    b.prototypes_frozen = j.at("prototypes_frozen").get<bool>();
    if (b.base_prototypes.value.cols() != b.dim() || b.relation.config.dim != b.dim() || b.drpm.config.dim != b.dim())
        throw ModelError("checkpoint members disagree on the embedding size");
    return b;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".partial";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw Error("cannot write " + tmp.string());
        out << text;
        if (!out) throw Error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

void save_checkpoint(const std::filesystem::path& path, const ModelBundle& bundle, const nlohmann::json& meta)
{
    nlohmann::json j{{"format", "fcac-checkpoint/1"}, {"bundle", to_json(bundle)}, {"meta", meta}};
    write_file_atomic(path, j.dump());
}

Checkpoint load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ModelError("cannot open checkpoint " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ModelError("corrupt checkpoint " + path.string() + ": " + e.what());
    }
    if (j.value("format", std::string()) != "fcac-checkpoint/1")
        throw ModelError(path.string() + " is not a checkpoint");
    return {bundle_from_json(j.at("bundle")), j.at("meta")};
}

} // namespace fcac
