#pragma once

#include "fcac/backbone.hpp"
#include "fcac/drpm.hpp"
#include "fcac/prototypes.hpp"
#include "fcac/relation.hpp"

#include <filesystem>

namespace fcac {

struct ModelConfig {
    BackboneConfig backbone;
    /// 0 means "same as the embedding size".
    Eigen::Index latent_dim = 0;
    Eigen::Index relation_hidden1 = 128;
    Eigen::Index relation_hidden2 = 64;
    double dropout = 0.2;
    bool drpm_row_softmax = false;
    bool drpm_residual = false;

    Eigen::Index dim() const { return backbone.embedding_dim(); }
};

struct ParamGroup {
    std::string name; // theta, phi, psi, prototypes
    std::vector<ad::Parameter*> params;
};

/// Embedding extractor, projection module, relation module and the learnable
/// base prototypes, trained together and frozen together.
struct ModelBundle {
    ModelConfig config;
    BackboneParams backbone;
    DrpmParams drpm;
    RelationParams relation;
    std::vector<std::string> base_classes;
    ad::Parameter base_prototypes; // |base_classes| x d
    bool prototypes_frozen = false;

    static ModelBundle create(const ModelConfig& config, std::vector<std::string> base_classes, std::uint64_t seed);

    Eigen::Index dim() const { return config.dim(); }
    PrototypeMatrix base_matrix() const;

    void set_frozen(bool flag);
    void set_norm_mode(NormMode mode);
    std::vector<ParamGroup> parameter_groups();
    std::vector<ad::Parameter*> parameters();
    void zero_grad();

    /// Digest of backbone, projection and relation parameters (incl. norm statistics).
    std::uint64_t frozen_digest() const;
    /// Digest of everything, base prototypes included.
    std::uint64_t digest() const;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ModelBundle& b);
ModelBundle bundle_from_json(const nlohmann::json& j);

/// Self-describing JSON archive: {"format", "bundle", "meta"}. Written atomically.
void save_checkpoint(const std::filesystem::path& path, const ModelBundle& bundle, const nlohmann::json& meta);
struct Checkpoint {
    ModelBundle bundle;
    nlohmann::json meta;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Writes `text` to `path` through a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

} // namespace fcac
