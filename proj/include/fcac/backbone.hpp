#pragma once

// Embedding extractor: feature map -> d-dimensional embedding.

#include "fcac/layers.hpp"

#include <span>

namespace fcac {

enum class BackboneKind { identity, cnn };

struct BackboneConfig {
    BackboneKind kind = BackboneKind::cnn;
    /// Expected feature map shape (frames x bins).
    Eigen::Index input_rows = 16;
    Eigen::Index input_cols = 16;
    /// Output channels of each conv block; the last one is the embedding size.
    std::vector<Eigen::Index> channels{16, 32, 64};

    Eigen::Index embedding_dim() const;
};

struct ConvBlock {
    ad::Parameter weight; // 9*cin x cout
    ad::Parameter bias;
    BatchNorm norm;
};

/// Identity: the flattened (row-major) feature map is the embedding.
/// CNN: [3x3 conv, batch norm, ReLU, 2x2 max pool] per block, then global average pooling.
struct BackboneParams {
    BackboneConfig config;
    std::vector<ConvBlock> blocks;
    bool frozen = false;
    NormMode norm_mode = NormMode::eval;

    static BackboneParams init(const BackboneConfig& config, Rng& rng);

    /// Batch forward; one row per input map.
    ad::Var forward(ad::Tape& tape, std::span<const Matrix* const> inputs, const Pass& pass);

    void collect(std::vector<ad::Parameter*>& out);
    std::uint64_t digest() const;
};

using Embedding = RowVector;

/// Embedding of a single map using the params' own norm_mode, without gradients.
Embedding embed(const Matrix& feature_map, BackboneParams& params);
/// Eval-mode embeddings of many maps, one row each, computed in chunks.
Matrix embed_batch(std::span<const Matrix* const> inputs, BackboneParams& params, std::size_t chunk = 64);

BackboneParams set_frozen(BackboneParams params, bool flag);

nlohmann::json to_json(const BackboneConfig& c);
BackboneConfig backbone_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const BackboneParams& p);
BackboneParams backbone_from_json(const nlohmann::json& j);

} // namespace fcac
