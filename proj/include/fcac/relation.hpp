#pragma once

// Learnable metric over (embedding, prototype) pairs. The pair is the
// concatenation [e, p] fed through three affine stages with batch norm,
// ReLU and dropout between consecutive stages; the last stage emits a scalar.

#include "fcac/layers.hpp"
#include "fcac/prototypes.hpp"

namespace fcac {

struct RelationConfig {
    Eigen::Index dim = 64;
    Eigen::Index hidden1 = 128;
    Eigen::Index hidden2 = 64;
    double dropout = 0.2;
};

struct RelationParams {
    RelationConfig config;
    Affine stage1; // 2d -> hidden1
    BatchNorm norm1;
    Affine stage2; // hidden1 -> hidden2
    BatchNorm norm2;
    Affine stage3; // hidden2 -> 1
    bool frozen = false;
    NormMode norm_mode = NormMode::eval;

    static RelationParams init(const RelationConfig& config, Rng& rng);

    /// Scores of every (embedding row, prototype row) pair: B x C.
    ad::Var scores(ad::Tape& tape, const ad::Var& embeddings, const ad::Var& prototypes, const Pass& pass);

    void collect(std::vector<ad::Parameter*>& out);
    std::uint64_t digest() const;
};

using ScoreVector = RowVector;

struct Classification {
    std::string class_id;
    int row = 0;
    ScoreVector scores;
};

double relation_score(const RowVector& embedding, const RowVector& prototype, RelationParams& params);
/// Argmax over all prototype rows; ties go to the lowest row.
Classification classify(const RowVector& embedding, const PrototypeMatrix& prototypes, RelationParams& params);
/// Eval-mode predicted rows for a batch of embeddings.
std::vector<int> classify_rows(const Matrix& embeddings, const PrototypeMatrix& prototypes, RelationParams& params,
                               Eigen::Index chunk = 256);

nlohmann::json to_json(const RelationParams& p);
RelationParams relation_from_json(const nlohmann::json& j);

} // namespace fcac
