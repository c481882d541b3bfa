#pragma once

// Dynamic relation projection: relation weights between the current and the
// previous prototypes, M = f1(P_init) f2(P_pre)^T, and refined prototypes
// P_re = M P_pre. Each block f is a per-row affine map (a 1x1 convolution on
// a single spatial position), batch normalization across prototype rows, and
// a rectifier.

#include "fcac/layers.hpp"
#include "fcac/prototypes.hpp"

namespace fcac {

struct DrpmConfig {
    Eigen::Index dim = 64;
    Eigen::Index latent_dim = 64;
    /// Softmax over each row of M. Off by default (M is used as computed).
    bool row_softmax = false;
    /// P_re = P_init + M P_pre instead of M P_pre.
    bool residual = false;
    /// Affine = identity, normalization bypassed; only the rectifier remains.
    bool identity = false;
};

struct DrpmBlock {
    Affine affine;
    BatchNorm norm;
};

struct DrpmParams {
    DrpmConfig config;
    DrpmBlock f1;
    DrpmBlock f2;
    bool frozen = false;
    NormMode norm_mode = NormMode::eval;

    static DrpmParams init(const DrpmConfig& config, Rng& rng);
    static DrpmParams identity(Eigen::Index dim);

    ad::Var relation_weights(ad::Tape& tape, const ad::Var& init, const ad::Var& pre, const Pass& pass);
    ad::Var refine(ad::Tape& tape, const ad::Var& init, const ad::Var& pre, const Pass& pass);

    void collect(std::vector<ad::Parameter*>& out);
    std::uint64_t digest() const;
};

using RelationWeights = Matrix;

/// N_init x N_pre relation weights using the params' own norm_mode.
RelationWeights relation_weights(const Matrix& init, const Matrix& pre, DrpmParams& params);
/// Refined prototypes carrying the registry of `init`.
PrototypeMatrix refine(const PrototypeMatrix& init, const PrototypeMatrix& pre, DrpmParams& params);

nlohmann::json to_json(const DrpmParams& p);
DrpmParams drpm_from_json(const nlohmann::json& j);

} // namespace fcac
