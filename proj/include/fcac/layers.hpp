#pragma once

#include "fcac/autodiff.hpp"

#include <nlohmann/json.hpp>

namespace fcac {

/// Per-forward switches shared by every module.
struct Pass {
    NormMode norm = NormMode::eval;
    /// Record gradients for unfrozen parameters.
    bool grad = false;
    /// Fold batch statistics into running statistics (train mode, unfrozen only).
    bool update_stats = false;
    /// Dropout masks are drawn from here; dropout is skipped when null or in eval mode.
    Rng* rng = nullptr;

    static Pass inference() { return {}; }
    static Pass training(Rng& r) { return {NormMode::train, true, true, &r}; }
};

/// Row-wise affine map x * W + b.
struct Affine {
    ad::Parameter weight; // in x out
    ad::Parameter bias;   // 1 x out

    static Affine init(Eigen::Index in, Eigen::Index out, Rng& rng);
    ad::Var forward(ad::Tape& tape, const ad::Var& x, bool trainable);
};

/// Column-wise batch normalization with running statistics.
struct BatchNorm {
    ad::Parameter gamma;
    ad::Parameter beta;
    RowVector running_mean;
    RowVector running_var;
    double momentum = 0.1;
    double eps = 1e-5;

    static BatchNorm init(Eigen::Index channels);
    ad::Var forward(ad::Tape& tape, const ad::Var& x, const Pass& pass, bool frozen);
};

/// Inverted dropout; identity outside train mode.
ad::Var dropout(const ad::Var& x, double rate, const Pass& pass);

void collect(Affine& a, std::vector<ad::Parameter*>& out);
void collect(BatchNorm& n, std::vector<ad::Parameter*>& out);
void digest(Digest& d, const Affine& a);
/// Includes running statistics.
void digest(Digest& d, const BatchNorm& n);

nlohmann::json to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Affine& a);
nlohmann::json to_json(const BatchNorm& n);
Affine affine_from_json(const nlohmann::json& j);
BatchNorm batch_norm_from_json(const nlohmann::json& j);

} // namespace fcac
