#pragma once

#include "fcac/core.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <unordered_map>
#include <vector>

namespace fcac {

/// Class prototypes, one row per class, with a class-id -> row registry.
/// Immutable value: every operation returns a new matrix.
class PrototypeMatrix {
public:
    PrototypeMatrix() = default;
    /// Throws PrototypeError if ids are not unique or do not match the row count.
    PrototypeMatrix(Matrix rows, std::vector<std::string> ids, bool learnable = false);

    const Matrix& rows() const { return rows_; }
    const std::vector<std::string>& ids() const { return ids_; }
    Eigen::Index size() const { return rows_.rows(); }
    Eigen::Index dim() const { return rows_.cols(); }
    bool empty() const { return ids_.empty(); }
    bool learnable() const { return learnable_; }
    bool contains(const std::string& id) const { return index_.contains(id); }
    /// Throws PrototypeError for unknown ids.
    int row_of(const std::string& id) const;

private:
    Matrix rows_;
    std::vector<std::string> ids_;
    std::unordered_map<std::string, int> index_;
    bool learnable_ = false;
};

/// Mean of the support embeddings (one per row).
template <typename Derived>
RowVectorX<typename Derived::Scalar> compute_prototype(const Eigen::MatrixBase<Derived>& support)
{
    if (support.rows() == 0) throw PrototypeError("empty support set");
    return support.colwise().sum() / static_cast<typename Derived::Scalar>(support.rows());
}

/// N(0, 1/d) rows, learnable.
PrototypeMatrix init_base_prototypes(const std::vector<std::string>& ids, Eigen::Index d, Rng& rng);
/// Ids "0".."n0-1".
PrototypeMatrix init_base_prototypes(Eigen::Index n0, Eigen::Index d, Rng& rng);

/// Rows whose ids are not excluded, relative order kept.
PrototypeMatrix pseudo_base_subset(const PrototypeMatrix& p0, const std::vector<std::string>& excluded);
/// Row indices kept by pseudo_base_subset.
std::vector<int> pseudo_base_rows(const PrototypeMatrix& p0, const std::vector<std::string>& excluded);

/// Rows of `a` followed by rows of `b`.
PrototypeMatrix merge(const PrototypeMatrix& a, const PrototypeMatrix& b);

nlohmann::json to_json(const PrototypeMatrix& p);
PrototypeMatrix prototypes_from_json(const nlohmann::json& j);

} // namespace fcac
