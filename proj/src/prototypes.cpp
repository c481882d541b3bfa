#include "fcac/prototypes.hpp"

#include "fcac/layers.hpp"

#include <cmath>
#include <unordered_set>

namespace fcac {

PrototypeMatrix::PrototypeMatrix(Matrix rows, std::vector<std::string> ids, bool learnable)
    : rows_(std::move(rows)), ids_(std::move(ids)), learnable_(learnable)
{
    if (static_cast<Eigen::Index>(ids_.size()) != rows_.rows())
        throw PrototypeError("registry has " + std::to_string(ids_.size()) + " ids for " +
                             std::to_string(rows_.rows()) + " rows");
    if (!rows_.allFinite()) throw PrototypeError("non-finite prototype entries");
    for (std::size_t i = 0; i < ids_.size(); ++i)
        if (!index_.emplace(ids_[i], static_cast<int>(i)).second)
            throw PrototypeError("duplicate class id '" + ids_[i] + "'");
}

int PrototypeMatrix::row_of(const std::string& id) const
{
    auto it = index_.find(id);
    if (it == index_.end()) throw PrototypeError("unknown class id '" + id + "'");
    return it->second;
}

PrototypeMatrix init_base_prototypes(const std::vector<std::string>& ids, Eigen::Index d, Rng& rng)
{
    if (ids.empty() || d < 1) throw PrototypeError("base prototypes need n0 >= 1 and d >= 1");
    Matrix rows = random_normal(static_cast<Eigen::Index>(ids.size()), d, 1.0 / std::sqrt(static_cast<double>(d)), rng);
    return PrototypeMatrix(std::move(rows), ids, true);
}

PrototypeMatrix init_base_prototypes(Eigen::Index n0, Eigen::Index d, Rng& rng)
{
    std::vector<std::string> ids;
    for (Eigen::Index i = 0; i < n0; ++i) ids.push_back(std::to_string(i));
    return init_base_prototypes(ids, d, rng);
}

std::vector<int> pseudo_base_rows(const PrototypeMatrix& p0, const std::vector<std::string>& excluded)
{
    std::unordered_set<std::string> drop;
    for (const auto& id : excluded) {
        p0.row_of(id);
        drop.insert(id);
    }
    std::vector<int> keep;
    for (std::size_t i = 0; i < p0.ids().size(); ++i)
        if (!drop.contains(p0.ids()[i])) keep.push_back(static_cast<int>(i));
    return keep;
}

PrototypeMatrix pseudo_base_subset(const PrototypeMatrix& p0, const std::vector<std::string>& excluded)
{
    const auto keep = pseudo_base_rows(p0, excluded);
    Matrix rows(static_cast<Eigen::Index>(keep.size()), p0.dim());
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < keep.size(); ++i) {
        rows.row(static_cast<Eigen::Index>(i)) = p0.rows().row(keep[i]);
        ids.push_back(p0.ids()[static_cast<std::size_t>(keep[i])]);
    }
    return PrototypeMatrix(std::move(rows), std::move(ids), p0.learnable());
}

PrototypeMatrix merge(const PrototypeMatrix& a, const PrototypeMatrix& b)
{
    if (b.empty()) return a;
    if (a.empty()) return b;
    if (a.dim() != b.dim())
        throw PrototypeError("cannot merge prototypes of dim " + std::to_string(a.dim()) + " and " +
                             std::to_string(b.dim()));
    for (const auto& id : b.ids())
        if (a.contains(id)) throw PrototypeError("class id '" + id + "' registered twice");
    Matrix rows(a.size() + b.size(), a.dim());
    rows << a.rows(), b.rows();
    std::vector<std::string> ids = a.ids();
    ids.insert(ids.end(), b.ids().begin(), b.ids().end());
    return PrototypeMatrix(std::move(rows), std::move(ids), a.learnable() && b.learnable());
}

nlohmann::json to_json(const PrototypeMatrix& p)
{
    return {{"ids", p.ids()}, {"rows", to_json(p.rows())}, {"learnable", p.learnable()}};
}

PrototypeMatrix prototypes_from_json(const nlohmann::json& j)
{
    return PrototypeMatrix(matrix_from_json(j.at("rows")), j.at("ids").get<std::vector<std::string>>(),
                           j.at("learnable").get<bool>());
}

} // namespace fcac
