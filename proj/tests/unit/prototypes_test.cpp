#include "fcac/prototypes.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

using namespace fcac;
using fcac::testing::gaussian;

TEST(ComputePrototype, SingleEmbedding)
{
    RowVector v(3);
    v << 1.5, -2.0, 0.25;
    EXPECT_EQ(compute_prototype(Matrix(v)), v);
}

TEST(ComputePrototype, ArithmeticMean)
{
    Matrix s(2, 2);
    s << 1, 2, 3, 4;
    EXPECT_EQ(compute_prototype(s), (RowVector(2) << 2, 3).finished());
}

TEST(ComputePrototype, MatchesElementwiseLoop)
{
    Rng rng(1);
    const Matrix s = gaussian(5, 64, rng);
    const RowVector p = compute_prototype(s);
    for (Eigen::Index j = 0; j < 64; ++j) {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < 5; ++i) acc += s(i, j);
        EXPECT_NEAR(p(j), acc / 5.0, 1e-6);
    }
}

TEST(ComputePrototype, PermutationInvariant)
{
    Rng rng(2);
    const Matrix s = gaussian(7, 9, rng);
    std::vector<int> order(7);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    Matrix shuffled(7, 9);
    for (int i = 0; i < 7; ++i) shuffled.row(i) = s.row(order[static_cast<std::size_t>(i)]);
    EXPECT_LT((compute_prototype(s) - compute_prototype(shuffled)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ComputePrototype, SinglePrecision)
{
    Eigen::MatrixXf s(2, 1);
    s << 1.0f, 2.0f;
    EXPECT_FLOAT_EQ(compute_prototype(s)(0), 1.5f);
}

TEST(ComputePrototype, EmptySupportRejected)
{
    EXPECT_THROW(compute_prototype(Matrix(0, 4)), PrototypeError);
}

TEST(InitBasePrototypes, ShapeAndRegistry)
{
    Rng rng(3);
    const auto p = init_base_prototypes(55, 64, rng);
    EXPECT_EQ(p.size(), 55);
    EXPECT_EQ(p.dim(), 64);
    EXPECT_EQ(p.ids().size(), 55u);
    EXPECT_TRUE(p.learnable());
    for (int i = 0; i < 55; ++i) EXPECT_EQ(p.row_of(p.ids()[static_cast<std::size_t>(i)]), i);
}

TEST(InitBasePrototypes, DeterministicPerSeed)
{
    Rng a(4), b(4);
    EXPECT_EQ(init_base_prototypes(5, 8, a).rows(), init_base_prototypes(5, 8, b).rows());
}

TEST(InitBasePrototypes, ScaleIsInverseSqrtDim)
{
    Rng rng(5);
    const auto p = init_base_prototypes(200, 64, rng);
    const double mean = p.rows().mean();
    const double sd = std::sqrt((p.rows().array() - mean).square().mean());
    EXPECT_NEAR(mean, 0.0, 0.01);
    EXPECT_NEAR(sd, 1.0 / 8.0, 0.05 / 8.0);
}

TEST(PrototypeMatrix, RegistryErrors)
{
    EXPECT_THROW(PrototypeMatrix(Matrix::Zero(2, 3), {"a", "a"}), PrototypeError);
    EXPECT_THROW(PrototypeMatrix(Matrix::Zero(2, 3), {"a"}), PrototypeError);
    PrototypeMatrix p(Matrix::Zero(1, 3), {"a"});
    EXPECT_THROW(p.row_of("b"), PrototypeError);
}

TEST(PseudoBaseSubset, ExcludeNothing)
{
    Rng rng(6);
    const auto p = init_base_prototypes(6, 4, rng);
    const auto sub = pseudo_base_subset(p, {});
    EXPECT_EQ(sub.rows(), p.rows());
    EXPECT_EQ(sub.ids(), p.ids());
}

TEST(PseudoBaseSubset, KeepsOrderAndRowsVerbatim)
{
    Rng rng(7);
    const auto p = init_base_prototypes(55, 8, rng);
    const std::vector<std::string> excluded{"3", "17", "40", "0", "54"};
    const auto sub = pseudo_base_subset(p, excluded);
    ASSERT_EQ(sub.size(), 50);
    int last = -1;
    for (Eigen::Index i = 0; i < sub.size(); ++i) {
        const auto& id = sub.ids()[static_cast<std::size_t>(i)];
        EXPECT_EQ(std::count(excluded.begin(), excluded.end(), id), 0);
        const int src = p.row_of(id);
        EXPECT_GT(src, last);
        last = src;
        EXPECT_EQ(sub.rows().row(i), p.rows().row(src));
    }
}

TEST(PseudoBaseSubset, UnknownLabelRejected)
{
    Rng rng(8);
    EXPECT_THROW(pseudo_base_subset(init_base_prototypes(3, 2, rng), {"9"}), PrototypeError);
}

TEST(Merge, AppendsRows)
{
    Rng rng(9);
    const auto base = pseudo_base_subset(init_base_prototypes(55, 8, rng), {"0", "1", "2", "3", "4"});
    const PrototypeMatrix fresh(gaussian(5, 8, rng), {"n0", "n1", "n2", "n3", "n4"});
    const auto m = merge(base, fresh);
    ASSERT_EQ(m.size(), 55);
    for (Eigen::Index i = 0; i < 50; ++i) EXPECT_EQ(m.rows().row(i), base.rows().row(i));
    for (Eigen::Index i = 0; i < 5; ++i) EXPECT_EQ(m.rows().row(50 + i), fresh.rows().row(i));
    for (Eigen::Index i = 0; i < m.size(); ++i) EXPECT_EQ(m.row_of(m.ids()[static_cast<std::size_t>(i)]), i);
}

TEST(Merge, EmptyIsIdentity)
{
    Rng rng(10);
    const auto p = init_base_prototypes(4, 3, rng);
    const auto m = merge(p, PrototypeMatrix());
    EXPECT_EQ(m.rows(), p.rows());
    EXPECT_EQ(m.ids(), p.ids());
    EXPECT_EQ(merge(PrototypeMatrix(), p).rows(), p.rows());
}

TEST(Merge, CollisionAndWidthRejected)
{
    PrototypeMatrix a(Matrix::Zero(1, 2), {"x"});
    EXPECT_THROW(merge(a, PrototypeMatrix(Matrix::Ones(1, 2), {"x"})), PrototypeError);
    EXPECT_THROW(merge(a, PrototypeMatrix(Matrix::Ones(1, 3), {"y"})), PrototypeError);
}

TEST(Merge, CountsAddUp)
{
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        std::uniform_int_distribution<int> n(0, 6);
        const int na = n(rng), nb = n(rng);
        std::vector<std::string> ia, ib;
        for (int i = 0; i < na; ++i) ia.push_back("a" + std::to_string(i));
        for (int i = 0; i < nb; ++i) ib.push_back("b" + std::to_string(i));
        const auto m = merge(PrototypeMatrix(gaussian(na, 3, rng), ia), PrototypeMatrix(gaussian(nb, 3, rng), ib));
        EXPECT_EQ(m.size(), na + nb);
    }
}

TEST(PrototypeMatrix, JsonRoundTrip)
{
    Rng rng(12);
    const auto p = init_base_prototypes({"dog", "cat", "owl"}, 5, rng);
    const auto back = prototypes_from_json(to_json(p));
    EXPECT_EQ(back.rows(), p.rows());
    EXPECT_EQ(back.ids(), p.ids());
    EXPECT_EQ(back.learnable(), p.learnable());
}
