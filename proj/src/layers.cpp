#include "fcac/layers.hpp"

#include <cmath>

namespace fcac {

Affine Affine::init(Eigen::Index in, Eigen::Index out, Rng& rng)
{
    // He initialization for the rectified blocks that follow.
    Affine a;
    a.weight = ad::Parameter(random_normal(in, out, std::sqrt(2.0 / static_cast<double>(in)), rng));
    a.bias = ad::Parameter(Matrix::Zero(1, out));
    return a;
}

ad::Var Affine::forward(ad::Tape& tape, const ad::Var& x, bool trainable)
{
    auto w = tape.parameter(weight, trainable);
    auto b = tape.parameter(bias, trainable);
    return ad::add_row(ad::matmul(x, w), b);
}

BatchNorm BatchNorm::init(Eigen::Index channels)
{
    BatchNorm n;
    n.gamma = ad::Parameter(Matrix::Ones(1, channels));
    n.beta = ad::Parameter(Matrix::Zero(1, channels));
    n.running_mean = RowVector::Zero(channels);
    n.running_var = RowVector::Ones(channels);
    return n;
}

ad::Var BatchNorm::forward(ad::Tape& tape, const ad::Var& x, const Pass& pass, bool frozen)
{
    const bool trainable = pass.grad && !frozen;
    auto g = tape.parameter(gamma, trainable);
    auto b = tape.parameter(beta, trainable);
    if (pass.norm == NormMode::eval)
        return ad::batch_norm_eval(x, g, b, running_mean, running_var, eps);

    RowVector mean, var;
    auto y = ad::batch_norm_train(x, g, b, eps, &mean, &var);
    if (pass.update_stats && !frozen) {
        const double n = static_cast<double>(x.rows());
        const RowVector unbiased = n > 1 ? RowVector(var * (n / (n - 1.0))) : var;
        running_mean = (1.0 - momentum) * running_mean + momentum * mean;
        running_var = (1.0 - momentum) * running_var + momentum * unbiased;
    }
    return y;
}

ad::Var dropout(const ad::Var& x, double rate, const Pass& pass)
{
    if (pass.norm != NormMode::train || pass.rng == nullptr || rate <= 0.0) return x;
    std::bernoulli_distribution keep(1.0 - rate);
    Matrix m(x.rows(), x.cols());
    const double s = 1.0 / (1.0 - rate);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = keep(*pass.rng) ? s : 0.0;
    return ad::mask(x, m);
}

void collect(Affine& a, std::vector<ad::Parameter*>& out)
{
    out.push_back(&a.weight);
    out.push_back(&a.bias);
}

void collect(BatchNorm& n, std::vector<ad::Parameter*>& out)
{
    out.push_back(&n.gamma);
    out.push_back(&n.beta);
}

void digest(Digest& d, const Affine& a)
{
    d.matrix(a.weight.value).matrix(a.bias.value);
}

void digest(Digest& d, const BatchNorm& n)
{
    d.matrix(n.gamma.value).matrix(n.beta.value).matrix(n.running_mean).matrix(n.running_var);
}

nlohmann::json to_json(const Matrix& m)
{
    std::vector<double> data(m.data(), m.data() + m.size());
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Matrix matrix_from_json(const nlohmann::json& j)
{
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw ModelError("matrix payload size mismatch");
    return Eigen::Map<const Matrix>(data.data(), rows, cols);
}

nlohmann::json to_json(const Affine& a)
{
    return {{"weight", to_json(a.weight.value)}, {"bias", to_json(a.bias.value)}};
}

nlohmann::json to_json(const BatchNorm& n)
{
    return {{"gamma", to_json(n.gamma.value)},
            {"beta", to_json(n.beta.value)},
            {"running_mean", to_json(n.running_mean)},
            {"running_var", to_json(n.running_var)},
            {"momentum", n.momentum},
            {"eps", n.eps}};
}

Affine affine_from_json(const nlohmann::json& j)
{
    Affine a;
    a.weight = ad::Parameter(matrix_from_json(j.at("weight")));
    a.bias = ad::Parameter(matrix_from_json(j.at("bias")));
    return a;
}

BatchNorm batch_norm_from_json(const nlohmann::json& j)
{
    BatchNorm n;
    n.gamma = ad::Parameter(matrix_from_json(j.at("gamma")));
    n.beta = ad::Parameter(matrix_from_json(j.at("beta")));
    n.running_mean = matrix_from_json(j.at("running_mean"));
    n.running_var = matrix_from_json(j.at("running_var"));
    n.momentum = j.at("momentum").get<double>();
    n.eps = j.at("eps").get<double>();
    return n;
}

} // namespace fcac
