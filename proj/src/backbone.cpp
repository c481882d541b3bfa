#include "fcac/backbone.hpp"

#include <cmath>

namespace fcac {

Eigen::Index BackboneConfig::embedding_dim() const
{
    if (kind == BackboneKind::identity) return input_rows * input_cols;
    if (channels.empty()) throw ModelError("CNN backbone needs at least one block");
    return channels.back();
}

BackboneParams BackboneParams::init(const BackboneConfig& config, Rng& rng)
{
    BackboneParams p;
    p.config = config;
    if (config.input_rows < 1 || config.input_cols < 1) throw ModelError("backbone input shape must be positive");
    if (config.kind == BackboneKind::identity) return p;

    Eigen::Index cin = 1, h = config.input_rows, w = config.input_cols;
    for (Eigen::Index cout : config.channels) {
        if (h < 2 || w < 2) throw ModelError("feature map too small for the number of pooling stages");
        ConvBlock b;
        b.weight = ad::Parameter(random_normal(9 * cin, cout, std::sqrt(2.0 / static_cast<double>(9 * cin)), rng));
        b.bias = ad::Parameter(Matrix::Zero(1, cout));
        b.norm = BatchNorm::init(cout);
        p.blocks.push_back(std::move(b));
        cin = cout;
        h /= 2;
        w /= 2;
    }
    return p;
}

ad::Var BackboneParams::forward(ad::Tape& tape, std::span<const Matrix* const> inputs, const Pass& pass)
{
    if (inputs.empty()) throw ModelError("empty backbone batch");
    const auto batch = static_cast<Eigen::Index>(inputs.size());
    for (const Matrix* m : inputs)
        if (m->rows() != config.input_rows || m->cols() != config.input_cols)
            throw ModelError("feature map shape " + std::to_string(m->rows()) + "x" + std::to_string(m->cols()) +
                             " does not match backbone input " + std::to_string(config.input_rows) + "x" +
                             std::to_string(config.input_cols));

    const bool trainable = pass.grad && !frozen;
    if (config.kind == BackboneKind::identity) {
        Matrix x(batch, config.input_rows * config.input_cols);
        for (Eigen::Index b = 0; b < batch; ++b)
            for (Eigen::Index r = 0; r < config.input_rows; ++r)
                x.block(b, r * config.input_cols, 1, config.input_cols) = inputs[static_cast<std::size_t>(b)]->row(r);
        return tape.constant(std::move(x));
    }

    ad::MapShape shape{batch, config.input_rows, config.input_cols};
    Matrix x(shape.pixels(), 1);
    for (Eigen::Index b = 0; b < batch; ++b) {
        const Matrix& m = *inputs[static_cast<std::size_t>(b)];
        for (Eigen::Index r = 0; r < shape.height; ++r)
            for (Eigen::Index c = 0; c < shape.width; ++c) x((b * shape.height + r) * shape.width + c, 0) = m(r, c);
    }
    ad::Var h = tape.constant(std::move(x));
    for (auto& block : blocks) {
        auto w = tape.parameter(block.weight, trainable);
        auto bias = tape.parameter(block.bias, trainable);
        h = ad::add_row(ad::matmul(ad::im2col3x3(h, shape), w), bias);
        h = ad::relu(block.norm.forward(tape, h, pass, frozen));
        h = ad::max_pool2(h, shape);
        shape = ad::pooled(shape);
    }
    return ad::global_avg_pool(h, shape);
}

void BackboneParams::collect(std::vector<ad::Parameter*>& out)
{
    for (auto& b : blocks) {
        out.push_back(&b.weight);
        out.push_back(&b.bias);
        fcac::collect(b.norm, out);
    }
}

std::uint64_t BackboneParams::digest() const
{
    Digest d;
    d.text("backbone");
    for (const auto& b : blocks) {
        d.matrix(b.weight.value).matrix(b.bias.value);
        fcac::digest(d, b.norm);
    }
    return d.value();
}

Embedding embed(const Matrix& feature_map, BackboneParams& params)
{
    ad::Tape tape;
    const Matrix* in[] = {&feature_map};
    Pass pass;
    pass.norm = params.norm_mode;
    return params.forward(tape, in, pass).value().row(0);
}

Matrix embed_batch(std::span<const Matrix* const> inputs, BackboneParams& params, std::size_t chunk)
{
    Matrix out(static_cast<Eigen::Index>(inputs.size()), params.config.embedding_dim());
    for (std::size_t start = 0; start < inputs.size(); start += chunk) {
        const std::size_t n = std::min(chunk, inputs.size() - start);
        ad::Tape tape;
        out.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(n)) =
            params.forward(tape, inputs.subspan(start, n), Pass::inference()).value();
    }
    return out;
}

BackboneParams set_frozen(BackboneParams params, bool flag)
{
    params.frozen = flag;
    return params;
}

nlohmann::json to_json(const BackboneConfig& c)
{
    return {{"kind", c.kind == BackboneKind::identity ? "identity" : "cnn"},
            {"input_rows", c.input_rows},
            {"input_cols", c.input_cols},
            {"channels", c.channels}};
}

BackboneConfig backbone_config_from_json(const nlohmann::json& j)
{
    BackboneConfig c;
    const auto kind = j.value("kind", std::string("cnn"));
    if (kind == "identity")
        c.kind = BackboneKind::identity;
    else if (kind == "cnn")
        c.kind = BackboneKind::cnn;
    else
        throw ConfigError("unknown backbone kind '" + kind + "'");
    c.input_rows = j.value("input_rows", c.input_rows);
    c.input_cols = j.value("input_cols", c.input_cols);
    c.channels = j.value("channels", c.channels);
    return c;
}

nlohmann::json to_json(const BackboneParams& p)
{
    auto blocks = nlohmann::json::array();
    for (const auto& b : p.blocks)
        blocks.push_back({{"weight", to_json(b.weight.value)}, {"bias", to_json(b.bias.value)}, {"norm", to_json(b.norm)}});
    return {{"config", to_json(p.config)}, {"blocks", std::move(blocks)}, {"frozen", p.frozen}};
}

BackboneParams backbone_from_json(const nlohmann::json& j)
{
    BackboneParams p;
    p.config = backbone_config_from_json(j.at("config"));
    for (const auto& b : j.at("blocks")) {
        ConvBlock cb;
        cb.weight = ad::Parameter(matrix_from_json(b.at("weight")));
        cb.bias = ad::Parameter(matrix_from_json(b.at("bias")));
        cb.norm = batch_norm_from_json(b.at("norm"));
        p.blocks.push_back(std::move(cb));
    }
    p.frozen = j.at("frozen").get<bool>();
    return p;
}

} // namespace fcac
