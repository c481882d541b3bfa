#pragma once

#include "fcac/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

namespace fcac::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir()
    {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("fcac-test-" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir()
    {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline Matrix gaussian(Eigen::Index rows, Eigen::Index cols, Rng& rng, double stddev = 1.0)
{
    return random_normal(rows, cols, stddev, rng);
}

/// ||a - b|| / max(||a||, ||b||), zero when both vanish.
inline double relative_error(const Matrix& a, const Matrix& b)
{
    const double scale = std::max(a.norm(), b.norm());
    return scale == 0.0 ? 0.0 : (a - b).norm() / scale;
}

/// Relative gradient error that tolerates gradients which are zero by
/// construction (e.g. a bias feeding straight into batch normalization).
inline double gradient_error(const Matrix& analytic, const Matrix& numeric)
{
    const double scale = std::max(analytic.norm(), numeric.norm());
    return (analytic - numeric).norm() / (scale < 1e-5 ? 1.0 : scale);
}

/// Central finite differences of `loss` with respect to every entry of `value`.
inline Matrix numeric_gradient(Matrix& value, const std::function<double()>& loss, double h = 1e-6)
{
    Matrix g(value.rows(), value.cols());
    for (Eigen::Index i = 0; i < value.size(); ++i) {
        const double old = value(i);
        value(i) = old + h;
        const double plus = loss();
        value(i) = old - h;
        const double minus = loss();
        value(i) = old;
        g(i) = (plus - minus) / (2.0 * h);
    }
    return g;
}

/// Small synthetic experiment that trains in well under a second.
inline ExperimentConfig tiny_config()
{
    ExperimentConfig c;
    c.dataset.synthetic.base_classes = 4;
    c.dataset.synthetic.sessions = 2;
    c.dataset.synthetic.classes_per_session = 2;
    c.dataset.synthetic.train_per_class = 6;
    c.dataset.synthetic.test_per_class = 3;
    c.dataset.synthetic.rows = 8;
    c.dataset.synthetic.cols = 8;
    c.dataset.synthetic.seed = 3;
    c.model.backbone.input_rows = 8;
    c.model.backbone.input_cols = 8;
    c.model.backbone.channels = {2, 3, 4};
    c.model.relation_hidden1 = 6;
    c.model.relation_hidden2 = 4;
    c.model.dropout = 0.0;
    c.k_shot = 2;
    c.rets.n_way = 2;
    c.rets.k_shot = 2;
    c.rets.q_per_class = 2;
    c.rets.episodes = 2;
    c.rets.max_iterations = 5;
    c.rets.seed = 3;
    c.finetune.steps = 3;
    c.evaluation.seeds = {3};
    return c;
}

/// A small model trained once per test binary on well-separated clusters.
struct TrainedFixture {
    ExperimentConfig config;
    PreparedData data;
    SessionSchedule schedule;
    ModelBundle bundle;
};

inline const TrainedFixture& trained_fixture()
{
    static const TrainedFixture fixture = [] {
        TrainedFixture f;
        f.config = tiny_config();
        f.config.dataset.synthetic.base_classes = 6;
        f.config.dataset.synthetic.train_per_class = 10;
        f.config.dataset.synthetic.test_per_class = 5;
        f.config.model.backbone.channels = {4, 8};
        f.config.model.relation_hidden1 = 16;
        f.config.model.relation_hidden2 = 8;
        f.config.rets.max_iterations = 80;
        f.data = prepare_data(f.config);
        f.schedule = make_schedule(f.config, f.data, 3);
        f.bundle = train_model(f.config, f.data);
        return f;
    }();
    return fixture;
}

} // namespace fcac::testing
