#include "fcac/experiment.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>

namespace fcac {

namespace {

ModelConfig desk_model()
{
    ModelConfig m;
    m.backbone.kind = BackboneKind::cnn;
    m.backbone.channels = {8, 16, 32};
    m.relation_hidden1 = 64;
    m.relation_hidden2 = 32;
    m.dropout = 0.5;
    m.drpm_row_softmax = true;
    m.drpm_residual = true;
    return m;
}

RetsConfig desk_rets()
{
    RetsConfig r;
    r.n_way = 2;
    r.k_shot = 5;
    r.q_per_class = 3;
    r.lr = 0.05;
    r.weight_decay = 5e-3;
    r.max_iterations = 300;
    return r;
}

nlohmann::json to_json(const SyntheticLayout& s)
{
    return {{"base_classes", s.base_classes},
            {"sessions", s.sessions},
            {"classes_per_session", s.classes_per_session},
            {"train_per_class", s.train_per_class},
            {"test_per_class", s.test_per_class},
            {"rows", s.rows},
            {"cols", s.cols},
            {"within_std", s.within_std},
            {"between_std", s.between_std},
            {"seed", s.seed}};
}

SyntheticLayout layout_from_json(const nlohmann::json& j)
{
    SyntheticLayout s;
    s.base_classes = j.at("base_classes").get<int>();
    s.sessions = j.at("sessions").get<int>();
    s.classes_per_session = j.at("classes_per_session").get<int>();
    s.train_per_class = j.at("train_per_class").get<int>();
    s.test_per_class = j.at("test_per_class").get<int>();
    s.rows = j.at("rows").get<int>();
    s.cols = j.at("cols").get<int>();
    s.within_std = j.at("within_std").get<double>();
    s.between_std = j.at("between_std").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    return s;
}

void reject_unknown(const nlohmann::json& given, const nlohmann::json& known, const std::string& prefix)
{
    if (!given.is_object()) throw ConfigError("'" + (prefix.empty() ? "config" : prefix) + "' must be an object");
    for (const auto& [key, value] : given.items()) {
        const std::string path = prefix.empty() ? key : prefix + "." + key;
        if (!known.contains(key)) throw ConfigError("unknown config key '" + path + "'");
        if (known.at(key).is_object()) reject_unknown(value, known.at(key), path);
    }
}

std::pair<int, int> input_shape(const ExperimentConfig& c)
{
    if (c.dataset.kind == DatasetKind::synthetic) return {c.dataset.synthetic.rows, c.dataset.synthetic.cols};
    if (c.features.duration_s <= 0.0) throw ConfigError("manifest datasets need features.duration_s > 0");
    const auto samples = static_cast<std::size_t>(std::llround(c.features.duration_s * c.features.sample_rate));
    return {frame_count(samples, c.features), c.features.mel_bins};
}

std::string read_text(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace

ExperimentConfig::ExperimentConfig() : model(desk_model()), rets(desk_rets()) {}

std::filesystem::path ExperimentConfig::resolve(const std::string& path) const
{
    std::filesystem::path p(path);
    return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
}

std::filesystem::path ExperimentConfig::run_dir() const
{
    return resolve(output_dir) / experiment_id;
}

std::filesystem::path ExperimentConfig::cache_root() const
{
    if (!cache_dir.empty()) return resolve(cache_dir);
    if (const char* env = std::getenv("FCAC_CACHE_DIR"); env && *env) return env;
    return resolve(output_dir) / "cache";
}

void ExperimentConfig::validate() const
{
    if (experiment_id.empty() || experiment_id.find('/') != std::string::npos || experiment_id == "." ||
        experiment_id == "..")
        throw ConfigError("experiment_id must be a plain directory name");
    if (output_dir.empty()) throw ConfigError("output_dir is empty");
    if (n_way < 1 || k_shot < 1) throw ConfigError("protocol.n_way and protocol.k_shot must be positive");
    if (evaluation.seeds.empty()) throw ConfigError("evaluation.seeds is empty");
    if (std::set<std::uint64_t>(evaluation.seeds.begin(), evaluation.seeds.end()).size() != evaluation.seeds.size())
        throw ConfigError("evaluation.seeds has duplicates");
    if (finetune.steps < 0 || finetune.lr <= 0.0) throw ConfigError("finetune needs steps >= 0 and lr > 0");
    if (model.dropout < 0.0 || model.dropout >= 1.0) throw ConfigError("model.dropout must lie in [0, 1)");
    if (model.relation_hidden1 < 1 || model.relation_hidden2 < 1 || model.latent_dim < 0)
        throw ConfigError("model widths must be positive");

    std::size_t base_classes = 0;
    if (dataset.kind == DatasetKind::synthetic) {
        const auto& s = dataset.synthetic;
        if (s.base_classes < 1 || s.sessions < 0 || s.rows < 1 || s.cols < 1 || s.test_per_class < 1)
            throw ConfigError("dataset.synthetic sizes must be positive");
        if (s.sessions > 0 && s.classes_per_session < n_way)
            throw ConfigError("dataset.synthetic.classes_per_session is smaller than protocol.n_way");
        if (s.train_per_class < k_shot) throw ConfigError("dataset.synthetic.train_per_class is smaller than protocol.k_shot");
        if (s.within_std < 0.0 || s.between_std <= 0.0) throw ConfigError("dataset.synthetic spreads must be positive");
        base_classes = static_cast<std::size_t>(s.base_classes);
    } else {
        if (dataset.manifest.empty()) throw ConfigError("dataset.manifest is empty");
        if (features.duration_s <= 0.0) throw ConfigError("manifest datasets need features.duration_s > 0");
    }

    const auto [rows, cols] = input_shape(*this);
    if (model.backbone.input_rows != rows || model.backbone.input_cols != cols)
        throw ConfigError("model.backbone input shape " + std::to_string(model.backbone.input_rows) + "x" +
                          std::to_string(model.backbone.input_cols) + " does not match the " + std::to_string(rows) +
                          "x" + std::to_string(cols) + " feature maps");
    if (model.backbone.kind == BackboneKind::cnn && model.backbone.channels.empty())
        throw ConfigError("model.backbone.channels is empty");
    if (base_classes > 0) rets.validate(base_classes);
}

nlohmann::json default_config()
{
    ExperimentConfig c;
    auto j = to_json(c);
    j["model"]["backbone"]["input_rows"] = 0;
    j["model"]["backbone"]["input_cols"] = 0;
    return j;
}

nlohmann::json to_json(const ExperimentConfig& c)
{
    const char* kind = c.dataset.kind == DatasetKind::synthetic ? "synthetic" : "manifest";
    return {{"experiment_id", c.experiment_id},
            {"output_dir", c.output_dir},
            {"cache_dir", c.cache_dir},
            {"dataset",
             {{"kind", kind},
              {"synthetic", to_json(c.dataset.synthetic)},
              {"manifest", c.dataset.manifest},
              {"audio_root", c.dataset.audio_root}}},
            {"protocol", {{"n_way", c.n_way}, {"k_shot", c.k_shot}}},
            {"features", to_json(c.features)},
            {"model", to_json(c.model)},
            {"rets", to_json(c.rets)},
            {"finetune", to_json(c.finetune)},
            {"evaluation",
             {{"seeds", c.evaluation.seeds},
              {"finetune", c.evaluation.finetune},
              {"refine_base_session", c.evaluation.refine_base_session},
              {"chain_refined", c.evaluation.chain_refined}}},
            {"ablation", to_json(c.ablation)}};
}

ExperimentConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir)
{
    auto merged = default_config();
    reject_unknown(j, merged, "");
    merged.merge_patch(j);

    ExperimentConfig c;
    c.base_dir = base_dir;
    try {
        c.experiment_id = merged.at("experiment_id").get<std::string>();
        c.output_dir = merged.at("output_dir").get<std::string>();
        c.cache_dir = merged.at("cache_dir").get<std::string>();

        const auto& d = merged.at("dataset");
        const auto kind = d.at("kind").get<std::string>();
        if (kind == "synthetic")
            c.dataset.kind = DatasetKind::synthetic;
        else if (kind == "manifest")
            c.dataset.kind = DatasetKind::manifest;
        else
            throw ConfigError("dataset.kind must be 'synthetic' or 'manifest', got '" + kind + "'");
        c.dataset.synthetic = layout_from_json(d.at("synthetic"));
        c.dataset.manifest = d.at("manifest").get<std::string>();
        c.dataset.audio_root = d.at("audio_root").get<std::string>();

        c.n_way = merged.at("protocol").at("n_way").get<int>();
        c.k_shot = merged.at("protocol").at("k_shot").get<int>();
        c.features = fbank_from_json(merged.at("features"));
        c.model = model_config_from_json(merged.at("model"));
        c.rets = rets_from_json(merged.at("rets"));
        c.finetune = finetune_from_json(merged.at("finetune"));
        c.ablation = ablation_from_json(merged.at("ablation"));

        const auto& e = merged.at("evaluation");
        c.evaluation.seeds = e.at("seeds").get<std::vector<std::uint64_t>>();
        c.evaluation.finetune = e.at("finetune").get<bool>();
        c.evaluation.refine_base_session = e.at("refine_base_session").get<bool>();
        c.evaluation.chain_refined = e.at("chain_refined").get<bool>();
    } catch (const nlohmann::json::exception& err) {
        throw ConfigError(std::string("malformed config: ") + err.what());
    }

    // The backbone input shape follows the data unless spelled out.
    const auto [rows, cols] = input_shape(c);
    if (c.model.backbone.input_rows == 0) c.model.backbone.input_rows = rows;
    if (c.model.backbone.input_cols == 0) c.model.backbone.input_cols = cols;
    c.validate();
    return c;
}

void apply_override(nlohmann::json& j, const std::string& assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);

    nlohmann::json* node = &j;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
        if (!node->is_object()) *node = nlohmann::json::object();
        node = &(*node)[part];
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    auto value = nlohmann::json::parse(text, nullptr, false);
    *node = value.is_discarded() ? nlohmann::json(text) : std::move(value);
}

ExperimentConfig load_config(const std::optional<std::filesystem::path>& path, std::span<const std::string> overrides)
{
    nlohmann::json j = nlohmann::json::object();
    std::filesystem::path base_dir;
    if (path) {
        j = nlohmann::json::parse(read_text(*path), nullptr, false);
        if (j.is_discarded()) throw ConfigError("config file " + path->string() + " is not valid JSON");
        base_dir = path->parent_path();
    }
    for (const auto& o : overrides) apply_override(j, o);
    return config_from_json(j, base_dir);
}

ExperimentConfig with_seed(ExperimentConfig c, std::uint64_t seed)
{
    c.dataset.synthetic.seed = seed;
    c.rets.seed = seed;
    c.finetune.seed = seed;
    c.evaluation.seeds = {seed};
    return c;
}

PreparedData prepare_data(const ExperimentConfig& c)
{
    PreparedData data;
    if (c.dataset.kind == DatasetKind::synthetic) {
        const auto& s = c.dataset.synthetic;
        const int per_class = s.train_per_class + s.test_per_class;
        SyntheticSpec spec{s.base_classes + s.sessions * s.classes_per_session, s.rows * s.cols, per_class,
                           s.within_std, s.between_std, s.seed};
        const auto generated = generate_synthetic(spec);
        const std::string fingerprint = "synthetic-" + Digest().text(to_json(s).dump()).hex();
        data.features = FeatureStore(fingerprint);
        data.incremental.resize(static_cast<std::size_t>(s.sessions));
        for (std::size_t i = 0; i < generated.samples.size(); ++i) {
            const auto& sample = generated.samples[i];
            const int k = static_cast<int>(i % static_cast<std::size_t>(per_class));
            const std::string label = "c" + std::to_string(sample.label);
            const std::string ref = label + "/" + std::to_string(k);
            Matrix map(s.rows, s.cols);
            for (int r = 0; r < s.rows; ++r)
                for (int q = 0; q < s.cols; ++q) map(r, q) = sample.values(r * s.cols + q);
            data.features.add(ref, {std::move(map), fingerprint});
            auto& session = sample.label < s.base_classes
                                ? data.base
                                : data.incremental[static_cast<std::size_t>((sample.label - s.base_classes) /
                                                                            s.classes_per_session)];
            (k < s.train_per_class ? session.train : session.test).push_back({ref, label});
        }
        return data;
    }

    const auto entries = read_manifest(c.resolve(c.dataset.manifest));
    std::tie(data.base, data.incremental) = group_sessions(entries);
    const std::string fingerprint = c.features.fingerprint();
    data.features = FeatureStore(fingerprint);
    const FeatureCache cache(c.cache_root());
    const auto audio_root = c.resolve(c.dataset.audio_root);
    for (const auto& entry : entries) {
        if (data.features.contains(entry.ref)) continue;
        if (auto cached = cache.load(entry.ref, fingerprint)) {
            data.features.add(entry.ref, std::move(*cached));
            ++data.cache_hits;
            continue;
        }
        const auto path = audio_root / entry.ref;
        if (!std::filesystem::exists(path)) throw FeatureError("missing audio file: " + path.string());
        auto map = extract_fbank(read_wav(path), c.features);
        cache.store(entry.ref, map);
        data.features.add(entry.ref, std::move(map));
        ++data.extracted;
    }
    return data;
}

SessionSchedule make_schedule(const ExperimentConfig& c, const PreparedData& data, std::uint64_t seed)
{
    return build_schedule(data.base, data.incremental, c.n_way, c.k_shot, seed);
}

ModelBundle train_model(const ExperimentConfig& c, const PreparedData& data, TrainingStats* stats,
                        const IterationCallback& on_iteration)
{
    auto classes = LabelSpace::from_manifest(data.base.train).labels();
    auto bundle = ModelBundle::create(c.model, std::move(classes), c.rets.seed);
    return train_base(std::move(bundle), data.base.train, data.features, c.rets, c.ablation, stats, on_iteration);
}

RunReport evaluate_proposed(const ExperimentConfig& c, const ModelBundle& trained, const SessionSchedule& schedule,
                            const FeatureStore& features, std::uint64_t seed, SessionTrace* trace)
{
    ModelBundle bundle = trained;
    IncrementalOptions options;
    options.no_drpm = c.ablation.no_drpm;
    options.refine_base_session = c.evaluation.refine_base_session;
    options.chain_refined = c.evaluation.chain_refined;
    if (trace) {
        trace->prototype_rows.clear();
        trace->frozen_before = bundle.frozen_digest();
        options.on_session = [trace](std::size_t, const PrototypeMatrix& p) {
            trace->prototype_rows.push_back(static_cast<std::size_t>(p.size()));
        };
    }
    auto report = run_incremental(bundle, schedule, features, options);
    if (trace) trace->frozen_after = bundle.frozen_digest();
    report.experiment_id = c.experiment_id;
    report.method = "proposed";
    report.seed = seed;
    report.config = to_json(c);
    return report;
}

RunReport evaluate_finetune(const ExperimentConfig& c, const ModelBundle& trained, const SessionSchedule& schedule,
                            const FeatureStore& features, std::uint64_t seed)
{
    auto report = run_finetune(trained, schedule, features, c.finetune);
    report.experiment_id = c.experiment_id;
    report.method = "finetune";
    report.seed = seed;
    report.config = to_json(c);
    return report;
}

} // namespace fcac
