#pragma once

// Experiment configuration and the data/training/evaluation steps shared by
// the command-line subcommands.

#include "fcac/evaluation.hpp"
#include "fcac/features.hpp"
#include "fcac/protocol.hpp"
#include "fcac/training.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fcac {

/// Gaussian-cluster stand-in for an audio corpus: every class gets
/// train_per_class + test_per_class rows x cols feature maps.
struct SyntheticLayout {
    int base_classes = 10;
    int sessions = 3;
    int classes_per_session = 2;
    int train_per_class = 30;
    int test_per_class = 20;
    int rows = 16;
    int cols = 16;
    double within_std = 0.1;
    double between_std = 1.0;
    std::uint64_t seed = 0;
};

enum class DatasetKind { synthetic, manifest };

struct DatasetConfig {
    DatasetKind kind = DatasetKind::synthetic;
    SyntheticLayout synthetic;
    /// Manifest and audio paths are relative to the config file.
    std::string manifest;
    std::string audio_root;
};

struct EvaluationConfig {
    std::vector<std::uint64_t> seeds{0};
    bool finetune = true;
    bool refine_base_session = false;
    bool chain_refined = false;
};

/// Defaults are sized for the synthetic desk-scale run.
struct ExperimentConfig {
    ExperimentConfig();

    std::string experiment_id = "fcac";
    std::string output_dir = "runs";
    /// Empty: $FCAC_CACHE_DIR, else <output_dir>/cache.
    std::string cache_dir;
    DatasetConfig dataset;
    int n_way = 2;
    int k_shot = 5;
    FbankConfig features;
    ModelConfig model;
    RetsConfig rets;
    FinetuneConfig finetune;
    EvaluationConfig evaluation;
    Ablation ablation;
    /// Directory relative paths resolve against; not serialized.
    std::filesystem::path base_dir;

    std::filesystem::path resolve(const std::string& path) const;
    std::filesystem::path run_dir() const;
    std::filesystem::path cache_root() const;
    /// Throws ConfigError on inconsistent fields.
    void validate() const;
};

/// Every key with its default value.
nlohmann::json default_config();
nlohmann::json to_json(const ExperimentConfig& c);
/// Missing keys take their defaults; unknown keys are rejected.
ExperimentConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});

/// Applies `key.path=value`; the value is parsed as JSON when possible and
/// taken as a string otherwise.
void apply_override(nlohmann::json& j, const std::string& assignment);

ExperimentConfig load_config(const std::optional<std::filesystem::path>& path,
                             std::span<const std::string> overrides = {});

/// The same experiment with data, initialization, training, finetuning and
/// evaluation all driven by `seed`.
ExperimentConfig with_seed(ExperimentConfig c, std::uint64_t seed);

struct PreparedData {
    SessionManifest base;
    std::vector<SessionManifest> incremental;
    FeatureStore features;
    std::size_t cache_hits = 0;
    std::size_t extracted = 0;
};

/// Generates the synthetic corpus or extracts (and caches) audio features.
PreparedData prepare_data(const ExperimentConfig& c);

SessionSchedule make_schedule(const ExperimentConfig& c, const PreparedData& data, std::uint64_t seed);

ModelBundle train_model(const ExperimentConfig& c, const PreparedData& data, TrainingStats* stats = nullptr,
                        const IterationCallback& on_iteration = {});

struct SessionTrace {
    std::uint64_t frozen_before = 0;
    std::uint64_t frozen_after = 0;
    std::vector<std::size_t> prototype_rows;
};

RunReport evaluate_proposed(const ExperimentConfig& c, const ModelBundle& trained, const SessionSchedule& schedule,
                            const FeatureStore& features, std::uint64_t seed, SessionTrace* trace = nullptr);
RunReport evaluate_finetune(const ExperimentConfig& c, const ModelBundle& trained, const SessionSchedule& schedule,
                            const FeatureStore& features, std::uint64_t seed);

} // namespace fcac
