#pragma once

#include "fcac/core.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace fcac {

struct Waveform {
    std::vector<double> samples;
    double sample_rate = 0.0;
};

struct FbankConfig {
    double sample_rate = 16000.0;
    double window_ms = 25.0;
    double hop_ms = 10.0;
    int mel_bins = 64;
    double log_floor = 1e-10;
    /// Per-clip mean/variance normalization over the whole map (skipped for constant maps).
    bool normalize = true;
    /// Target clip length in seconds; shorter clips are zero-padded, longer ones
    /// center-cropped. Zero keeps the native length.
    double duration_s = 0.0;
    double fmin = 0.0;
    /// Zero means Nyquist.
    double fmax = 0.0;

    int window_length() const;
    int hop_length() const;
    std::string fingerprint() const;
};

/// frames x mel_bins log filter-bank energies.
struct FeatureMap {
    Matrix values;
    std::string fingerprint;
};

/// Number of frames for `samples` input samples: floor((len - win) / hop) + 1.
int frame_count(std::size_t samples, const FbankConfig& config);

FeatureMap extract_fbank(const Waveform& waveform, const FbankConfig& config);

/// Mono PCM WAV (16-bit integer or 32-bit float).
Waveform read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const Waveform& waveform);

struct SyntheticSpec {
    int n_classes = 2;
    int dim = 2;
    int samples_per_class = 1;
    double within_std = 0.0;
    double between_std = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SyntheticSample {
    RowVector values;
    int label = 0;
};

struct SyntheticDataset {
    Matrix class_means; // n_classes x dim
    std::vector<SyntheticSample> samples; // class-major, samples_per_class per class
};

/// Gaussian clusters: class means ~ N(0, between_std^2), samples ~ N(mean, within_std^2).
SyntheticDataset generate_synthetic(const SyntheticSpec& spec);

/// Feature maps keyed by sample ref, all sharing one extraction fingerprint.
class FeatureStore {
public:
    FeatureStore() = default;
    explicit FeatureStore(std::string fingerprint) : fingerprint_(std::move(fingerprint)) {}

    /// Rejects maps carrying a different fingerprint.
    void add(const std::string& ref, FeatureMap map);
    const Matrix& at(const std::string& ref) const;
    bool contains(const std::string& ref) const { return maps_.contains(ref); }
    std::size_t size() const { return maps_.size(); }
    const std::string& fingerprint() const { return fingerprint_; }

private:
    std::string fingerprint_;
    std::unordered_map<std::string, Matrix> maps_;
};

/// One binary matrix file per (ref, fingerprint) under a cache root.
class FeatureCache {
public:
    explicit FeatureCache(std::filesystem::path root) : root_(std::move(root)) {}

    std::filesystem::path path_for(const std::string& ref, const std::string& fingerprint) const;
    std::optional<FeatureMap> load(const std::string& ref, const std::string& fingerprint) const;
    void store(const std::string& ref, const FeatureMap& map) const;

private:
    std::filesystem::path root_;
};

nlohmann::json to_json(const FbankConfig& c);
FbankConfig fbank_from_json(const nlohmann::json& j);

} // namespace fcac
