#pragma once

// Session structure of few-shot class-incremental learning: a base session
// with abundant data followed by N-way K-shot incremental sessions whose
// label sets are pairwise disjoint. All sampling lives here.

#include "fcac/core.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

namespace fcac {

struct Record {
    std::string ref;
    std::string label;

    bool operator==(const Record&) const = default;
};

using Manifest = std::vector<Record>;

/// Ordered, duplicate-free set of class labels.
class LabelSpace {
public:
    LabelSpace() = default;
    /// Throws ProtocolError on duplicates.
    explicit LabelSpace(std::vector<std::string> labels);
    /// Labels in first-seen order.
    static LabelSpace from_manifest(const Manifest& m);

    const std::vector<std::string>& labels() const { return labels_; }
    std::size_t size() const { return labels_.size(); }
    bool contains(const std::string& label) const { return index_.contains(label); }
    bool disjoint(const LabelSpace& other) const;

    bool operator==(const LabelSpace& o) const { return labels_ == o.labels_; }

private:
    std::vector<std::string> labels_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct SessionDescriptor {
    int index = 0;
    LabelSpace label_space;
    Manifest train;
    Manifest test;
};

struct SessionSchedule {
    std::vector<SessionDescriptor> sessions;
    int n_way = 0;
    int k_shot = 0;

    std::size_t size() const { return sessions.size(); }
};

/// Raw train/test records of one session before validation.
struct SessionManifest {
    Manifest train;
    Manifest test;
};

struct Episode {
    Manifest support; // grouped by label, K consecutive records per label
    LabelSpace label_set;
};

struct QuerySet {
    Manifest samples;
};

/// Record indices of a manifest grouped by label (first-seen order).
class ClassIndex {
public:
    explicit ClassIndex(const Manifest& m);

    const Manifest& manifest() const { return *manifest_; }
    const std::vector<std::string>& labels() const { return labels_; }
    const std::vector<std::size_t>& members(std::size_t cls) const { return members_[cls]; }
    std::size_t num_classes() const { return labels_.size(); }

private:
    const Manifest* manifest_;
    std::vector<std::string> labels_;
    std::vector<std::vector<std::size_t>> members_;
};

/// Validates disjointness and N-way K-shot shape. Oversupplied incremental
/// sessions are cut down to N classes x K samples with a seeded draw.
SessionSchedule build_schedule(const SessionManifest& base, const std::vector<SessionManifest>& incremental,
                               int n_way, int k_shot, std::uint64_t seed);

/// Test records of sessions 0..l concatenated.
Manifest cumulative_test_set(const SessionSchedule& schedule, std::size_t l);

Episode sample_episode(const ClassIndex& base_train, int n, int k, Rng& rng);
Episode sample_episode(const Manifest& base_train, int n, int k, Rng& rng);
/// q_per_class records from every base class.
QuerySet sample_query_set(const ClassIndex& base_train, int q_per_class, Rng& rng);
QuerySet sample_query_set(const Manifest& base_train, int q_per_class, Rng& rng);

/// One line of a manifest file: `ref<TAB>label<TAB>session<TAB>split`.
struct ManifestEntry {
    std::string ref;
    std::string label;
    int session = 0;
    std::string split; // "train" or "test"
};

std::vector<ManifestEntry> parse_manifest(std::istream& in);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(std::ostream& out, const std::vector<ManifestEntry>& entries);
/// Groups entries into base (session 0) and incremental sessions 1..L; gaps are errors.
std::pair<SessionManifest, std::vector<SessionManifest>> group_sessions(const std::vector<ManifestEntry>& entries);

nlohmann::json to_json(const SessionSchedule& s);
SessionSchedule schedule_from_json(const nlohmann::json& j);

} // namespace fcac
