#include "fcac/protocol.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace fcac {

LabelSpace::LabelSpace(std::vector<std::string> labels) : labels_(std::move(labels))
{
    for (std::size_t i = 0; i < labels_.size(); ++i)
        if (!index_.emplace(labels_[i], i).second) throw ProtocolError("duplicate label '" + labels_[i] + "'");
}

LabelSpace LabelSpace::from_manifest(const Manifest& m)
{
    std::vector<std::string> labels;
    std::set<std::string> seen;
    for (const auto& r : m)
        if (seen.insert(r.label).second) labels.push_back(r.label);
    return LabelSpace(std::move(labels));
}

bool LabelSpace::disjoint(const LabelSpace& other) const
{
    return std::none_of(labels_.begin(), labels_.end(), [&](const auto& l) { return other.contains(l); });
}

ClassIndex::ClassIndex(const Manifest& m) : manifest_(&m)
{
    std::unordered_map<std::string, std::size_t> slot;
    for (std::size_t i = 0; i < m.size(); ++i) {
        auto [it, inserted] = slot.emplace(m[i].label, labels_.size());
        if (inserted) {
            labels_.push_back(m[i].label);
            members_.emplace_back();
        }
        members_[it->second].push_back(i);
    }
}

namespace {

/// k distinct indices from [0, n), in draw order (partial Fisher-Yates).
std::vector<std::size_t> draw_distinct(std::size_t n, std::size_t k, Rng& rng)
{
    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(pool[i], pool[pick(rng)]);
    }
    pool.resize(k);
    return pool;
}

void check_test_labels(const SessionManifest& s, const LabelSpace& space, std::size_t index)
{
    for (const auto& r : s.test)
        if (!space.contains(r.label))
            throw ProtocolError("session " + std::to_string(index) + ": test label '" + r.label +
                                "' has no training data");
}

} // namespace

SessionSchedule build_schedule(const SessionManifest& base, const std::vector<SessionManifest>& incremental,
                               int n_way, int k_shot, std::uint64_t seed)
{
    if (n_way < 1 || k_shot < 1) throw ProtocolError("n_way and k_shot must be positive");
    if (base.train.empty()) throw ProtocolError("base session has no training records");

    SessionSchedule schedule;
    schedule.n_way = n_way;
    schedule.k_shot = k_shot;

    SessionDescriptor s0;
    s0.index = 0;
    s0.label_space = LabelSpace::from_manifest(base.train);
    check_test_labels(base, s0.label_space, 0);
    s0.train = base.train;
    s0.test = base.test;
    schedule.sessions.push_back(std::move(s0));

    // Overlap is checked on the full sessions, before any class is cut.
    std::vector<LabelSpace> raw_spaces{schedule.sessions.front().label_space};
    for (const auto& raw : incremental) raw_spaces.push_back(LabelSpace::from_manifest(raw.train));
    for (std::size_t a = 0; a < raw_spaces.size(); ++a)
        for (std::size_t b = a + 1; b < raw_spaces.size(); ++b)
            if (!raw_spaces[a].disjoint(raw_spaces[b]))
                throw ProtocolError("label spaces of sessions " + std::to_string(a) + " and " + std::to_string(b) +
                                    " overlap");

    Rng rng(derive_seed(seed, "schedule"));
    for (std::size_t i = 0; i < incremental.size(); ++i) {
        const auto& raw = incremental[i];
        const std::size_t index = i + 1;
        if (raw.train.empty()) throw ProtocolError("session " + std::to_string(index) + " has no training records");
        ClassIndex classes(raw.train);
        if (classes.num_classes() < static_cast<std::size_t>(n_way))
            throw ProtocolError("session " + std::to_string(index) + " carries " +
                                std::to_string(classes.num_classes()) + " classes, need " + std::to_string(n_way));
        for (std::size_t c = 0; c < classes.num_classes(); ++c)
            if (classes.members(c).size() < static_cast<std::size_t>(k_shot))
                throw ProtocolError("session " + std::to_string(index) + ": class '" + classes.labels()[c] +
                                    "' has " + std::to_string(classes.members(c).size()) +
                                    " training samples, need " + std::to_string(k_shot));
        check_test_labels(raw, LabelSpace::from_manifest(raw.train), index);

        // Keep the chosen classes in first-seen order so row registration is stable.
        auto chosen = draw_distinct(classes.num_classes(), static_cast<std::size_t>(n_way), rng);
        std::sort(chosen.begin(), chosen.end());
        SessionDescriptor s;
        s.index = static_cast<int>(index);
        std::vector<std::string> labels;
        for (std::size_t c : chosen) {
            labels.push_back(classes.labels()[c]);
            const auto& members = classes.members(c);
            auto picks = draw_distinct(members.size(), static_cast<std::size_t>(k_shot), rng);
            std::sort(picks.begin(), picks.end());
            for (std::size_t p : picks) s.train.push_back(raw.train[members[p]]);
        }
        s.label_space = LabelSpace(std::move(labels));
        for (const auto& r : raw.test)
            if (s.label_space.contains(r.label)) s.test.push_back(r);
        schedule.sessions.push_back(std::move(s));
    }
    return schedule;
}

Manifest cumulative_test_set(const SessionSchedule& schedule, std::size_t l)
{
    if (l >= schedule.sessions.size())
        throw ProtocolError("session " + std::to_string(l) + " out of range (" +
                            std::to_string(schedule.sessions.size()) + " sessions)");
    Manifest out;
    for (std::size_t j = 0; j <= l; ++j)
        out.insert(out.end(), schedule.sessions[j].test.begin(), schedule.sessions[j].test.end());
    return out;
}

Episode sample_episode(const ClassIndex& base, int n, int k, Rng& rng)
{
    if (n < 1 || k < 1) throw SamplingError("episode shape must be positive");
    if (base.num_classes() < static_cast<std::size_t>(n))
        throw SamplingError("cannot draw " + std::to_string(n) + "-way episode from " +
                            std::to_string(base.num_classes()) + " classes");
    auto classes = draw_distinct(base.num_classes(), static_cast<std::size_t>(n), rng);
    Episode e;
    std::vector<std::string> labels;
    for (std::size_t c : classes) {
        const auto& members = base.members(c);
        if (members.size() < static_cast<std::size_t>(k))
            throw SamplingError("class '" + base.labels()[c] + "' has fewer than " + std::to_string(k) + " samples");
        labels.push_back(base.labels()[c]);
        for (std::size_t p : draw_distinct(members.size(), static_cast<std::size_t>(k), rng))
            e.support.push_back(base.manifest()[members[p]]);
    }
    e.label_set = LabelSpace(std::move(labels));
    return e;
}

Episode sample_episode(const Manifest& base_train, int n, int k, Rng& rng)
{
    return sample_episode(ClassIndex(base_train), n, k, rng);
}

QuerySet sample_query_set(const ClassIndex& base, int q_per_class, Rng& rng)
{
    if (q_per_class < 1) throw SamplingError("q_per_class must be at least 1");
    if (base.num_classes() == 0) throw SamplingError("empty base set");
    QuerySet q;
    for (std::size_t c = 0; c < base.num_classes(); ++c) {
        const auto& members = base.members(c);
        if (members.size() < static_cast<std::size_t>(q_per_class))
            throw SamplingError("class '" + base.labels()[c] + "' has fewer than " + std::to_string(q_per_class) +
                                " samples");
        for (std::size_t p : draw_distinct(members.size(), static_cast<std::size_t>(q_per_class), rng))
            q.samples.push_back(base.manifest()[members[p]]);
    }
    return q;
}

QuerySet sample_query_set(const Manifest& base_train, int q_per_class, Rng& rng)
{
    return sample_query_set(ClassIndex(base_train), q_per_class, rng);
}

std::vector<ManifestEntry> parse_manifest(std::istream& in)
{
    std::vector<ManifestEntry> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, '\t')) fields.push_back(f);
        if (fields.size() != 4)
            throw ProtocolError("manifest line " + std::to_string(lineno) + ": expected 4 tab-separated fields");
        ManifestEntry e{fields[0], fields[1], 0, fields[3]};
        try {
            std::size_t used = 0;
            e.session = std::stoi(fields[2], &used);
            if (used != fields[2].size() || e.session < 0) throw std::invalid_argument("session");
        } catch (const std::exception&) {
            throw ProtocolError("manifest line " + std::to_string(lineno) + ": bad session index '" + fields[2] + "'");
        }
        if (e.split != "train" && e.split != "test")
            throw ProtocolError("manifest line " + std::to_string(lineno) + ": split must be train or test");
        out.push_back(std::move(e));
    }
    return out;
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ProtocolError("cannot open manifest " + path.string());
    return parse_manifest(in);
}

void write_manifest(std::ostream& out, const std::vector<ManifestEntry>& entries)
{
    out << "# ref\tlabel\tsession\tsplit\n";
    for (const auto& e : entries) out << e.ref << '\t' << e.label << '\t' << e.session << '\t' << e.split << '\n';
}

std::pair<SessionManifest, std::vector<SessionManifest>> group_sessions(const std::vector<ManifestEntry>& entries)
{
    int last = -1;
    for (const auto& e : entries) last = std::max(last, e.session);
    if (last < 0) throw ProtocolError("manifest is empty");
    std::vector<SessionManifest> sessions(static_cast<std::size_t>(last) + 1);
    for (const auto& e : entries) {
        auto& s = sessions[static_cast<std::size_t>(e.session)];
        (e.split == "train" ? s.train : s.test).push_back({e.ref, e.label});
    }
    for (std::size_t i = 0; i < sessions.size(); ++i)
        if (sessions[i].train.empty()) throw ProtocolError("session " + std::to_string(i) + " has no training records");
    SessionManifest base = std::move(sessions.front());
    sessions.erase(sessions.begin());
    return {std::move(base), std::move(sessions)};
}

namespace {

nlohmann::json manifest_json(const Manifest& m)
{
    auto arr = nlohmann::json::array();
    for (const auto& r : m) arr.push_back({r.ref, r.label});
    return arr;
}

Manifest manifest_from(const nlohmann::json& j)
{
    Manifest m;
    for (const auto& r : j) m.push_back({r.at(0).get<std::string>(), r.at(1).get<std::string>()});
    return m;
}

} // namespace

nlohmann::json to_json(const SessionSchedule& s)
{
    auto sessions = nlohmann::json::array();
    for (const auto& d : s.sessions)
        sessions.push_back({{"index", d.index},
                            {"labels", d.label_space.labels()},
                            {"train", manifest_json(d.train)},
                            {"test", manifest_json(d.test)}});
    return {{"n_way", s.n_way}, {"k_shot", s.k_shot}, {"sessions", std::move(sessions)}};
}

SessionSchedule schedule_from_json(const nlohmann::json& j)
{
    SessionSchedule s;
    s.n_way = j.at("n_way").get<int>();
    s.k_shot = j.at("k_shot").get<int>();
    for (const auto& d : j.at("sessions")) {
        SessionDescriptor sd;
        sd.index = d.at("index").get<int>();
        sd.label_space = LabelSpace(d.at("labels").get<std::vector<std::string>>());
        sd.train = manifest_from(d.at("train"));
        sd.test = manifest_from(d.at("test"));
        s.sessions.push_back(std::move(sd));
    }
    return s;
}

} // namespace fcac
