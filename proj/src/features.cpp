#include "fcac/features.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <numbers>

namespace fcac {

int FbankConfig::window_length() const
{
    return static_cast<int>(std::lround(sample_rate * window_ms / 1000.0));
}

int FbankConfig::hop_length() const
{
    return static_cast<int>(std::lround(sample_rate * hop_ms / 1000.0));
}

std::string FbankConfig::fingerprint() const
{
    Digest d;
    d.text("fbank-v1").f64(sample_rate).f64(window_ms).f64(hop_ms).u64(static_cast<std::uint64_t>(mel_bins));
    d.f64(log_floor).u64(normalize ? 1 : 0).f64(duration_s).f64(fmin).f64(fmax);
    return d.hex();
}

int frame_count(std::size_t samples, const FbankConfig& config)
{
    const auto win = static_cast<std::size_t>(config.window_length());
    const auto hop = static_cast<std::size_t>(config.hop_length());
    if (samples < win) return 0;
    return static_cast<int>((samples - win) / hop + 1);
}

namespace {

double hz_to_mel(double hz)
{
    return 2595.0 * std::log10(1.0 + hz / 700.0);
}

double mel_to_hz(double mel)
{
    return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

/// mel_bins x (nfft/2 + 1) triangular filters.
Matrix mel_filterbank(const FbankConfig& c, int nfft)
{
    const int nbins = nfft / 2 + 1;
    const double fmax = c.fmax > 0.0 ? c.fmax : c.sample_rate / 2.0;
    const double lo = hz_to_mel(c.fmin), hi = hz_to_mel(fmax);
    std::vector<double> edges(static_cast<std::size_t>(c.mel_bins) + 2);
    for (std::size_t i = 0; i < edges.size(); ++i)
        edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(c.mel_bins + 1));
    Matrix fb = Matrix::Zero(c.mel_bins, nbins);
    for (int m = 0; m < c.mel_bins; ++m) {
        const double left = edges[static_cast<std::size_t>(m)];
        const double center = edges[static_cast<std::size_t>(m) + 1];
        const double right = edges[static_cast<std::size_t>(m) + 2];
        for (int k = 0; k < nbins; ++k) {
            const double f = c.sample_rate * k / nfft;
            if (f > left && f < right)
                fb(m, k) = f <= center ? (f - left) / (center - left) : (right - f) / (right - center);
        }
    }
    return fb;
}

std::vector<double> fix_length(const std::vector<double>& x, std::size_t target)
{
    if (target == 0 || x.size() == target) return x;
    if (x.size() < target) {
        std::vector<double> out(target, 0.0);
        std::copy(x.begin(), x.end(), out.begin());
        return out;
    }
    const std::size_t offset = (x.size() - target) / 2;
    return {x.begin() + static_cast<std::ptrdiff_t>(offset), x.begin() + static_cast<std::ptrdiff_t>(offset + target)};
}

} // namespace

FeatureMap extract_fbank(const Waveform& waveform, const FbankConfig& config)
{
    if (waveform.sample_rate <= 0.0 || waveform.samples.empty()) throw FeatureError("empty waveform");
    if (waveform.sample_rate != config.sample_rate)
        throw FeatureError("waveform sample rate " + std::to_string(waveform.sample_rate) + " does not match " +
                           std::to_string(config.sample_rate));
    if (config.mel_bins < 1) throw FeatureError("mel_bins must be positive");
    const int win = config.window_length();
    const int hop = config.hop_length();
    if (win < 2 || hop < 1) throw FeatureError("window/hop too short for the sample rate");

    const auto target = static_cast<std::size_t>(std::lround(config.duration_s * config.sample_rate));
    const std::vector<double> x = fix_length(waveform.samples, target);
    const int frames = frame_count(x.size(), config);
    if (frames < 1) throw FeatureError("waveform shorter than one analysis window");

    int nfft = 1;
    while (nfft < win) nfft <<= 1;
    const Matrix fb = mel_filterbank(config, nfft);

    std::vector<double> window(static_cast<std::size_t>(win));
    for (int i = 0; i < win; ++i)
        window[static_cast<std::size_t>(i)] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / (win - 1));

    Eigen::FFT<double> fft;
    std::vector<double> frame(static_cast<std::size_t>(nfft), 0.0);
    std::vector<std::complex<double>> spectrum;
    Vector power(nfft / 2 + 1);
    Matrix out(frames, config.mel_bins);
    for (int t = 0; t < frames; ++t) {
        std::fill(frame.begin(), frame.end(), 0.0);
        for (int i = 0; i < win; ++i)
            frame[static_cast<std::size_t>(i)] =
                x[static_cast<std::size_t>(t) * static_cast<std::size_t>(hop) + static_cast<std::size_t>(i)] *
                window[static_cast<std::size_t>(i)];
        fft.fwd(spectrum, frame);
        for (int k = 0; k <= nfft / 2; ++k) power(k) = std::norm(spectrum[static_cast<std::size_t>(k)]);
        out.row(t) = (fb * power).transpose();
    }
    out = out.cwiseMax(config.log_floor).array().log();

    if (config.normalize) {
        const double mean = out.mean();
        const double var = (out.array() - mean).square().mean();
        if (var > 1e-12) out = (out.array() - mean) / std::sqrt(var);
    }
    return {std::move(out), config.fingerprint()};
}

namespace {

template <typename T>
T read_le(std::istream& in)
{
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw FeatureError("truncated WAV header");
    return v;
}

template <typename T>
void write_le(std::ostream& out, T v)
{
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

} // namespace

Waveform read_wav(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FeatureError("cannot open audio file " + path.string());
    char tag[4];
    in.read(tag, 4);
    if (!in || std::memcmp(tag, "RIFF", 4) != 0) throw FeatureError(path.string() + ": not a RIFF file");
    read_le<std::uint32_t>(in);
    in.read(tag, 4);
    if (!in || std::memcmp(tag, "WAVE", 4) != 0) throw FeatureError(path.string() + ": not a WAVE file");

    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    bool have_fmt = false;
    while (in.read(tag, 4)) {
        const auto size = read_le<std::uint32_t>(in);
        if (std::memcmp(tag, "fmt ", 4) == 0) {
            format = read_le<std::uint16_t>(in);
            channels = read_le<std::uint16_t>(in);
            rate = read_le<std::uint32_t>(in);
            read_le<std::uint32_t>(in);
            read_le<std::uint16_t>(in);
            bits = read_le<std::uint16_t>(in);
            in.seekg(size - 16 + (size & 1), std::ios::cur);
            have_fmt = true;
        } else if (std::memcmp(tag, "data", 4) == 0) {
            if (!have_fmt) throw FeatureError(path.string() + ": data chunk before fmt chunk");
            if (channels != 1) throw FeatureError(path.string() + ": only mono audio is supported");
            Waveform w;
            w.sample_rate = rate;
            if (format == 1 && bits == 16) {
                std::vector<std::int16_t> raw(size / 2);
                in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 2));
                for (auto s : raw) w.samples.push_back(s / 32768.0);
            } else if (format == 3 && bits == 32) {
                std::vector<float> raw(size / 4);
                in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
                w.samples.assign(raw.begin(), raw.end());
            } else {
                throw FeatureError(path.string() + ": unsupported sample format");
            }
            if (!in) throw FeatureError(path.string() + ": truncated data chunk");
            return w;
        } else {
            in.seekg(size + (size & 1), std::ios::cur);
        }
    }
    throw FeatureError(path.string() + ": no data chunk");
}

void write_wav(const std::filesystem::path& path, const Waveform& w)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FeatureError("cannot write " + path.string());
    const auto n = static_cast<std::uint32_t>(w.samples.size());
    const auto rate = static_cast<std::uint32_t>(w.sample_rate);
    out.write("RIFF", 4);
    write_le<std::uint32_t>(out, 36 + n * 2);
    out.write("WAVEfmt ", 8);
    write_le<std::uint32_t>(out, 16);
    write_le<std::uint16_t>(out, 1);
    write_le<std::uint16_t>(out, 1);
    write_le<std::uint32_t>(out, rate);
    write_le<std::uint32_t>(out, rate * 2);
    write_le<std::uint16_t>(out, 2);
    write_le<std::uint16_t>(out, 16);
    out.write("data", 4);
    write_le<std::uint32_t>(out, n * 2);
    for (double s : w.samples)
        write_le<std::int16_t>(out, static_cast<std::int16_t>(std::lround(std::clamp(s, -1.0, 32767.0 / 32768.0) * 32768.0)));
}

void SyntheticSpec::validate() const
{
    if (n_classes < 1 || dim < 1 || samples_per_class < 1)
        throw ConfigError("synthetic spec needs positive class count, dim and samples per class");
    if (!(within_std >= 0.0) || !(between_std >= 0.0)) throw ConfigError("synthetic spreads must be nonnegative");
}

SyntheticDataset generate_synthetic(const SyntheticSpec& spec)
{
    spec.validate();
    Rng rng(spec.seed);
    SyntheticDataset ds;
    ds.class_means = random_normal(spec.n_classes, spec.dim, spec.between_std, rng);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (int c = 0; c < spec.n_classes; ++c)
        for (int s = 0; s < spec.samples_per_class; ++s) {
            RowVector v = ds.class_means.row(c);
            if (spec.within_std > 0.0)
                for (Eigen::Index j = 0; j < v.size(); ++j) v(j) += spec.within_std * noise(rng);
            ds.samples.push_back({std::move(v), c});
        }
    return ds;
}

void FeatureStore::add(const std::string& ref, FeatureMap map)
{
    if (maps_.empty() && fingerprint_.empty()) fingerprint_ = map.fingerprint;
    if (map.fingerprint != fingerprint_)
        throw FeatureError("feature fingerprint mismatch for '" + ref + "': " + map.fingerprint + " vs " + fingerprint_);
    if (!map.values.allFinite()) throw FeatureError("non-finite features for '" + ref + "'");
    maps_[ref] = std::move(map.values);
}

const Matrix& FeatureStore::at(const std::string& ref) const
{
    auto it = maps_.find(ref);
    if (it == maps_.end()) throw FeatureError("no features for sample '" + ref + "'");
    return it->second;
}

std::filesystem::path FeatureCache::path_for(const std::string& ref, const std::string& fingerprint) const
{
    return root_ / fingerprint / (Digest().text(ref).hex() + ".fbank");
}

namespace {
constexpr char kCacheMagic[8] = {'F', 'C', 'A', 'C', 'F', 'M', '1', '\0'};
}

std::optional<FeatureMap> FeatureCache::load(const std::string& ref, const std::string& fingerprint) const
{
    std::ifstream in(path_for(ref, fingerprint), std::ios::binary);
    if (!in) return std::nullopt;
    char magic[8];
    std::int64_t rows = 0, cols = 0;
    in.read(magic, 8);
    in.read(reinterpret_cast<char*>(&rows), sizeof rows);
    in.read(reinterpret_cast<char*>(&cols), sizeof cols);
    if (!in || std::memcmp(magic, kCacheMagic, 8) != 0 || rows < 1 || cols < 1) return std::nullopt;
    Matrix m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
    if (!in) return std::nullopt;
    return FeatureMap{std::move(m), fingerprint};
}

void FeatureCache::store(const std::string& ref, const FeatureMap& map) const
{
    const auto path = path_for(ref, map.fingerprint);
    std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw FeatureError("cannot write cache file " + tmp.string());
        const std::int64_t rows = map.values.rows(), cols = map.values.cols();
        out.write(kCacheMagic, 8);
        out.write(reinterpret_cast<const char*>(&rows), sizeof rows);
        out.write(reinterpret_cast<const char*>(&cols), sizeof cols);
        out.write(reinterpret_cast<const char*>(map.values.data()),
                  static_cast<std::streamsize>(sizeof(double) * map.values.size()));
    }
    std::filesystem::rename(tmp, path);
}

nlohmann::json to_json(const FbankConfig& c)
{
    return {{"sample_rate", c.sample_rate}, {"window_ms", c.window_ms}, {"hop_ms", c.hop_ms},
            {"mel_bins", c.mel_bins},       {"log_floor", c.log_floor}, {"normalize", c.normalize},
            {"duration_s", c.duration_s},   {"fmin", c.fmin},           {"fmax", c.fmax}};
}

FbankConfig fbank_from_json(const nlohmann::json& j)
{
    FbankConfig c;
    c.sample_rate = j.value("sample_rate", c.sample_rate);
    c.window_ms = j.value("window_ms", c.window_ms);
    c.hop_ms = j.value("hop_ms", c.hop_ms);
    c.mel_bins = j.value("mel_bins", c.mel_bins);
    c.log_floor = j.value("log_floor", c.log_floor);
    c.normalize = j.value("normalize", c.normalize);
    c.duration_s = j.value("duration_s", c.duration_s);
    c.fmin = j.value("fmin", c.fmin);
    c.fmax = j.value("fmax", c.fmax);
    return c;
}

} // namespace fcac
