#include "fcac/core.hpp"

#include <cstdio>

namespace fcac {

Digest& Digest::bytes(const void* data, std::size_t n)
{
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        state_ ^= p[i];
        state_ *= 0x100000001b3ull;
    }
    return *this;
}

Digest& Digest::text(std::string_view s)
{
    u64(s.size());
    return bytes(s.data(), s.size());
}

std::string Digest::hex() const
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(state_));
    return buf;
}

Matrix random_normal(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng)
{
    std::normal_distribution<double> dist(0.0, 1.0);
    Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = stddev * dist(rng);
    return m;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream)
{
    // splitmix64 finalizer over the mixed digest
    std::uint64_t z = Digest().u64(seed).text(stream).value() + 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

} // namespace fcac
