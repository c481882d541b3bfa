#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fcac {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Matrix = MatrixX<double>;
using RowVector = RowVectorX<double>;
using Vector = Eigen::VectorXd;

using Rng = std::mt19937_64;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define FCAC_DEFINE_ERROR(Name)                 \
    class Name : public Error {                 \
    public:                                     \
        using Error::Error;                     \
    }

FCAC_DEFINE_ERROR(ProtocolError);
FCAC_DEFINE_ERROR(SamplingError);
FCAC_DEFINE_ERROR(FeatureError);
FCAC_DEFINE_ERROR(ModelError);
FCAC_DEFINE_ERROR(PrototypeError);
FCAC_DEFINE_ERROR(DrpmError);
FCAC_DEFINE_ERROR(TrainingError);
FCAC_DEFINE_ERROR(IntegrityError);
FCAC_DEFINE_ERROR(MetricError);
FCAC_DEFINE_ERROR(ConfigError);

#undef FCAC_DEFINE_ERROR

/// Whether normalization layers use batch statistics (train) or stored ones (eval).
enum class NormMode { train, eval };

/// Incremental 64-bit FNV-1a digest. Used for parameter integrity checks and
/// configuration fingerprints; not a cryptographic hash.
class Digest {
public:
    Digest& bytes(const void* data, std::size_t n);
    Digest& text(std::string_view s);
    Digest& u64(std::uint64_t v) { return bytes(&v, sizeof v); }
    Digest& f64(double v) { return bytes(&v, sizeof v); }
    template <typename Derived>
    Digest& matrix(const Eigen::MatrixBase<Derived>& m)
    {
        u64(static_cast<std::uint64_t>(m.rows()));
        u64(static_cast<std::uint64_t>(m.cols()));
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            for (Eigen::Index i = 0; i < m.rows(); ++i) f64(static_cast<double>(m(i, j)));
        return *this;
    }
    std::uint64_t value() const { return state_; }
    std::string hex() const;

private:
    std::uint64_t state_ = 0xcbf29ce484222325ull;
};

/// Standard-normal matrix scaled by `stddev`.
Matrix random_normal(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng);

/// Derives an independent child seed from a parent seed and a stream tag.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream);

} // namespace fcac
