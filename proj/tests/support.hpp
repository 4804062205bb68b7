#pragma once
// Shared fixtures for the unit tests and the acceptance runner.
#include <radiant/gaussian.hpp>
#include <radiant/sdp.hpp>
#include <radiant/steering.hpp>
#include <radiant/tensors.hpp>
#include <radiant/types.hpp>

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

namespace support {

using radiant::Matrix;
using radiant::Vector;

inline Vector random_vector(std::mt19937_64& rng, Eigen::Index d, double scale = 1.0)
{
    std::normal_distribution<double> n(0.0, scale);
    Vector v(d);
    for (auto& x : v) {
        x = n(rng);
    }
    return v;
}

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols)
{
    std::normal_distribution<double> n;
    Matrix m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c) {
        for (Eigen::Index r = 0; r < rows; ++r) {
            m(r, c) = n(rng);
        }
    }
    return m;
}

/// Well-conditioned SPD matrix: W W^T / d + shift I.
inline Matrix random_spd(std::mt19937_64& rng, Eigen::Index d, double shift = 0.1)
{
    const Matrix w = random_matrix(rng, d, d);
    return w * w.transpose() / static_cast<double>(d) + shift * Matrix::Identity(d, d);
}

/// Steering problem whose sample mean violates the chance constraint.
inline radiant::SteeringProblem random_problem(std::mt19937_64& rng, Eigen::Index d, double gamma_factor,
                                               bool with_floor)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    radiant::SteeringProblem p;
    p.theta = random_vector(rng, d);
    p.m_hat = random_vector(rng, d);
    p.sigma_hat_sqrt = radiant::psd_sqrt<double>(random_spd(rng, d)).matrix;
    p.gamma_factor = gamma_factor;
    // m_hat sits 0..3 units (along theta) on the undesirable side of the boundary
    p.bias = -p.theta.dot(p.m_hat) + 3.0 * u(rng) * p.theta.norm();
    if (with_floor) {
        p.floor = radiant::psd_sqrt<double>(Matrix(0.25 * random_spd(rng, d, 0.05))).matrix;
    }
    return p;
}

/// Random labeled dataset with both classes present.
inline radiant::ActivationDataset random_dataset(std::mt19937_64& rng, std::int64_t n, std::int64_t layers,
                                                 std::int64_t heads, std::int64_t dim)
{
    radiant::DatasetHeader h;
    h.n_samples = n;
    h.n_layers = layers;
    h.n_heads = heads;
    h.head_dim = dim;
    std::normal_distribution<float> normal;
    std::vector<float> values(h.value_count());
    for (auto& v : values) {
        v = normal(rng);
    }
    std::vector<std::uint8_t> labels(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        labels[i] = static_cast<std::uint8_t>(i % 2);
    }
    std::shuffle(labels.begin(), labels.end(), rng);
    return {h, std::move(values), std::move(labels)};
}

/// Bundle with random geometry, parameters and map presence. Values are
/// float-representable, as every bundle coming out of fit_maps is.
inline radiant::PolicyBundle random_bundle(std::mt19937_64& rng)
{
    std::uniform_int_distribution<std::int64_t> small(1, 4), dim(1, 6);
    std::bernoulli_distribution coin(0.5);
    radiant::PolicyBundle b;
    b.n_layers = small(rng);
    b.n_heads = small(rng);
    b.head_dim = dim(rng);
    b.layer = std::uniform_int_distribution<std::int64_t>(0, b.n_layers - 1)(rng);
    b.tau = static_cast<int>(std::uniform_int_distribution<std::int64_t>(0, b.n_heads)(rng));
    b.hyper.alpha = std::uniform_real_distribution<double>(0.5, 3.0)(rng);
    b.hyper.gamma_factor = std::uniform_real_distribution<double>(0.5, 20.0)(rng);
    b.hyper.floor_used = coin(rng);
    b.hyper.loss_kind = coin(rng) ? radiant::LossKind::risk_aware : radiant::LossKind::weighted_nll;
    b.created_from = std::to_string(rng());
    for (std::int64_t h = 0; h < b.n_heads; ++h) {
        radiant::HeadProbe p;
        p.theta = random_vector(rng, b.head_dim);
        p.bias = random_vector(rng, 1)[0];
        p.layer = b.layer;
        p.head = h;
        b.head_probes.push_back(p);
        if (coin(rng)) {
            b.head_maps.emplace_back(radiant::AffineEdit{random_matrix(rng, b.head_dim, b.head_dim),
                                                         random_vector(rng, b.head_dim)});
            b.outcomes.push_back({h, "optimal", ""});
        } else {
            b.head_maps.emplace_back(std::nullopt);
            b.outcomes.push_back({h, "empty_selection", "selector matched no sample"});
        }
    }
    radiant::quantize(b);
    return b;
}

/// Bitwise CRC-32 (IEEE, reflected), independent of zlib.
inline std::uint32_t crc32(const std::uint8_t* data, std::size_t n)
{
    std::uint32_t crc = 0xFFFFFFFFu;
    for (std::size_t i = 0; i < n; ++i) {
        crc ^= data[i];
        for (int k = 0; k < 8; ++k) {
            crc = (crc >> 1) ^ (0xEDB88320u & (0u - (crc & 1u)));
        }
    }
    return ~crc;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir
{
public:
    explicit TempDir(const std::string& tag)
    {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("radiant-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline double rel_frobenius(const Matrix& a, const Matrix& b)
{
    return (a - b).norm() / std::max(1e-300, b.norm());
}

} // namespace support
