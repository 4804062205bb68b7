#pragma once
#include <radiant/error.hpp>
#include <radiant/gaussian.hpp>
#include <radiant/sdp.hpp>
#include <radiant/types.hpp>

#include <cstdint>

namespace radiant {

/// Theorem-style Gaussian transport map between covariances:
///   G = C^{-1/2} (C^{1/2} T C^{1/2})^{1/2} C^{-1/2}
/// which pushes N(m, C) to a Gaussian with covariance T.
template <class Scalar>
mat_type<Scalar> bures_map(const mat_type<Scalar>& source_cov, const mat_type<Scalar>& target_cov,
                           Scalar eig_floor = Scalar(1e-10))
{
    if (source_cov.rows() != target_cov.rows() || source_cov.cols() != target_cov.cols()) {
        throw Error(ErrorCode::DimensionMismatch, "covariances differ in size");
    }
    const mat_type<Scalar> root = psd_sqrt<Scalar>(source_cov).matrix;
    const mat_type<Scalar> inv_root = psd_inv_sqrt<Scalar>(source_cov, eig_floor).matrix;
    const mat_type<Scalar> middle = root * target_cov * root;
    const mat_type<Scalar> middle_sym = Scalar(0.5) * (middle + middle.transpose());
    return inv_root * psd_sqrt<Scalar>(middle_sym).matrix * inv_root;
}

struct MapProvenance
{
    Vector mu_star;
    Matrix s_star;
    double gamma_factor = 0.0;
    bool floor_used = false;
};

/// Affine edit a -> G a + g for one (layer, head).
struct InterventionMap
{
    Matrix G;
    Vector g;
    std::int64_t layer = 0;
    std::int64_t head = 0;
    MapProvenance provenance;

    Eigen::Index dim() const noexcept { return g.size(); }
};

/// Builds the map pushing N(moments.mean, moments.cov) onto N(mu*, (S*)^2).
InterventionMap construct_map(const GaussianMoments<double>& moments, const SteeringSolution& sol,
                              const MapProvenance& extra = {}, std::int64_t layer = 0,
                              std::int64_t head = 0, double eig_floor = 1e-10);

template <class Derived>
Vector apply_map(const InterventionMap& map, const Eigen::MatrixBase<Derived>& a)
{
    if (a.size() != map.dim()) {
        throw Error(ErrorCode::DimensionMismatch, "activation size does not match map");
    }
    return map.G * a.template cast<double>() + map.g;
}

/// ||(G - I) a + g||_2
template <class Derived>
double edit_magnitude(const InterventionMap& map, const Eigen::MatrixBase<Derived>& a)
{
    if (a.size() != map.dim()) {
        throw Error(ErrorCode::DimensionMismatch, "activation size does not match map");
    }
    const Vector x = a.template cast<double>();
    return (map.G * x - x + map.g).norm();
}

} // namespace radiant
