#pragma once
#include <radiant/error.hpp>
#include <radiant/tensors.hpp>
#include <radiant/types.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>

namespace radiant {

template <class Scalar>
struct GaussianMoments
{
    vec_type<Scalar> mean;
    mat_type<Scalar> cov;
    std::int64_t count = 0;
    Scalar ridge = 0;

    Eigen::Index dim() const noexcept { return mean.size(); }
};

enum class FactorKind { sqrt, inv_sqrt };

template <class Scalar>
struct PsdFactor
{
    mat_type<Scalar> matrix;
    FactorKind source = FactorKind::sqrt;
};

struct PsdTolerances
{
    double symmetry = 1e-9;   // relative to max |a_ij|
    double negativity = 1e-9; // relative to max(1, |lambda_max|)
};

/// Ridge applied when the sample covariance is numerically singular:
/// 1e-6 * trace / d if the smallest eigenvalue is below 1e-10, else 0.
template <class Scalar>
Scalar auto_ridge(const mat_type<Scalar>& cov)
{
    Eigen::SelfAdjointEigenSolver<mat_type<Scalar>> es(cov, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() >= Scalar(1e-10)) {
        return Scalar(0);
    }
    const Scalar scale = cov.trace() / static_cast<Scalar>(cov.rows());
    return Scalar(1e-6) * (scale > Scalar(0) ? scale : Scalar(1));
}

/// Mean and (n-1)-normalized covariance of the rows of `rows`, plus ridge * I.
/// A nullopt ridge selects auto_ridge.
template <class Derived>
GaussianMoments<typename Derived::Scalar> sample_moments(const Eigen::MatrixBase<Derived>& rows,
                                                         std::optional<double> ridge = 0.0)
{
    using Scalar = typename Derived::Scalar;
    if (rows.rows() < 1) {
        throw Error(ErrorCode::EmptySelection, "moment estimation needs at least one sample");
    }
    GaussianMoments<Scalar> m;
    m.count = rows.rows();
    m.mean = rows.colwise().mean().transpose();
    const mat_type<Scalar> centered = rows.rowwise() - m.mean.transpose();
    const Scalar denom = static_cast<Scalar>(std::max<Eigen::Index>(rows.rows() - 1, 1));
    mat_type<Scalar> cov = (centered.transpose() * centered) / denom;
    cov = (0.5 * (cov + cov.transpose())).eval();
    m.ridge = ridge ? static_cast<Scalar>(*ridge) : auto_ridge<Scalar>(cov);
    if (m.ridge < Scalar(0)) {
        throw Error(ErrorCode::InvariantViolation, "ridge must be >= 0");
    }
    cov.diagonal().array() += m.ridge;
    m.cov = std::move(cov);
    return m;
}

/// Moments of the slice vectors whose sample index satisfies `selector`.
GaussianMoments<double> estimate_moments(const HeadSliceView& slice,
                                         const std::function<bool(std::int64_t)>& selector,
                                         std::optional<double> ridge = 0.0);

namespace detail {

template <class Scalar>
Eigen::SelfAdjointEigenSolver<mat_type<Scalar>> checked_eigen(const mat_type<Scalar>& a,
                                                            const PsdTolerances& tol)
{
    if (a.rows() != a.cols()) {
        throw Error(ErrorCode::DimensionMismatch, "matrix is not square");
    }
    const Scalar scale = std::max(Scalar(1), a.cwiseAbs().maxCoeff());
    if ((a - a.transpose()).cwiseAbs().maxCoeff() > static_cast<Scalar>(tol.symmetry) * scale) {
        throw Error(ErrorCode::NotSymmetric, "matrix asymmetry exceeds tolerance");
    }
    const mat_type<Scalar> sym = Scalar(0.5) * (a + a.transpose());
    return Eigen::SelfAdjointEigenSolver<mat_type<Scalar>>(sym);
}

template <class Scalar, class F>
mat_type<Scalar> spectral_apply(const Eigen::SelfAdjointEigenSolver<mat_type<Scalar>>& es, F&& f)
{
    const auto& v = es.eigenvectors();
    const vec_type<Scalar> mapped = es.eigenvalues().unaryExpr(f);
    mat_type<Scalar> out = v * mapped.asDiagonal() * v.transpose();
    return Scalar(0.5) * (out + out.transpose());
}

} // namespace detail

/// Symmetric PSD square root through a symmetric eigendecomposition.
/// Slightly negative eigenvalues (within tolerance) are clamped to zero.
template <class Scalar>
PsdFactor<Scalar> psd_sqrt(const mat_type<Scalar>& a, const PsdTolerances& tol = {})
{
    const auto es = detail::checked_eigen<Scalar>(a, tol);
    const Scalar lmax = es.eigenvalues().cwiseAbs().maxCoeff();
    if (es.eigenvalues().minCoeff() < -static_cast<Scalar>(tol.negativity) * std::max(Scalar(1), lmax)) {
        throw Error(ErrorCode::IndefiniteBeyondTolerance, "matrix has a negative eigenvalue");
    }
    return {detail::spectral_apply<Scalar>(es, [](Scalar x) { return std::sqrt(std::max(x, Scalar(0))); }),
            FactorKind::sqrt};
}

/// A^{-1/2} with eigenvalues below `eig_floor` raised to the floor first.
template <class Scalar>
PsdFactor<Scalar> psd_inv_sqrt(const mat_type<Scalar>& a, Scalar eig_floor = Scalar(1e-10),
                               const PsdTolerances& tol = {})
{
    if (!(eig_floor > Scalar(0))) {
        throw Error(ErrorCode::InvariantViolation, "eig_floor must be > 0");
    }
    const auto es = detail::checked_eigen<Scalar>(a, tol);
    return {detail::spectral_apply<Scalar>(
                es, [eig_floor](Scalar x) { return Scalar(1) / std::sqrt(std::max(x, eig_floor)); }),
            FactorKind::inv_sqrt};
}

/// ||mu_p - mu_q||^2 + ||cov_p^{1/2} - cov_q^{1/2}||_F^2
template <class Scalar>
Scalar phi_divergence(const GaussianMoments<Scalar>& p, const GaussianMoments<Scalar>& q)
{
    if (p.dim() != q.dim() || p.cov.rows() != q.cov.rows()) {
        throw Error(ErrorCode::DimensionMismatch, "moment dimensions differ");
    }
    const mat_type<Scalar> diff = psd_sqrt<Scalar>(p.cov).matrix - psd_sqrt<Scalar>(q.cov).matrix;
    return (p.mean - q.mean).squaredNorm() + diff.squaredNorm();
}

} // namespace radiant
