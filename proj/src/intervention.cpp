#include <radiant/intervention.hpp>

#include <Eigen/Eigenvalues>

namespace radiant {

InterventionMap construct_map(const GaussianMoments<double>& moments, const SteeringSolution& sol,
                              const MapProvenance& extra, std::int64_t layer, std::int64_t head,
                              double eig_floor)
{
    if (sol.status != SolveStatus::optimal) {
        throw Error(ErrorCode::NotOptimal, "intervention map needs an optimal steering solution");
    }
    const auto d = moments.dim();
    if (sol.mu_star.size() != d || sol.s_star.rows() != d || moments.cov.rows() != d) {
        throw Error(ErrorCode::DimensionMismatch, "moments and steering solution differ in size");
    }
    if (moments.ridge == 0.0) {
        Eigen::SelfAdjointEigenSolver<Matrix> es(moments.cov, Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < eig_floor) {
            throw Error(ErrorCode::SingularCovariance,
                        "covariance is rank-deficient and no ridge was applied");
        }
    }
    InterventionMap map;
    const Matrix target = sol.s_star * sol.s_star;
    map.G = bures_map<double>(moments.cov, 0.5 * (target + target.transpose()), eig_floor);
    map.g = sol.mu_star - map.G * moments.mean;
    map.layer = layer;
    map.head = head;
    map.provenance = extra;
    map.provenance.mu_star = sol.mu_star;
    map.provenance.s_star = sol.s_star;
    return map;
}

} // namespace radiant
