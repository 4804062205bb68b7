#pragma once
#include <radiant/types.hpp>

#include <cstdint>
#include <optional>
#include <string_view>

namespace radiant {

/// Moment-steering program for one head:
///
///   min  ||mu - m_hat||^2 + ||S - sigma_hat_sqrt||_F^2
///   s.t. bias + theta.mu + gamma_factor * t <= 0
///        ||S theta||_2 <= t
///        S >= floor (PSD order; floor = 0 when absent),  t >= 0
struct SteeringProblem
{
    Vector theta;
    double bias = 0.0;
    Vector m_hat;
    Matrix sigma_hat_sqrt;
    double gamma_factor = 15.0;
    std::optional<Matrix> floor;

    Eigen::Index dim() const noexcept { return theta.size(); }
    /// Throws DimensionMismatch, InvariantViolation (gamma_factor <= 0) or DegenerateNormal (theta = 0).
    void validate() const;
};

struct SolverOptions
{
    double feas_tol = 1e-7;
    double kkt_tol = 1e-6;
    double gap_tol = 1e-9;      // relative to max(1, objective)
    int max_iter = 500;         // total Newton steps
    double barrier_growth = 10.0;
};

enum class SolveStatus { optimal, infeasible, max_iter, numerical };
std::string_view to_string(SolveStatus s) noexcept;

struct KktReport
{
    double primal_residual = 0.0;
    double stationarity_residual = 0.0;
    double complementarity_residual = 0.0;
    double duality_gap_bound = 0.0;
};

struct SteeringSolution
{
    Vector mu_star;
    Matrix s_star;
    double t_star = 0.0;
    double objective = 0.0;
    SolveStatus status = SolveStatus::numerical;
    KktReport kkt;
    int iterations = 0;
    /// Multiplier of the chance constraint (zero when it is slack).
    double chance_multiplier = 0.0;
};

/// bias + theta.mu + gamma_factor * ||S theta||_2
double chance_constraint_lhs(const SteeringProblem& p, const Vector& mu, const Matrix& s);

/// Objective of the steering program at (mu, S).
double steering_objective(const SteeringProblem& p, const Vector& mu, const Matrix& s);

/// Primal barrier interior-point solve. Each Newton system is reduced, in the
/// eigenbasis of (S - floor), to a dense (2d + 1) system, so a step costs O(d^3).
SteeringSolution solve_steering(const SteeringProblem& p, const SolverOptions& opts = {});

struct CertReport
{
    std::int64_t samples = 0;
    double empirical_coverage = 0.0; // fraction classified 0
    double ci_low = 0.0;             // Wilson 99% interval
    double ci_high = 0.0;
    double target = 0.0;             // 1 - gamma
    double gamma = 0.0;
    double slack = 0.0;              // 99% binomial half-width at the target
    bool coverage_saturated = false; // gamma_factor above the resolvable range
    bool pass = false;
};

/// Monte Carlo check that N(mu*, S*^2) lands in {bias + theta.a < 0} with
/// probability at least 1 - gamma, gamma = 1 - Phi(gamma_factor).
CertReport certify(const SteeringProblem& p, const SteeringSolution& sol, std::int64_t mc_samples,
                   std::uint64_t seed = 0);

} // namespace radiant
