#include <radiant/error.hpp>
#include <radiant/normal.hpp>
#include <radiant/sdp.hpp>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <utility>

namespace radiant {

std::string_view to_string(SolveStatus s) noexcept
{
    switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::max_iter: return "max_iter";
    case SolveStatus::numerical: return "numerical";
    }
    return "unknown";
}

void SteeringProblem::validate() const
{
    const auto d = theta.size();
    if (d < 1 || m_hat.size() != d || sigma_hat_sqrt.rows() != d || sigma_hat_sqrt.cols() != d ||
        (floor && (floor->rows() != d || floor->cols() != d))) {
        throw Error(ErrorCode::DimensionMismatch, "steering problem blocks have inconsistent sizes");
    }
    if (!(gamma_factor > 0.0) || !std::isfinite(gamma_factor)) {
        throw Error(ErrorCode::InvariantViolation, "gamma_factor must be finite and > 0");
    }
    if (!theta.allFinite() || !m_hat.allFinite() || !sigma_hat_sqrt.allFinite() ||
        !std::isfinite(bias) || (floor && !floor->allFinite())) {
        throw Error(ErrorCode::InvariantViolation, "steering problem has non-finite data");
    }
    if (theta.squaredNorm() == 0.0) {
        throw Error(ErrorCode::DegenerateNormal, "probe direction theta is zero");
    }
}

double chance_constraint_lhs(const SteeringProblem& p, const Vector& mu, const Matrix& s)
{
    if (mu.size() != p.dim() || s.rows() != p.dim() || s.cols() != p.dim()) {
        throw Error(ErrorCode::DimensionMismatch, "mu/S do not match theta");
    }
    return p.bias + p.theta.dot(mu) + p.gamma_factor * (s * p.theta).norm();
}

double steering_objective(const SteeringProblem& p, const Vector& mu, const Matrix& s)
{
    return (mu - p.m_hat).squaredNorm() + (s - p.sigma_hat_sqrt).squaredNorm();
}

namespace {

struct Iterate
{
    Vector mu;
    Matrix s;
    double t = 0.0;
};

struct NewtonStep
{
    Vector dmu;
    Matrix ds;
    double dt = 0.0;
    double decrement2 = 0.0;
};

Matrix sym_outer(const Vector& a, const Vector& b)
{
    return 0.5 * (a * b.transpose() + b * a.transpose());
}

/// Barrier method on the problem rescaled so that ||theta|| = 1. The feasible
/// set is unchanged by that rescaling; only t is measured in different units.
class BarrierSolver
{
public:
    BarrierSolver(const SteeringProblem& p, const SolverOptions& opts)
        : opts_(opts), d_(p.dim()), norm_(p.theta.norm()), u_(p.theta / norm_), b0_(p.bias / norm_),
          gamma_(p.gamma_factor), m_hat_(p.m_hat),
          target_(0.5 * (p.sigma_hat_sqrt + p.sigma_hat_sqrt.transpose())),
          floor_(p.floor ? Matrix(0.5 * (*p.floor + p.floor->transpose())) : Matrix::Zero(d_, d_))
    {}

    double nu() const { return static_cast<double>(d_ + 3); }

    Iterate initial_point() const
    {
        Iterate x;
        const double spread = std::max(1.0, std::sqrt(target_.squaredNorm() / static_cast<double>(d_)));
        x.s = floor_ + spread * Matrix::Identity(d_, d_);
        x.t = (x.s * u_).norm() + spread;
        const double excess = b0_ + u_.dot(m_hat_) + gamma_ * x.t;
        x.mu = m_hat_ - std::max(0.0, excess + spread) * u_;
        return x;
    }

    bool strictly_feasible(const Iterate& x) const
    {
        if (!(slack_lin(x) > 0.0) || !(x.t > 0.0) || !(x.t * x.t - (x.s * u_).squaredNorm() > 0.0)) {
            return false;
        }
        Eigen::LLT<Matrix> llt(x.s - floor_);
        return llt.info() == Eigen::Success;
    }

    double slack_lin(const Iterate& x) const { return -(b0_ + u_.dot(x.mu) + gamma_ * x.t); }

    std::optional<NewtonStep> step(const Iterate& x, double tau) const
    {
        Eigen::SelfAdjointEigenSolver<Matrix> es(x.s - floor_);
        if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() <= 0.0) {
            return std::nullopt;
        }
        const Matrix& q_basis = es.eigenvectors();
        const Vector zeta = es.eigenvalues().cwiseInverse();
        const Matrix z_inv = q_basis * zeta.asDiagonal() * q_basis.transpose();

        const Vector w = x.s * u_;
        const double q = x.t * x.t - w.squaredNorm();
        const double s = slack_lin(x);

        const Vector g_mu = 2.0 * tau * (x.mu - m_hat_) + u_ / s;
        const double g_t = gamma_ / s - 2.0 * x.t / q;
        const Matrix g_s = 2.0 * tau * (x.s - target_) + 2.0 * sym_outer(w, u_) / q - z_inv;

        // A = 2 tau I + (Z (x) Z) is diagonal in the eigenbasis of S - floor.
        const Matrix denom = (2.0 * tau + (zeta * zeta.transpose()).array()).matrix();
        auto apply_a_inv = [&](const Matrix& m) -> Matrix {
            const Matrix rotated = q_basis.transpose() * m * q_basis;
            return q_basis * rotated.cwiseQuotient(denom) * q_basis.transpose();
        };
        const Vector u_rot = q_basis.transpose() * u_;
        Matrix k_rot = (u_rot * u_rot.transpose()).cwiseQuotient(2.0 * denom);
        k_rot.diagonal() += (0.5 * denom.cwiseInverse() * u_rot.cwiseAbs2());
        const Matrix k = q_basis * k_rot * q_basis.transpose();

        const Matrix m = (2.0 / q) * Matrix::Identity(d_, d_) + (4.0 / (q * q)) * w * w.transpose();
        const Vector bvec = (-4.0 * x.t / (q * q)) * w;
        const double h_tt = 4.0 * x.t * x.t / (q * q) - 2.0 / q + gamma_ * gamma_ / (s * s);
        const double c = gamma_ / (s * s);

        const Matrix y0 = apply_a_inv(-g_s);
        const Eigen::Index n = 2 * d_ + 1;
        Matrix sys = Matrix::Zero(n, n);
        Vector rhs(n);
        sys.topLeftCorner(d_, d_) = Matrix::Identity(d_, d_) + k * m;
        sys.block(0, d_, d_, 1) = k * bvec;
        sys.block(d_, 0, 1, d_) = bvec.transpose();
        sys(d_, d_) = h_tt;
        sys.block(d_, d_ + 1, 1, d_) = c * u_.transpose();
        sys.block(d_ + 1, d_, d_, 1) = c * u_;
        sys.bottomRightCorner(d_, d_) =
            2.0 * tau * Matrix::Identity(d_, d_) + (u_ * u_.transpose()) / (s * s);
        rhs.head(d_) = y0 * u_;
        rhs[d_] = -g_t;
        rhs.tail(d_) = -g_mu;

        const Vector sol = sys.partialPivLu().solve(rhs);
        if (!sol.allFinite()) {
            return std::nullopt;
        }
        NewtonStep st;
        const Vector v = sol.head(d_);
        st.dt = sol[d_];
        st.dmu = sol.tail(d_);
        st.ds = apply_a_inv(-g_s - sym_outer(m * v + bvec * st.dt, u_));
        st.ds = (0.5 * (st.ds + st.ds.transpose())).eval();
        st.decrement2 = -(g_s.cwiseProduct(st.ds).sum() + g_t * st.dt + g_mu.dot(st.dmu));
        if (!std::isfinite(st.decrement2)) {
            return std::nullopt;
        }
        return st;
    }

    struct Certified
    {
        Iterate x;
        KktReport kkt;
        double multiplier = 0.0;
    };

    /// Takes one more Newton step from a centered iterate and reads the duals
    /// off the linearized barrier gradient at the new point. With those duals
    /// the Lagrangian gradient vanishes up to the accuracy of the Newton solve,
    /// which is far tighter than the plain central-path estimate at large tau.
    Certified certify_point(const Iterate& x, double tau) const
    {
        Certified c;
        c.x = x;
        const auto st = step(x, tau);
        Vector dmu = Vector::Zero(d_);
        Matrix ds = Matrix::Zero(d_, d_);
        double dt = 0.0;
        if (st) {
            Iterate next{x.mu + st->dmu, x.s + st->ds, x.t + st->dt};
            if (strictly_feasible(next)) {
                c.x = std::move(next);
                dmu = st->dmu;
                ds = st->ds;
                dt = st->dt;
            }
        }

        // barrier derivatives at the base point x
        Eigen::SelfAdjointEigenSolver<Matrix> es(x.s - floor_);
        const Matrix z_inv = es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() *
                             es.eigenvectors().transpose();
        const Vector w = x.s * u_;
        const Vector dw = ds * u_;
        const double q = x.t * x.t - w.squaredNorm();
        const double s = slack_lin(x);
        const double dsl = -(u_.dot(dmu) + gamma_ * dt);

        const double lambda = (1.0 / s) * (1.0 - dsl / s) / tau;
        const double wdw = w.dot(dw);
        const double z0 = (2.0 * x.t / q - (4.0 * x.t * x.t / (q * q) - 2.0 / q) * dt +
                           4.0 * x.t * wdw / (q * q)) / tau;
        const Vector z1 = (-2.0 / q * w + 4.0 * x.t / (q * q) * dt * w - (2.0 / q) * dw -
                           (4.0 * wdw / (q * q)) * w) / tau;
        Matrix y = (z_inv - z_inv * ds * z_inv) / tau;
        y = (0.5 * (y + y.transpose())).eval();

        const Iterate& xp = c.x;
        const Matrix p_next = xp.s - floor_;
        const Vector w_next = xp.s * u_;
        const Vector r_mu = 2.0 * (xp.mu - m_hat_) + lambda * u_;
        const double r_t = lambda * gamma_ - z0;
        const Matrix r_s = 2.0 * (xp.s - target_) - sym_outer(z1, u_) - y;

        Eigen::SelfAdjointEigenSolver<Matrix> es_y(y, Eigen::EigenvaluesOnly);
        const double dual_infeasibility = std::max(
            {0.0, -lambda, z1.norm() - z0, -es_y.eigenvalues().minCoeff()});
        c.kkt.stationarity_residual =
            std::sqrt(r_mu.squaredNorm() + r_t * r_t + r_s.squaredNorm()) + dual_infeasibility;
        c.kkt.complementarity_residual = std::abs(lambda * slack_lin(xp)) +
                                         std::abs(z0 * xp.t + z1.dot(w_next)) +
                                         std::abs(y.cwiseProduct(p_next).sum());
        c.kkt.duality_gap_bound = c.kkt.complementarity_residual;

        Eigen::SelfAdjointEigenSolver<Matrix> es_p(p_next, Eigen::EigenvaluesOnly);
        const double lhs = norm_ * (b0_ + u_.dot(xp.mu)) + gamma_ * norm_ * w_next.norm();
        c.kkt.primal_residual =
            std::max({0.0, lhs, w_next.norm() - xp.t, -es_p.eigenvalues().minCoeff(), -xp.t});
        c.multiplier = std::max(0.0, lambda) / norm_;

        // Second estimate: read lambda off the mu block, then let the t and S
        // blocks of the stationarity equations define the remaining duals.
        const auto rebuilt = rebuilt_duals(xp);
        if (score(rebuilt.first) < score(c.kkt)) {
            c.kkt = rebuilt.first;
            c.multiplier = rebuilt.second / norm_;
        }
        return c;
    }

    static double score(const KktReport& r)
    {
        return std::max({r.primal_residual, r.stationarity_residual, r.complementarity_residual});
    }

    std::pair<KktReport, double> rebuilt_duals(const Iterate& x) const
    {
        const double lambda = std::max(0.0, -2.0 * u_.dot(x.mu - m_hat_));
        const Vector w = x.s * u_;
        const double wn = w.norm();
        const double z0 = lambda * gamma_;
        const Vector z1 = wn > 0.0 ? Vector(-z0 * w / wn) : Vector::Zero(d_);
        Matrix y = 2.0 * (x.s - target_) - sym_outer(z1, u_);
        y = (0.5 * (y + y.transpose())).eval();

        KktReport r;
        const Vector r_mu = 2.0 * (x.mu - m_hat_) + lambda * u_;
        Eigen::SelfAdjointEigenSolver<Matrix> es_y(y, Eigen::EigenvaluesOnly);
        r.stationarity_residual = r_mu.norm() + std::max(0.0, -es_y.eigenvalues().minCoeff());
        const Matrix p_next = x.s - floor_;
        r.complementarity_residual = std::abs(lambda * slack_lin(x)) + std::abs(z0 * x.t + z1.dot(w)) +
                                     std::abs(y.cwiseProduct(p_next).sum());
        r.duality_gap_bound = r.complementarity_residual;
        Eigen::SelfAdjointEigenSolver<Matrix> es_p(p_next, Eigen::EigenvaluesOnly);
        const double lhs = norm_ * (b0_ + u_.dot(x.mu)) + gamma_ * norm_ * wn;
        r.primal_residual = std::max({0.0, lhs, wn - x.t, -es_p.eigenvalues().minCoeff(), -x.t});
        return {r, lambda};
    }

    double theta_norm() const { return norm_; }
    const Vector& direction() const { return u_; }

private:
    SolverOptions opts_;
    Eigen::Index d_;
    double norm_;
    Vector u_;
    double b0_;
    double gamma_;
    Vector m_hat_;
    Matrix target_;
    Matrix floor_;
};

} // namespace

SteeringSolution solve_steering(const SteeringProblem& p, const SolverOptions& opts)
{
    p.validate();
    const BarrierSolver solver(p, opts);

    Iterate x = solver.initial_point();
    SteeringSolution out;
    if (!solver.strictly_feasible(x)) {
        throw Error(ErrorCode::NumericalFailure, "could not construct a strictly feasible start");
    }

    double tau = std::max(1.0, solver.nu() / std::max(1.0, steering_objective(p, x.mu, x.s)));
    int iterations = 0;
    bool failed = false;
    bool converged = false;
    // Best certified centered iterate so far: the largest barrier weight whose
    // KKT residuals pass, or failing that the most recent one.
    std::optional<BarrierSolver::Certified> best;
    bool best_ok = false;
    auto residuals_ok = [&](const KktReport& r) {
        return r.primal_residual <= opts.feas_tol && r.stationarity_residual <= opts.kkt_tol &&
               r.complementarity_residual <= opts.kkt_tol;
    };
    while (iterations < opts.max_iter) {
        bool centered = false;
        double previous_dec = std::numeric_limits<double>::infinity();
        while (iterations < opts.max_iter) {
            const auto st = solver.step(x, tau);
            ++iterations;
            if (!st || st->decrement2 < -1e-12) {
                failed = true; // Hessian solve lost accuracy
                break;
            }
            const double dec = std::sqrt(std::max(0.0, st->decrement2));
            // Near the center Newton converges quadratically; once the
            // decrement stops halving it has hit the round-off floor.
            if (dec <= 1e-6 || (dec < 1e-2 && dec >= 0.5 * previous_dec)) {
                centered = true;
                break;
            }
            previous_dec = dec;
            double alpha = dec > 0.25 ? 1.0 / (1.0 + dec) : 1.0;
            Iterate trial;
            bool moved = false;
            for (int k = 0; k < 60; ++k, alpha *= 0.5) {
                trial.mu = x.mu + alpha * st->dmu;
                trial.s = x.s + alpha * st->ds;
                trial.t = x.t + alpha * st->dt;
                if (solver.strictly_feasible(trial)) {
                    moved = true;
                    break;
                }
            }
            if (!moved) {
                failed = true;
                break;
            }
            x = std::move(trial);
        }
        if (!centered) {
            break;
        }
        // On the central path the complementarity sum is exactly nu / tau.
        if (solver.nu() / tau <= opts.kkt_tol) {
            auto cert = solver.certify_point(x, tau);
            const bool ok = residuals_ok(cert.kkt);
            if (ok || !best_ok) {
                best = std::move(cert);
                best_ok = ok;
            }
        }
        const double objective = steering_objective(p, x.mu, x.s);
        if (best_ok && solver.nu() / tau <= opts.gap_tol * std::max(1.0, objective)) {
            converged = true;
            break;
        }
        tau *= opts.barrier_growth;
    }
    if (!best) {
        best = solver.certify_point(x, tau);
        best_ok = residuals_ok(best->kkt);
    }

    out.mu_star = best->x.mu;
    out.s_star = 0.5 * (best->x.s + best->x.s.transpose());
    out.t_star = best->x.t * solver.theta_norm();
    out.objective = steering_objective(p, out.mu_star, out.s_star);
    out.kkt = best->kkt;
    out.chance_multiplier = best->multiplier;
    out.iterations = iterations;
    if (best_ok && (converged || failed)) {
        out.status = SolveStatus::optimal;
    } else if (failed) {
        out.status = SolveStatus::numerical;
    } else {
        out.status = SolveStatus::max_iter;
    }
    return out;
}

CertReport certify(const SteeringProblem& p, const SteeringSolution& sol, std::int64_t mc_samples,
                   std::uint64_t seed)
{
    if (sol.status != SolveStatus::optimal) {
        throw Error(ErrorCode::NotOptimal, "certify needs an optimal solution");
    }
    if (mc_samples < 1) {
        throw Error(ErrorCode::InvariantViolation, "mc_samples must be >= 1");
    }
    p.validate();
    CertReport r;
    r.samples = mc_samples;
    r.gamma = tolerance_from_gamma_factor(p.gamma_factor);
    r.target = 1.0 - r.gamma;
    r.coverage_saturated = p.gamma_factor > coverage_saturation_gamma_factor;

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    Vector z(p.dim());
    std::int64_t desirable = 0;
    for (std::int64_t i = 0; i < mc_samples; ++i) {
        for (Eigen::Index k = 0; k < z.size(); ++k) {
            z[k] = normal(rng);
        }
        const Vector a = sol.mu_star + sol.s_star * z;
        desirable += (p.bias + p.theta.dot(a)) < 0.0;
    }

    const double n = static_cast<double>(mc_samples);
    const double phat = static_cast<double>(desirable) / n;
    constexpr double z99 = 2.5758293035489004; // two-sided 99%
    const double denom = 1.0 + z99 * z99 / n;
    const double centre = (phat + z99 * z99 / (2.0 * n)) / denom;
    const double half = z99 * std::sqrt(phat * (1.0 - phat) / n + z99 * z99 / (4.0 * n * n)) / denom;
    r.empirical_coverage = phat;
    r.ci_low = std::max(0.0, centre - half);
    r.ci_high = std::min(1.0, centre + half);
    r.slack = z99 * std::sqrt(r.gamma * (1.0 - r.gamma) / n);
    r.pass = phat >= r.target - r.slack;
    return r;
}

} // namespace radiant
