#pragma once
#include <radiant/tensors.hpp>
#include <radiant/types.hpp>

#include <cstdint>
#include <optional>
#include <vector>

namespace radiant {

enum class LossKind { risk_aware, weighted_nll };
enum class Quality { accuracy, risk_score };

struct RiskLossConfig
{
    double alpha = 2.5;
    LossKind loss_kind = LossKind::risk_aware;
    double learning_rate = 1.0;
    int max_iters = 2000;
    double grad_tol = 1e-6;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Headwise logistic classifier: flags `a` as undesirable iff bias + theta.a >= 0.
struct HeadProbe
{
    Vector theta;
    double bias = 0.0;
    std::int64_t layer = 0;
    std::int64_t head = 0;

    template <class Derived>
    double logit(const Eigen::MatrixBase<Derived>& a) const
    {
        return bias + theta.dot(a.template cast<double>());
    }

    template <class Derived>
    bool classify(const Eigen::MatrixBase<Derived>& a) const
    {
        return logit(a) >= 0.0;
    }
};

/// Voting aggregate of H head probes at one layer.
struct LayerProbe
{
    std::int64_t layer = 0;
    std::vector<HeadProbe> head_probes;
    int tau = 0;

    /// Number of heads flagging sample `i` of `ds` at this probe's layer.
    int votes(const ActivationDataset& ds, std::int64_t sample) const;
    bool classify(const ActivationDataset& ds, std::int64_t sample) const
    {
        return votes(ds, sample) >= tau;
    }
};

struct LossGradient
{
    Vector theta;
    double bias = 0.0;
};

/// Hard-decision error rates. A rate whose denominator class is absent is nullopt.
struct Rates
{
    std::optional<double> fpr;
    std::optional<double> fnr;
    double accuracy = 0.0;
};

Rates confusion_rates(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> labels);

struct HeadMetrics
{
    std::int64_t head = 0;
    Rates rates;
    std::optional<double> surrogate_loss;
};

struct ProbeReport
{
    std::int64_t layer = 0;
    int tau = 0;
    std::vector<HeadMetrics> per_head;
    Rates layer_rates;
    std::optional<double> mean_head_fpr;
    std::optional<double> mean_head_fnr;
    std::vector<std::int64_t> flagged_trivial;
};

double surrogate_loss(const HeadProbe& probe, const HeadSliceView& slice, const RiskLossConfig& cfg);
LossGradient loss_gradient(const HeadProbe& probe, const HeadSliceView& slice,
                           const RiskLossConfig& cfg);

/// Full-batch gradient descent with Armijo backtracking from a seeded small init.
HeadProbe train_head_probe(const HeadSliceView& slice, const RiskLossConfig& cfg);

/// tau in [0, H] minimizing validation FNR, then FPR, then preferring larger tau.
int tune_tau(const std::vector<HeadProbe>& probes, const ActivationDataset& validation,
             std::int64_t layer);

ProbeReport evaluate_probe(const LayerProbe& probe, const ActivationDataset& ds);

struct LayerSelection
{
    std::int64_t layer = 0;
    LayerProbe probe;
    std::vector<ProbeReport> reports; // one per layer, validation split
};

LayerSelection select_layer(const ActivationDataset& train, const ActivationDataset& validation,
                            const RiskLossConfig& cfg, Quality quality, unsigned workers = 1);

/// FPR + alpha * FNR; nullopt if either rate is undefined.
std::optional<double> risk_score(const Rates& rates, double alpha);

} // namespace radiant
