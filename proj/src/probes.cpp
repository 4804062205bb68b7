#include <radiant/error.hpp>
#include <radiant/parallel.hpp>
#include <radiant/probes.hpp>

#include <cmath>
#include <limits>
#include <random>

namespace radiant {

namespace {

double sigmoid(double z)
{
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
double softplus(double z)
{
    return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

struct ClassCounts
{
    std::int64_t negatives = 0;
    std::int64_t positives = 0;
};

ClassCounts require_both_classes(std::span<const std::uint8_t> labels)
{
    ClassCounts c;
    for (auto y : labels) {
        (y ? c.positives : c.negatives) += 1;
    }
    if (c.negatives == 0 || c.positives == 0) {
        throw Error(ErrorCode::EmptyClass, "need at least one sample of each class (N0=" +
                                               std::to_string(c.negatives) +
                                               ", N1=" + std::to_string(c.positives) + ")");
    }
    return c;
}

/// Loss and per-sample dloss/dz on a dense double copy of a slice.
class HeadObjective
{
public:
    HeadObjective(const HeadSliceView& slice, const RiskLossConfig& cfg)
        : x_(slice.vectors.cast<double>()), labels_(slice.labels), cfg_(cfg),
          counts_(require_both_classes(slice.labels))
    {}

    double value(const Vector& theta, double bias) const
    {
        const Vector z = (x_ * theta).array() + bias;
        const double inv_n0 = 1.0 / static_cast<double>(counts_.negatives);
        const double inv_n1 = 1.0 / static_cast<double>(counts_.positives);
        double fp = 0.0;
        double fn = 0.0;
        for (Eigen::Index i = 0; i < z.size(); ++i) {
            if (cfg_.loss_kind == LossKind::risk_aware) {
                if (labels_[i]) {
                    fn += sigmoid(-z[i]);
                } else {
                    fp += sigmoid(z[i]);
                }
            } else {
                // -log p = softplus(-z), -log(1-p) = softplus(z)
                if (labels_[i]) {
                    fn += softplus(-z[i]);
                } else {
                    fp += softplus(z[i]);
                }
            }
        }
        return inv_n0 * fp + cfg_.alpha * inv_n1 * fn;
    }

    LossGradient gradient(const Vector& theta, double bias) const
    {
        const Vector z = (x_ * theta).array() + bias;
        const double w0 = 1.0 / static_cast<double>(counts_.negatives);
        const double w1 = cfg_.alpha / static_cast<double>(counts_.positives);
        Vector dz(z.size());
        for (Eigen::Index i = 0; i < z.size(); ++i) {
            const double p = sigmoid(z[i]);
            if (cfg_.loss_kind == LossKind::risk_aware) {
                const double dp = p * (1.0 - p);
                dz[i] = labels_[i] ? -w1 * dp : w0 * dp;
            } else {
                dz[i] = labels_[i] ? -w1 * (1.0 - p) : w0 * p;
            }
        }
        return {x_.transpose() * dz, dz.sum()};
    }

    Eigen::Index dim() const { return x_.cols(); }

private:
    Matrix x_;
    std::span<const std::uint8_t> labels_;
    RiskLossConfig cfg_;
    ClassCounts counts_;
};

std::uint64_t mix_seed(std::uint64_t seed, std::int64_t layer, std::int64_t head)
{
    // splitmix64 finalizer over the combined key
    std::uint64_t z = seed ^ (static_cast<std::uint64_t>(layer) * 0x9e3779b97f4a7c15ULL) ^
                      (static_cast<std::uint64_t>(head) * 0xbf58476d1ce4e5b9ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

void check_layer_geometry(const std::vector<HeadProbe>& probes, const ActivationDataset& ds,
                          std::int64_t layer)
{
    if (layer < 0 || layer >= ds.n_layers() ||
        static_cast<std::int64_t>(probes.size()) != ds.n_heads()) {
        throw Error(ErrorCode::GeometryMismatch, "probe set does not match dataset geometry");
    }
    for (const auto& p : probes) {
        if (p.theta.size() != ds.head_dim()) {
            throw Error(ErrorCode::GeometryMismatch, "probe dimension does not match head_dim");
        }
    }
}

// votes[i] = number of heads flagging sample i
std::vector<int> count_votes(const std::vector<HeadProbe>& probes, const ActivationDataset& ds,
                             std::int64_t layer)
{
    std::vector<int> votes(static_cast<std::size_t>(ds.n_samples()), 0);
    for (std::size_t h = 0; h < probes.size(); ++h) {
        for (std::int64_t i = 0; i < ds.n_samples(); ++i) {
            votes[static_cast<std::size_t>(i)] +=
                probes[h].classify(ds.vector(i, layer, static_cast<std::int64_t>(h)));
        }
    }
    return votes;
}

} // namespace

void RiskLossConfig::validate() const
{
    if (!(alpha > 0.0) || !(learning_rate > 0.0) || max_iters < 1 || !(grad_tol > 0.0)) {
        throw Error(ErrorCode::InvariantViolation,
                    "loss config requires alpha > 0, learning_rate > 0, max_iters >= 1, grad_tol > 0");
    }
}

int LayerProbe::votes(const ActivationDataset& ds, std::int64_t sample) const
{
    int v = 0;
    for (std::size_t h = 0; h < head_probes.size(); ++h) {
        v += head_probes[h].classify(ds.vector(sample, layer, static_cast<std::int64_t>(h)));
    }
    return v;
}

Rates confusion_rates(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> labels)
{
    std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i]) {
            (predicted[i] ? tp : fn) += 1;
        } else {
            (predicted[i] ? fp : tn) += 1;
        }
    }
    Rates r;
    if (fp + tn > 0) {
        r.fpr = static_cast<double>(fp) / static_cast<double>(fp + tn);
    }
    if (fn + tp > 0) {
        r.fnr = static_cast<double>(fn) / static_cast<double>(fn + tp);
    }
    r.accuracy = labels.empty() ? 0.0
                                : static_cast<double>(tp + tn) / static_cast<double>(labels.size());
    return r;
}

std::optional<double> risk_score(const Rates& rates, double alpha)
{
    if (!rates.fpr || !rates.fnr) {
        return std::nullopt;
    }
    return *rates.fpr + alpha * *rates.fnr;
}

double surrogate_loss(const HeadProbe& probe, const HeadSliceView& slice, const RiskLossConfig& cfg)
{
    if (probe.theta.size() != slice.dim()) {
        throw Error(ErrorCode::DimensionMismatch, "probe and slice dimensions differ");
    }
    return HeadObjective(slice, cfg).value(probe.theta, probe.bias);
}

LossGradient loss_gradient(const HeadProbe& probe, const HeadSliceView& slice,
                           const RiskLossConfig& cfg)
{
    if (probe.theta.size() != slice.dim()) {
        throw Error(ErrorCode::DimensionMismatch, "probe and slice dimensions differ");
    }
    return HeadObjective(slice, cfg).gradient(probe.theta, probe.bias);
}

HeadProbe train_head_probe(const HeadSliceView& slice, const RiskLossConfig& cfg)
{
    cfg.validate();
    const HeadObjective objective(slice, cfg);

    std::mt19937_64 rng(mix_seed(cfg.seed, slice.layer, slice.head));
    std::uniform_real_distribution<double> init(-1e-2, 1e-2);
    HeadProbe probe;
    probe.layer = slice.layer;
    probe.head = slice.head;
    probe.theta.resize(objective.dim());
    for (Eigen::Index k = 0; k < probe.theta.size(); ++k) {
        probe.theta[k] = init(rng);
    }
    probe.bias = init(rng);

    double loss = objective.value(probe.theta, probe.bias);
    for (int iter = 0; iter < cfg.max_iters; ++iter) {
        if (!std::isfinite(loss)) {
            throw Error(ErrorCode::Diverged, "loss became non-finite at iteration " + std::to_string(iter));
        }
        const LossGradient g = objective.gradient(probe.theta, probe.bias);
        const double gmax = std::max(g.theta.cwiseAbs().maxCoeff(), std::abs(g.bias));
        if (gmax <= cfg.grad_tol) {
            break;
        }
        const double gnorm2 = g.theta.squaredNorm() + g.bias * g.bias;
        double step = cfg.learning_rate;
        bool accepted = false;
        for (int halving = 0; halving < 50; ++halving, step *= 0.5) {
            Vector theta = probe.theta - step * g.theta;
            const double bias = probe.bias - step * g.bias;
            const double trial = objective.value(theta, bias);
            if (trial <= loss - 1e-4 * step * gnorm2) {
                probe.theta = std::move(theta);
                probe.bias = bias;
                loss = trial;
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            break; // no descent possible at double precision
        }
    }
    if (!std::isfinite(loss) || !probe.theta.allFinite() || !std::isfinite(probe.bias)) {
        throw Error(ErrorCode::Diverged, "training produced non-finite parameters");
    }
    return probe;
}

int tune_tau(const std::vector<HeadProbe>& probes, const ActivationDataset& validation,
             std::int64_t layer)
{
    if (probes.empty()) {
        throw Error(ErrorCode::InvariantViolation, "tune_tau needs at least one head probe");
    }
    check_layer_geometry(probes, validation, layer);
    require_both_classes(validation.labels());

    const auto votes = count_votes(probes, validation, layer);
    const int heads = static_cast<int>(probes.size());
    int best_tau = 0;
    double best_fnr = std::numeric_limits<double>::infinity();
    double best_fpr = std::numeric_limits<double>::infinity();
    std::vector<std::uint8_t> predicted(votes.size());
    for (int tau = 0; tau <= heads; ++tau) {
        for (std::size_t i = 0; i < votes.size(); ++i) {
            predicted[i] = votes[i] >= tau;
        }
        const Rates r = confusion_rates(predicted, validation.labels());
        // ties on both rates resolve toward the later (larger) tau
        if (*r.fnr < best_fnr || (*r.fnr == best_fnr && *r.fpr <= best_fpr)) {
            best_tau = tau;
            best_fnr = *r.fnr;
            best_fpr = *r.fpr;
        }
    }
    return best_tau;
}

ProbeReport evaluate_probe(const LayerProbe& probe, const ActivationDataset& ds)
{
    check_layer_geometry(probe.head_probes, ds, probe.layer);
    ProbeReport report;
    report.layer = probe.layer;
    report.tau = probe.tau;

    const auto n = static_cast<std::size_t>(ds.n_samples());
    std::vector<std::uint8_t> predicted(n);
    double fpr_sum = 0.0, fnr_sum = 0.0;
    bool fpr_defined = true, fnr_defined = true;
    for (std::size_t h = 0; h < probe.head_probes.size(); ++h) {
        for (std::size_t i = 0; i < n; ++i) {
            predicted[i] = probe.head_probes[h].classify(
                ds.vector(static_cast<std::int64_t>(i), probe.layer, static_cast<std::int64_t>(h)));
        }
        HeadMetrics m;
        m.head = static_cast<std::int64_t>(h);
        m.rates = confusion_rates(predicted, ds.labels());
        if (m.rates.fpr) {
            fpr_sum += *m.rates.fpr;
            if (*m.rates.fpr == 1.0) {
                report.flagged_trivial.push_back(m.head);
            }
        } else {
            fpr_defined = false;
        }
        if (m.rates.fnr) {
            fnr_sum += *m.rates.fnr;
        } else {
            fnr_defined = false;
        }
        report.per_head.push_back(std::move(m));
    }
    const double heads = static_cast<double>(probe.head_probes.size());
    if (fpr_defined) {
        report.mean_head_fpr = fpr_sum / heads;
    }
    if (fnr_defined) {
        report.mean_head_fnr = fnr_sum / heads;
    }

    const auto votes = count_votes(probe.head_probes, ds, probe.layer);
    for (std::size_t i = 0; i < n; ++i) {
        predicted[i] = votes[i] >= probe.tau;
    }
    report.layer_rates = confusion_rates(predicted, ds.labels());
    return report;
}

LayerSelection select_layer(const ActivationDataset& train, const ActivationDataset& validation,
                            const RiskLossConfig& cfg, Quality quality, unsigned workers)
{
    cfg.validate();
    if (!train.header().same_geometry(validation.header())) {
        throw Error(ErrorCode::GeometryMismatch, "train and validation geometry differ");
    }
    require_both_classes(train.labels());
    require_both_classes(validation.labels());

    const auto layers = train.n_layers();
    const auto heads = train.n_heads();
    std::vector<HeadProbe> probes(static_cast<std::size_t>(layers * heads));
    parallel_for(probes.size(), workers, [&](std::size_t k) {
        const auto layer = static_cast<std::int64_t>(k) / heads;
        const auto head = static_cast<std::int64_t>(k) % heads;
        probes[k] = train_head_probe(slice_head(train, layer, head), cfg);
    });

    LayerSelection out;
    std::vector<LayerProbe> layer_probes(static_cast<std::size_t>(layers));
    out.reports.resize(static_cast<std::size_t>(layers));
    parallel_for(layer_probes.size(), workers, [&](std::size_t l) {
        LayerProbe& lp = layer_probes[l];
        lp.layer = static_cast<std::int64_t>(l);
        lp.head_probes.assign(probes.begin() + static_cast<std::ptrdiff_t>(l * heads),
                              probes.begin() + static_cast<std::ptrdiff_t>((l + 1) * heads));
        lp.tau = tune_tau(lp.head_probes, validation, lp.layer);
        ProbeReport report = evaluate_probe(lp, validation);
        for (auto& m : report.per_head) {
            m.surrogate_loss = surrogate_loss(lp.head_probes[static_cast<std::size_t>(m.head)],
                                              slice_head(validation, lp.layer, m.head), cfg);
        }
        out.reports[l] = std::move(report);
    });

    std::optional<std::size_t> best;
    double best_score = 0.0;
    for (std::size_t l = 0; l < layer_probes.size(); ++l) {
        const ProbeReport& r = out.reports[l];
        if (static_cast<std::int64_t>(r.flagged_trivial.size()) == heads) {
            continue; // every head votes "undesirable" on all desirable samples
        }
        // lower is better for both after negating accuracy
        const double score = quality == Quality::accuracy ? -r.layer_rates.accuracy
                                                          : *risk_score(r.layer_rates, cfg.alpha);
        if (!best || score < best_score) {
            best = l;
            best_score = score;
        }
    }
    if (!best) {
        throw Error(ErrorCode::NoViableLayer, "every layer's head probes are trivial (validation FPR = 1)");
    }
    out.layer = static_cast<std::int64_t>(*best);
    out.probe = std::move(layer_probes[*best]);
    return out;
}

} // namespace radiant
