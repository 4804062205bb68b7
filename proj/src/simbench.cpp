#include <radiant/error.hpp>
#include <radiant/gaussian.hpp>
#include <radiant/normal.hpp>
#include <radiant/parallel.hpp>
#include <radiant/simbench.hpp>
#include "json_io.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

namespace radiant {

namespace {

std::uint64_t splitmix(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

struct HeadPopulation
{
    Vector mean0;
    Vector mean1;
    Matrix chol; // lower factor of the shared covariance
};

HeadPopulation make_population(const SynthSpec& spec, std::int64_t layer, std::int64_t head,
                               bool informative)
{
    const auto d = spec.head_dim;
    std::mt19937_64 rng(splitmix(spec.seed ^ splitmix(static_cast<std::uint64_t>(layer * spec.n_heads + head))));
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> spread(0.5, 1.5);

    Matrix z(d, d);
    for (Eigen::Index c = 0; c < d; ++c) {
        for (Eigen::Index r = 0; r < d; ++r) {
            z(r, c) = normal(rng);
        }
    }
    const Matrix q = Eigen::HouseholderQR<Matrix>(z).householderQ();
    Vector eig(d);
    for (Eigen::Index k = 0; k < d; ++k) {
        eig[k] = spec.noise_cov_scale * spread(rng);
    }
    Matrix cov = q * eig.asDiagonal() * q.transpose();
    cov = 0.5 * (cov + cov.transpose());

    HeadPopulation pop;
    pop.mean0.resize(d);
    for (Eigen::Index k = 0; k < d; ++k) {
        pop.mean0[k] = normal(rng);
    }
    pop.mean1 = pop.mean0;
    if (informative && spec.separation > 0.0) {
        Vector u(d);
        for (Eigen::Index k = 0; k < d; ++k) {
            u[k] = normal(rng);
        }
        u.normalize();
        const Matrix root = q * eig.cwiseSqrt().asDiagonal() * q.transpose();
        pop.mean1 += spec.separation * (root * u);
    }
    pop.chol = Eigen::LLT<Matrix>(cov).matrixL();
    return pop;
}

} // namespace

void SynthSpec::validate() const
{
    auto bad = [](const std::string& what) { throw Error(ErrorCode::BadSpec, what); };
    if (n_samples < 1) bad("n_samples must be >= 1");
    if (n_layers < 1) bad("n_layers must be >= 1");
    if (n_heads < 1) bad("n_heads must be >= 1");
    if (head_dim < 1) bad("head_dim must be >= 1");
    if (!(class_balance > 0.0 && class_balance < 1.0)) bad("class_balance must lie in (0, 1)");
    if (!(separation >= 0.0) || !std::isfinite(separation)) bad("separation must be finite and >= 0");
    if (!(noise_cov_scale > 0.0) || !std::isfinite(noise_cov_scale)) bad("noise_cov_scale must be > 0");
    std::set<std::pair<std::int64_t, std::int64_t>> seen;
    for (const auto& [l, h] : informative_heads) {
        if (l < 0 || l >= n_layers || h < 0 || h >= n_heads) {
            bad("informative head (" + std::to_string(l) + ", " + std::to_string(h) + ") outside geometry");
        }
        if (!seen.insert({l, h}).second) {
            bad("informative head listed twice");
        }
    }
}

std::vector<std::pair<std::int64_t, std::int64_t>> SynthSpec::resolved_informative() const
{
    if (!informative_heads.empty()) {
        return informative_heads;
    }
    std::vector<std::pair<std::int64_t, std::int64_t>> out;
    for (std::int64_t h = 0; h < n_heads; ++h) {
        out.emplace_back(n_layers / 2, h);
    }
    return out;
}

ActivationDataset generate(const SynthSpec& spec)
{
    spec.validate();
    const auto informative = spec.resolved_informative();
    std::vector<HeadPopulation> pops;
    for (std::int64_t l = 0; l < spec.n_layers; ++l) {
        for (std::int64_t h = 0; h < spec.n_heads; ++h) {
            const bool inf = std::find(informative.begin(), informative.end(), std::pair{l, h}) !=
                             informative.end();
            pops.push_back(make_population(spec, l, h, inf));
        }
    }

    std::mt19937_64 rng(splitmix(spec.draw_seed.value_or(spec.seed) + 0x5eed));
    const auto n1 = static_cast<std::int64_t>(std::llround(spec.class_balance * static_cast<double>(spec.n_samples)));
    std::vector<std::uint8_t> labels(static_cast<std::size_t>(spec.n_samples), 0);
    std::fill_n(labels.begin(), n1, std::uint8_t{1});
    std::shuffle(labels.begin(), labels.end(), rng);

    DatasetHeader header;
    header.n_samples = spec.n_samples;
    header.n_layers = spec.n_layers;
    header.n_heads = spec.n_heads;
    header.head_dim = spec.head_dim;
    std::vector<float> values(header.value_count());

    std::normal_distribution<double> normal;
    Vector z(spec.head_dim);
    std::size_t pos = 0;
    for (std::int64_t i = 0; i < spec.n_samples; ++i) {
        for (const auto& pop : pops) {
            for (Eigen::Index k = 0; k < z.size(); ++k) {
                z[k] = normal(rng);
            }
            const Vector a = (labels[static_cast<std::size_t>(i)] ? pop.mean1 : pop.mean0) + pop.chol * z;
            for (Eigen::Index k = 0; k < a.size(); ++k) {
                values[pos++] = static_cast<float>(a[k]);
            }
        }
    }
    return ActivationDataset(header, std::move(values), std::move(labels));
}

EvalReport evaluate_pipeline(const PolicyBundle& bundle, const ActivationDataset& ds, unsigned workers)
{
    AppliedPolicy applied = apply_policy(bundle, ds, workers);
    const LayerProbe probe = bundle.layer_probe();

    EvalReport rep;
    rep.probe = evaluate_probe(probe, ds);

    std::int64_t positives = 0, pre = 0, post = 0;
    for (std::int64_t i = 0; i < ds.n_samples(); ++i) {
        if (ds.labels()[static_cast<std::size_t>(i)] != 1) {
            continue;
        }
        ++positives;
        pre += !probe.classify(ds, i);
        post += !probe.classify(applied.edited, i);
    }
    if (positives > 0) {
        rep.pre_edit_desirable_rate = static_cast<double>(pre) / static_cast<double>(positives);
        rep.post_edit_desirable_rate = static_cast<double>(post) / static_cast<double>(positives);
    }

    double magnitude = 0.0;
    for (const auto& tr : applied.traces) {
        rep.samples_edited += tr.heads_edited > 0;
        rep.head_edits += tr.heads_edited;
        magnitude += tr.total_magnitude;
    }
    if (rep.head_edits > 0) {
        rep.mean_edit_magnitude = magnitude / static_cast<double>(rep.head_edits);
    }

    const auto heads = static_cast<std::size_t>(bundle.n_heads);
    std::vector<std::optional<double>> phis(heads);
    parallel_for(heads, workers, [&](std::size_t h) {
        if (!bundle.head_maps[h]) {
            return;
        }
        std::vector<std::int64_t> rows;
        for (std::size_t i = 0; i < applied.traces.size(); ++i) {
            const auto& tr = applied.traces[i];
            if (tr.layer_flag && tr.head_flags[h]) {
                rows.push_back(static_cast<std::int64_t>(i));
            }
        }
        if (rows.size() < 2) {
            return;
        }
        const auto d = bundle.head_dim;
        Matrix before(static_cast<Eigen::Index>(rows.size()), d);
        Matrix after(static_cast<Eigen::Index>(rows.size()), d);
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const auto hi = static_cast<std::int64_t>(h);
            before.row(static_cast<Eigen::Index>(r)) = ds.vector(rows[r], bundle.layer, hi).cast<double>().transpose();
            after.row(static_cast<Eigen::Index>(r)) =
                applied.edited.vector(rows[r], bundle.layer, hi).cast<double>().transpose();
        }
        PsdTolerances loose;
        loose.negativity = 1e-8;
        const auto p = sample_moments(before, 0.0);
        const auto q = sample_moments(after, 0.0);
        const Matrix diff = psd_sqrt<double>(p.cov, loose).matrix - psd_sqrt<double>(q.cov, loose).matrix;
        phis[h] = (p.mean - q.mean).squaredNorm() + diff.squaredNorm();
    });
    int counted = 0;
    for (const auto& v : phis) {
        if (v) {
            rep.mean_phi += *v;
            ++counted;
        }
    }
    if (counted > 0) {
        rep.mean_phi /= counted;
    }

    const double gamma = tolerance_from_gamma_factor(bundle.hyper.gamma_factor);
    rep.target_coverage = 1.0 - gamma;
    if (rep.post_edit_desirable_rate) {
        const double slack = 2.5758293035489004 * std::sqrt(gamma * (1.0 - gamma) / static_cast<double>(positives));
        rep.coverage_pass = *rep.post_edit_desirable_rate >= rep.target_coverage - slack;
    }
    return rep;
}

GridResult grid_search(const ActivationDataset& train, const ActivationDataset& validation,
                       const std::vector<double>& alpha_grid, const std::vector<double>& gamma_grid,
                       const FitConfig& cfg)
{
    if (alpha_grid.empty() || gamma_grid.empty()) {
        throw Error(ErrorCode::InvariantViolation, "grids must be nonempty");
    }
    std::vector<LayerSelection> selections(alpha_grid.size());
    parallel_for(alpha_grid.size(), cfg.workers, [&](std::size_t a) {
        RiskLossConfig loss = cfg.loss;
        loss.alpha = alpha_grid[a];
        selections[a] = select_layer(train, validation, loss, cfg.quality, 1);
    });

    GridResult out;
    out.points.resize(alpha_grid.size() * gamma_grid.size());
    parallel_for(out.points.size(), cfg.workers, [&](std::size_t idx) {
        const std::size_t a = idx / gamma_grid.size();
        const std::size_t g = idx % gamma_grid.size();
        FitConfig point_cfg = cfg;
        point_cfg.loss.alpha = alpha_grid[a];
        point_cfg.gamma_factor = gamma_grid[g];
        point_cfg.workers = 1;
        const FitResult fit = fit_maps(selections[a], train, validation, point_cfg);

        GridPoint& pt = out.points[idx];
        pt.alpha = alpha_grid[a];
        pt.gamma_factor = gamma_grid[g];
        pt.layer = fit.bundle.layer;
        pt.tau = fit.bundle.tau;
        pt.maps_fitted = std::count_if(fit.bundle.head_maps.begin(), fit.bundle.head_maps.end(),
                                       [](const auto& m) { return m.has_value(); });
        const auto& trivial = selections[a].reports.at(static_cast<std::size_t>(pt.layer)).flagged_trivial;
        pt.excluded = static_cast<std::int64_t>(trivial.size()) * 2 > fit.bundle.n_heads;
        pt.report = evaluate_pipeline(fit.bundle, validation, 1);
    });

    for (std::size_t i = 0; i < out.points.size(); ++i) {
        const auto& pt = out.points[i];
        if (pt.excluded || !pt.report.post_edit_desirable_rate) {
            continue;
        }
        if (!out.selected) {
            out.selected = i;
            continue;
        }
        const auto& best = out.points[*out.selected].report;
        const double rate = *pt.report.post_edit_desirable_rate;
        const double best_rate = *best.post_edit_desirable_rate;
        if (rate > best_rate || (rate == best_rate && pt.report.mean_edit_magnitude < best.mean_edit_magnitude)) {
            out.selected = i;
        }
    }
    return out;
}

namespace jsonio {

nlohmann::json rates(const Rates& r)
{
    return {{"fpr", optional_value(r.fpr)}, {"fnr", optional_value(r.fnr)}, {"acc", r.accuracy}};
}

nlohmann::json probe_report(const ProbeReport& r)
{
    nlohmann::json heads = nlohmann::json::array();
    for (const auto& h : r.per_head) {
        heads.push_back({{"head", h.head},
                         {"fpr", optional_value(h.rates.fpr)},
                         {"fnr", optional_value(h.rates.fnr)},
                         {"acc", h.rates.accuracy}});
    }
    return {{"layer", r.layer},
            {"tau", r.tau},
            {"per_head", heads},
            {"layer_fpr", optional_value(r.layer_rates.fpr)},
            {"layer_fnr", optional_value(r.layer_rates.fnr)},
            {"layer_acc", r.layer_rates.accuracy},
            {"mean_head_fpr", optional_value(r.mean_head_fpr)},
            {"mean_head_fnr", optional_value(r.mean_head_fnr)},
            {"flagged_trivial", r.flagged_trivial}};
}

nlohmann::json eval_report(const EvalReport& r)
{
    return {{"probe", probe_report(r.probe)},
            {"pre_edit_desirable_rate", optional_value(r.pre_edit_desirable_rate)},
            {"post_edit_desirable_rate", optional_value(r.post_edit_desirable_rate)},
            {"mean_edit_magnitude", r.mean_edit_magnitude},
            {"mean_phi", r.mean_phi},
            {"samples_edited", r.samples_edited},
            {"head_edits", r.head_edits},
            {"target_coverage", r.target_coverage},
            {"coverage_pass", r.coverage_pass}};
}

nlohmann::json grid_result(const GridResult& g)
{
    nlohmann::json points = nlohmann::json::array();
    for (const auto& p : g.points) {
        points.push_back({{"alpha", p.alpha},
                          {"gamma_factor", p.gamma_factor},
                          {"layer", p.layer},
                          {"tau", p.tau},
                          {"maps_fitted", p.maps_fitted},
                          {"excluded", p.excluded},
                          {"report", eval_report(p.report)}});
    }
    nlohmann::json selected = nullptr;
    if (g.selected) {
        const auto& p = g.points[*g.selected];
        selected = {{"index", *g.selected}, {"alpha", p.alpha}, {"gamma_factor", p.gamma_factor}};
    }
    return {{"points", points}, {"selected", selected}};
}

nlohmann::json bundle_summary(const PolicyBundle& b)
{
    nlohmann::json heads = nlohmann::json::array();
    for (std::size_t h = 0; h < b.head_maps.size(); ++h) {
        nlohmann::json entry = {{"head", h}, {"map", b.head_maps[h].has_value()}};
        for (const auto& o : b.outcomes) {
            if (o.head == static_cast<std::int64_t>(h)) {
                entry["status"] = o.status;
                entry["detail"] = o.detail;
            }
        }
        heads.push_back(entry);
    }
    return {{"layer", b.layer},
            {"tau", b.tau},
            {"alpha", b.hyper.alpha},
            {"gamma_factor", b.hyper.gamma_factor},
            {"floor_used", b.hyper.floor_used},
            {"loss_kind", b.hyper.loss_kind == LossKind::risk_aware ? "risk_aware" : "weighted_nll"},
            {"created_from", b.created_from},
            {"heads", heads}};
}

} // namespace jsonio

std::string to_json(const ProbeReport& report)
{
    return jsonio::probe_report(report).dump(2);
}

std::string to_json(const EvalReport& report)
{
    return jsonio::eval_report(report).dump(2);
}

std::string to_json(const GridResult& result)
{
    return jsonio::grid_result(result).dump(2);
}

std::string to_csv(const GridResult& result)
{
    auto num = [](double x) { return nlohmann::json(x).dump(); };
    std::ostringstream out;
    out << "alpha,gamma_factor,layer,tau,maps_fitted,excluded,pre_edit_desirable_rate,"
           "post_edit_desirable_rate,mean_edit_magnitude,mean_phi,coverage_pass,selected\n";
    for (std::size_t i = 0; i < result.points.size(); ++i) {
        const auto& p = result.points[i];
        const auto& r = p.report;
        out << num(p.alpha) << ',' << num(p.gamma_factor) << ',' << p.layer << ',' << p.tau << ','
            << p.maps_fitted << ',' << p.excluded << ','
            << (r.pre_edit_desirable_rate ? num(*r.pre_edit_desirable_rate) : "") << ','
            << (r.post_edit_desirable_rate ? num(*r.post_edit_desirable_rate) : "") << ','
            << num(r.mean_edit_magnitude) << ',' << num(r.mean_phi) << ',' << r.coverage_pass << ','
            << (result.selected == i) << '\n';
    }
    return out.str();
}

} // namespace radiant
