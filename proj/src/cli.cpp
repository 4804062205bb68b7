#include <radiant/cli.hpp>
#include <radiant/error.hpp>
#include <radiant/parallel.hpp>
#include <radiant/simbench.hpp>
#include <radiant/steering.hpp>
#include <radiant/tensors.hpp>
#include "json_io.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <ostream>

namespace radiant::cli {

namespace {

using nlohmann::json;

struct Globals
{
    unsigned workers = default_workers();
    std::uint64_t seed = 0;
    std::string log_level;
};

struct FitFlags
{
    std::string train, val, out;
    double alpha = 2.5;
    double gamma_factor = 15.0;
    bool floor_cov = false;
    LossKind loss = LossKind::risk_aware;
    Quality quality = Quality::risk_score;
    SolverOptions solver;
};

const std::map<std::string, LossKind> loss_names{{"risk", LossKind::risk_aware},
                                                 {"nll", LossKind::weighted_nll}};
const std::map<std::string, Quality> quality_names{{"risk", Quality::risk_score},
                                                   {"accuracy", Quality::accuracy}};

/// Flag values the parser accepts but the command rejects after parsing.
class UsageError : public std::runtime_error
{
    using std::runtime_error::runtime_error;
};

std::vector<std::pair<std::int64_t, std::int64_t>> parse_informative(const std::string& list)
{
    std::vector<std::pair<std::int64_t, std::int64_t>> out;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto colon = item.find(':');
        try {
            if (colon == std::string::npos) {
                throw std::invalid_argument(item);
            }
            std::size_t used_l = 0, used_h = 0;
            const auto l = std::stoll(item.substr(0, colon), &used_l);
            const auto h = std::stoll(item.substr(colon + 1), &used_h);
            if (used_l != colon || used_h != item.size() - colon - 1) {
                throw std::invalid_argument(item);
            }
            out.emplace_back(l, h);
        } catch (const std::logic_error&) {
            throw UsageError("--informative: expected LAYER:HEAD pairs, got '" + item + "'");
        }
    }
    return out;
}

void write_text(const std::string& path, const std::string& text)
{
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << text;
    if (!f) {
        throw Error(ErrorCode::IoFailure, "cannot write " + path);
    }
}

FitConfig fit_config(const FitFlags& f, const Globals& g)
{
    FitConfig cfg;
    cfg.loss.alpha = f.alpha;
    cfg.loss.loss_kind = f.loss;
    cfg.loss.seed = g.seed;
    cfg.gamma_factor = f.gamma_factor;
    cfg.floor_cov = f.floor_cov;
    cfg.quality = f.quality;
    cfg.solver = f.solver;
    cfg.workers = g.workers;
    return cfg;
}

void add_model_flags(CLI::App& cmd, FitFlags& f)
{
    cmd.add_option("--train", f.train, "training split (RADF)")->required()->check(CLI::ExistingFile);
    cmd.add_option("--val", f.val, "validation split (RADF)")->required()->check(CLI::ExistingFile);
    cmd.add_flag("--floor-cov", f.floor_cov, "lower-bound S by the desirable-class covariance root");
    cmd.add_option("--loss", f.loss, "probe loss")->transform(CLI::CheckedTransformer(loss_names));
    cmd.add_option("--quality", f.quality, "layer selection metric")
        ->transform(CLI::CheckedTransformer(quality_names));
    cmd.add_option("--feas-tol", f.solver.feas_tol, "SDP feasibility tolerance")->check(CLI::PositiveNumber);
    cmd.add_option("--kkt-tol", f.solver.kkt_tol, "SDP KKT residual tolerance")->check(CLI::PositiveNumber);
    cmd.add_option("--max-iter", f.solver.max_iter, "SDP Newton step budget")->check(CLI::PositiveNumber);
}

json trace_json(const std::vector<EditTrace>& traces)
{
    json arr = json::array();
    for (const auto& t : traces) {
        std::vector<int> flags(t.head_flags.begin(), t.head_flags.end());
        arr.push_back({{"layer_flag", t.layer_flag},
                       {"head_flags", flags},
                       {"heads_edited", t.heads_edited},
                       {"total_magnitude", t.total_magnitude}});
    }
    return arr;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Risk-aware activation steering: probes, moment steering and transport maps", "radiant"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--workers", g.workers, "worker threads")->check(CLI::PositiveNumber);
    app.add_option("--seed", g.seed, "RNG seed");
    app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error or off")
        ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

    SynthSpec synth;
    std::string synth_out, informative;
    std::uint64_t draw_seed = 0;
    auto* gen = app.add_subcommand("gen-synthetic", "write a seeded Gaussian activation set");
    gen->add_option("--out", synth_out, "output path")->required();
    gen->add_option("--samples", synth.n_samples, "number of samples")->check(CLI::PositiveNumber);
    gen->add_option("--layers", synth.n_layers, "number of layers")->check(CLI::PositiveNumber);
    gen->add_option("--heads", synth.n_heads, "heads per layer")->check(CLI::PositiveNumber);
    gen->add_option("--dim", synth.head_dim, "head dimension")->check(CLI::PositiveNumber);
    gen->add_option("--separation", synth.separation, "Mahalanobis distance between class means")
        ->check(CLI::NonNegativeNumber);
    gen->add_option("--balance", synth.class_balance, "fraction of undesirable samples")
        ->check(CLI::Range(0.0, 1.0));
    gen->add_option("--noise-scale", synth.noise_cov_scale, "covariance scale")->check(CLI::PositiveNumber);
    gen->add_option("--informative", informative, "LAYER:HEAD list, default all heads of layer L/2");
    auto* draw_opt = gen->add_option("--draw-seed", draw_seed, "sample seed, defaults to --seed");

    FitFlags fit;
    auto* fit_cmd = app.add_subcommand("fit", "train probes, select a layer and fit maps");
    add_model_flags(*fit_cmd, fit);
    fit_cmd->add_option("--alpha", fit.alpha, "FNR weight")->check(CLI::PositiveNumber);
    fit_cmd->add_option("--gamma-factor", fit.gamma_factor, "chance-constraint factor, > 0")
        ->check(CLI::PositiveNumber);
    fit_cmd->add_option("--out", fit.out, "bundle path")->required();

    std::string bundle_path, in_path, out_path, trace_path, report_path, csv_path;
    auto* apply_cmd = app.add_subcommand("apply", "edit a dataset with a bundle");
    apply_cmd->add_option("--bundle", bundle_path)->required();
    apply_cmd->add_option("--in", in_path)->required();
    apply_cmd->add_option("--out", out_path)->required();
    apply_cmd->add_option("--trace", trace_path, "per-sample edit trace (JSON)");

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a bundle on a labeled set");
    eval_cmd->add_option("--bundle", bundle_path)->required();
    eval_cmd->add_option("--in", in_path)->required();
    eval_cmd->add_option("--report", report_path, "EvalReport JSON path")->required();

    FitFlags grid;
    std::vector<double> alphas = default_alpha_grid, gammas = default_gamma_grid;
    auto* grid_cmd = app.add_subcommand("grid", "sweep alpha and gamma factor");
    add_model_flags(*grid_cmd, grid);
    grid_cmd->add_option("--alphas", alphas, "comma-separated alpha grid")
        ->delimiter(',')
        ->check(CLI::PositiveNumber);
    grid_cmd->add_option("--gamma-factors", gammas, "comma-separated gamma factor grid")
        ->delimiter(',')
        ->check(CLI::PositiveNumber);
    grid_cmd->add_option("--report", report_path, "grid JSON path")->required();
    grid_cmd->add_option("--csv", csv_path, "grid CSV path");

    auto usage_error = [&](const std::string& message) {
        err << "radiant: " << message << '\n';
        out << json{{"error", {{"code", "Usage"}, {"message", message}}}}.dump() << '\n';
        return usage_failure;
    };

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        err << app.help();
        return ok;
    } catch (const CLI::CallForAllHelp&) {
        err << app.help("", CLI::AppFormatMode::All);
        return ok;
    } catch (const CLI::ParseError& e) {
        return usage_error(e.what());
    }

    std::string level = g.log_level;
    if (level.empty()) {
        const char* env = std::getenv("RADIANT_LOG");
        level = env ? env : "warn";
    }
    auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
    spdlog::logger log("radiant", sink);
    log.set_pattern("[%l] %v");
    log.set_level(spdlog::level::from_str(level));

    try {
        if (gen->parsed()) {
            synth.seed = g.seed;
            if (*draw_opt) {
                synth.draw_seed = draw_seed;
            }
            synth.informative_heads = parse_informative(informative);
            ActivationDataset ds;
            try {
                ds = generate(synth);
            } catch (const Error& e) {
                if (e.code() == ErrorCode::BadSpec) {
                    throw UsageError(e.what());
                }
                throw;
            }
            save_dataset(ds, synth_out);
            log.info("wrote {} samples to {}", ds.n_samples(), synth_out);
            out << json{{"path", synth_out}, {"fingerprint", fingerprint(ds)},
                        {"n_samples", ds.n_samples()}, {"n_layers", ds.n_layers()},
                        {"n_heads", ds.n_heads()}, {"head_dim", ds.head_dim()}}
                       .dump(2)
                << '\n';
        } else if (fit_cmd->parsed()) {
            const auto train = load_dataset(fit.train);
            const auto val = load_dataset(fit.val);
            log.info("fitting alpha={} gamma_factor={} on {} workers", fit.alpha, fit.gamma_factor, g.workers);
            const FitResult res = fit_policy(train, val, fit_config(fit, g));
            for (const auto& o : res.bundle.outcomes) {
                if (o.status != "optimal") {
                    log.warn("head {} has no map: {} {}", o.head, o.status, o.detail);
                }
            }
            save_bundle(res.bundle, fit.out);
            json summary = jsonio::bundle_summary(res.bundle);
            summary["probe_report"] = jsonio::probe_report(
                res.selection.reports.at(static_cast<std::size_t>(res.bundle.layer)));
            out << summary.dump(2) << '\n';
        } else if (apply_cmd->parsed()) {
            const auto bundle = load_bundle(bundle_path);
            const auto ds = load_dataset(in_path);
            const AppliedPolicy applied = apply_policy(bundle, ds, g.workers);
            save_dataset(applied.edited, out_path);
            std::int64_t samples_edited = 0, head_edits = 0;
            for (const auto& t : applied.traces) {
                samples_edited += t.heads_edited > 0;
                head_edits += t.heads_edited;
            }
            if (!trace_path.empty()) {
                write_text(trace_path, trace_json(applied.traces).dump() + "\n");
            }
            out << json{{"path", out_path}, {"n_samples", ds.n_samples()},
                        {"samples_edited", samples_edited}, {"head_edits", head_edits}}
                       .dump(2)
                << '\n';
        } else if (eval_cmd->parsed()) {
            const auto bundle = load_bundle(bundle_path);
            const auto ds = load_dataset(in_path);
            const std::string report = to_json(evaluate_pipeline(bundle, ds, g.workers));
            write_text(report_path, report + "\n");
            out << report << '\n';
        } else if (grid_cmd->parsed()) {
            const auto train = load_dataset(grid.train);
            const auto val = load_dataset(grid.val);
            log.info("grid of {} x {} points", alphas.size(), gammas.size());
            const GridResult res = grid_search(train, val, alphas, gammas, fit_config(grid, g));
            write_text(report_path, to_json(res) + "\n");
            if (!csv_path.empty()) {
                write_text(csv_path, to_csv(res));
            }
            out << jsonio::grid_result(res)["selected"].dump(2) << '\n';
        }
    } catch (const UsageError& e) {
        return usage_error(e.what());
    } catch (const Error& e) {
        log.error("{}", e.what());
        out << json{{"error", {{"code", std::string(to_string(e.code()))}, {"message", e.what()}}}}.dump(2)
            << '\n';
        return runtime_failure;
    } catch (const std::exception& e) {
        log.error("{}", e.what());
        out << json{{"error", {{"code", "Internal"}, {"message", e.what()}}}}.dump(2) << '\n';
        return runtime_failure;
    }
    return ok;
}

} // namespace radiant::cli
