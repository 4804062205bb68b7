// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fails.
#include <radiant/cli.hpp>
#include <radiant/error.hpp>
#include <radiant/intervention.hpp>
#include <radiant/normal.hpp>
#include <radiant/probes.hpp>
#include <radiant/sdp.hpp>
#include <radiant/simbench.hpp>
#include <radiant/steering.hpp>
#include <radiant/tensors.hpp>

#include "oracles.hpp"
#include "support.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

using namespace radiant;

namespace {

struct Outcome
{
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// ---------------------------------------------------------------- criterion 1
Outcome coverage_guarantee()
{
    const int dims[] = {2, 8, 32};
    const double gammas[] = {1.2816, 2.326};
    int passed = 0, solved = 0;
    double worst_margin = 1.0;
    for (int k = 0; k < 50; ++k) {
        std::mt19937_64 rng(1000 + k);
        const auto p = support::random_problem(rng, dims[k % 3], gammas[(k / 3) % 2], k % 2 == 1);
        const auto sol = solve_steering(p);
        if (sol.status != SolveStatus::optimal) {
            continue;
        }
        ++solved;
        const auto rep = certify(p, sol, 100000, 7000 + k);
        passed += rep.pass;
        worst_margin = std::min(worst_margin, rep.empirical_coverage - (rep.target - rep.slack));
    }
    return {passed == 50, fmt("%d/50 solved, %d/50 within 99%% slack of 1-gamma, worst margin %.4f", solved,
                              passed, worst_margin)};
}

// ---------------------------------------------------------------- criterion 2
Outcome scalar_oracle()
{
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-2, 2), pos(0.05, 2), gam(0.3, 5);
    double worst = 0.0;
    int optimal = 0;
    for (int k = 0; k < 100; ++k) {
        const double theta = u(rng), m = u(rng), b = pos(rng), g = gam(rng), bias = 2 * u(rng);
        const double floor = k % 2 ? 0.5 * pos(rng) : 0.0;
        SteeringProblem p;
        p.theta = Vector::Constant(1, theta);
        p.bias = bias;
        p.m_hat = Vector::Constant(1, m);
        p.sigma_hat_sqrt = Matrix::Constant(1, 1, b);
        p.gamma_factor = g;
        if (k % 2) {
            p.floor = Matrix::Constant(1, 1, floor);
        }
        const auto sol = solve_steering(p);
        optimal += sol.status == SolveStatus::optimal;
        worst = std::max(worst, std::abs(sol.objective - oracle::scalar_objective(theta, bias, m, b, g, floor)));
    }
    return {optimal == 100 && worst <= 1e-6, fmt("100 instances (half floored), %d optimal, max |diff| %.2e", optimal, worst)};
}

// ---------------------------------------------------------------- criterion 3
Outcome small_d_oracle()
{
    double worst = 0.0;
    int optimal = 0, total = 0;
    for (int d : {2, 3, 4}) {
        for (int k = 0; k < 25; ++k) {
            std::mt19937_64 rng(300 + 100 * d + k);
            const auto p = support::random_problem(rng, d, k % 2 ? 2.326 : 1.2816, k % 3 == 0);
            const auto sol = solve_steering(p);
            optimal += sol.status == SolveStatus::optimal;
            ++total;
            worst = std::max(worst, std::abs(sol.objective - oracle::dykstra(p).objective));
        }
    }
    return {optimal == total && worst <= 1e-4,
            fmt("%d instances at d in {2,3,4}, %d optimal, max |diff| vs Dykstra %.2e", total, optimal, worst)};
}

// ---------------------------------------------------------------- criterion 4
Outcome map_identities()
{
    const int n = 100000;
    double worst_cov = 0.0, worst_mean = 0.0;
    int mc_ok = 0;
    for (int k = 0; k < 100; ++k) {
        std::mt19937_64 rng(400 + k);
        const int d = 1 + k % 8;
        GaussianMoments<double> mom;
        mom.mean = support::random_vector(rng, d);
        mom.cov = support::random_spd(rng, d);
        mom.count = n;
        SteeringSolution sol;
        sol.status = SolveStatus::optimal;
        sol.mu_star = support::random_vector(rng, d);
        sol.s_star = psd_sqrt<double>(support::random_spd(rng, d, 0.05)).matrix;
        const auto map = construct_map(mom, sol);
        const Matrix target = sol.s_star * sol.s_star;
        worst_cov = std::max(worst_cov, support::rel_frobenius(map.G * mom.cov * map.G.transpose(), target));
        worst_mean = std::max(worst_mean, (map.G * mom.mean + map.g - sol.mu_star).norm() /
                                              std::max(1.0, sol.mu_star.norm()));

        const Matrix chol = Eigen::LLT<Matrix>(mom.cov).matrixL();
        std::normal_distribution<double> normal;
        Matrix pushed(n, d);
        Vector z(d);
        for (int i = 0; i < n; ++i) {
            for (auto& x : z) {
                x = normal(rng);
            }
            pushed.row(i) = apply_map(map, Vector(mom.mean + chol * z)).transpose();
        }
        const auto emp = sample_moments(pushed, 0.0);
        const bool mean_ok = (emp.mean - sol.mu_star).norm() <= 4.0 * std::sqrt(target.trace() / n);
        const bool cov_ok = support::rel_frobenius(emp.cov, target) <= 0.02;
        mc_ok += mean_ok && cov_ok;
    }
    return {worst_cov <= 1e-6 && worst_mean <= 1e-8 && mc_ok == 100,
            fmt("max rel cov err %.2e, max mean err %.2e, Monte Carlo moments ok %d/100", worst_cov, worst_mean,
                mc_ok)};
}

// ---------------------------------------------------------------- criterion 5
Outcome gradient_check()
{
    double worst = 0.0;
    for (auto kind : {LossKind::risk_aware, LossKind::weighted_nll}) {
        for (int k = 0; k < 50; ++k) {
            std::mt19937_64 rng(500 + k);
            const int d = 1 + k % 6;
            const auto ds = support::random_dataset(rng, 40 + k, 1, 1, d);
            const auto s = slice_head(ds, 0, 0);
            RiskLossConfig cfg;
            cfg.loss_kind = kind;
            cfg.alpha = 1.0 + 0.03 * k;
            HeadProbe p;
            p.theta = support::random_vector(rng, d, 0.7);
            p.bias = support::random_vector(rng, 1)[0];
            const auto g = loss_gradient(p, s, cfg);
            Vector analytic(d + 1), numeric(d + 1);
            analytic << g.theta, g.bias;
            const double h = 1e-5;
            for (int j = 0; j <= d; ++j) {
                HeadProbe up = p, down = p;
                (j < d ? up.theta[j] : up.bias) += h;
                (j < d ? down.theta[j] : down.bias) -= h;
                numeric[j] = (surrogate_loss(up, s, cfg) - surrogate_loss(down, s, cfg)) / (2 * h);
            }
            worst = std::max(worst, (analytic - numeric).cwiseAbs().maxCoeff() /
                                        std::max(analytic.cwiseAbs().maxCoeff(), 1e-12));
        }
    }
    return {worst <= 1e-5, fmt("100 points (50 per loss kind), max rel err %.2e", worst)};
}

// Fixed benchmark shared by criteria 6 to 8.
struct Benchmark
{
    ActivationDataset train, val, test;
    std::int64_t informative_layer = 0;
};

Benchmark benchmark(double separation, std::int64_t n)
{
    SynthSpec spec;
    spec.n_samples = n;
    spec.n_layers = 4;
    spec.n_heads = 4;
    spec.head_dim = 8;
    spec.separation = separation;
    spec.seed = 2024;
    Benchmark b;
    b.train = generate(spec);
    spec.draw_seed = 2025;
    b.val = generate(spec);
    spec.draw_seed = 2026;
    b.test = generate(spec);
    b.informative_layer = spec.n_layers / 2;
    return b;
}

// ---------------------------------------------------------------- criterion 6
Outcome alpha_monotonicity()
{
    const auto b = benchmark(1.5, 2000);
    std::vector<double> fnr, head_fnr;
    std::string trace;
    for (double alpha : default_alpha_grid) {
        RiskLossConfig cfg;
        cfg.alpha = alpha;
        std::vector<HeadProbe> probes;
        for (std::int64_t h = 0; h < b.train.n_heads(); ++h) {
            probes.push_back(train_head_probe(slice_head(b.train, b.informative_layer, h), cfg));
        }
        // fixed majority vote, so the threshold search cannot absorb the effect of alpha
        const int majority = static_cast<int>((b.train.n_heads() + 1) / 2);
        const auto rep = evaluate_probe(LayerProbe{b.informative_layer, probes, majority}, b.val);
        fnr.push_back(*rep.layer_rates.fnr);
        head_fnr.push_back(*rep.mean_head_fnr);
        trace += fmt("%s%.3f", trace.empty() ? "" : ", ", fnr.back());
    }
    bool ok = true;
    for (std::size_t i = 1; i < fnr.size(); ++i) {
        ok = ok && fnr[i] <= fnr[i - 1];
    }
    return {ok, "layer FNR over alpha {1,1.5,2,2.5}: " + trace +
                    fmt(" (mean head FNR %.3f -> %.3f)", head_fnr.front(), head_fnr.back())};
}

// ---------------------------------------------------------------- criterion 7
Outcome end_to_end()
{
    const auto b = benchmark(3.0, 2000);
    FitConfig cfg;
    cfg.gamma_factor = 2.326;
    cfg.floor_cov = true;
    const auto fit = fit_policy(b.train, b.val, cfg);
    const auto rep = evaluate_pipeline(fit.bundle, b.test);

    const auto applied = apply_policy(fit.bundle, b.test);
    std::int64_t stray = 0;
    for (std::int64_t i = 0; i < b.test.n_samples(); ++i) {
        const auto& t = applied.traces[static_cast<std::size_t>(i)];
        for (std::int64_t l = 0; l < b.test.n_layers(); ++l) {
            for (std::int64_t h = 0; h < b.test.n_heads(); ++h) {
                const bool allowed = l == fit.bundle.layer && t.layer_flag &&
                                     t.head_flags[static_cast<std::size_t>(h)] &&
                                     fit.bundle.head_maps[static_cast<std::size_t>(h)].has_value();
                const auto off = b.test.offset(i, l, h);
                const bool changed =
                    std::memcmp(applied.edited.activations().data() + off, b.test.activations().data() + off,
                                static_cast<std::size_t>(b.test.head_dim()) * sizeof(float)) != 0;
                stray += changed && !allowed;
            }
        }
    }
    for (std::size_t k = 0; k < b.test.labels().size(); ++k) {
        stray += applied.edited.labels()[k] != b.test.labels()[k];
    }

    // same fit without the covariance floor, reported for reference
    cfg.floor_cov = false;
    const auto plain = evaluate_pipeline(fit_maps(fit.selection, b.train, b.val, cfg).bundle, b.test);

    const double rate = rep.post_edit_desirable_rate.value_or(0.0);
    return {rate >= 0.97 && stray == 0,
            fmt("post-edit desirable rate %.4f (floor on, layer %lld, tau %d), %lld stray byte changes; "
                "floor off gives %.4f",
                rate, static_cast<long long>(fit.bundle.layer), fit.bundle.tau, static_cast<long long>(stray),
                plain.post_edit_desirable_rate.value_or(0.0))};
}

// ---------------------------------------------------------------- criterion 8
Outcome gamma_tradeoff()
{
    const auto b = benchmark(3.0, 2000);
    FitConfig cfg;
    cfg.floor_cov = true;
    const auto selection = select_layer(b.train, b.val, cfg.loss, cfg.quality);
    double mag = -1, cov = -1;
    bool ok = true;
    std::string trace;
    for (double g : {1.28, 2.33, 3.09}) {
        cfg.gamma_factor = g;
        const auto rep = evaluate_pipeline(fit_maps(selection, b.train, b.val, cfg).bundle, b.test);
        const double rate = rep.post_edit_desirable_rate.value_or(0.0);
        ok = ok && rep.mean_edit_magnitude >= mag && rate >= cov;
        mag = rep.mean_edit_magnitude;
        cov = rate;
        trace += fmt("%sGamma %.2f: magnitude %.3f, coverage %.4f", trace.empty() ? "" : "; ", g, mag, rate);
    }
    return {ok, trace};
}

// ---------------------------------------------------------------- criterion 9
std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome scale_and_determinism()
{
    std::mt19937_64 rng(9);
    const auto p = support::random_problem(rng, 128, 15.0, true);
    const auto t0 = std::chrono::steady_clock::now();
    const auto sol = solve_steering(p);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    support::TempDir dir("accept-cli");
    auto path = [&](const char* name) { return (dir / name).string(); };
    const std::vector<std::vector<std::string>> script = {
        {"--seed", "3", "gen-synthetic", "--out", path("train.radf"), "--samples", "800", "--layers", "3",
         "--heads", "3", "--dim", "6"},
        {"--seed", "3", "gen-synthetic", "--out", path("val.radf"), "--samples", "800", "--layers", "3",
         "--heads", "3", "--dim", "6", "--draw-seed", "4"},
        {"fit", "--train", path("train.radf"), "--val", path("val.radf"), "--gamma-factor", "2.326",
         "--floor-cov", "--out", path("b.rdnt")},
        {"apply", "--bundle", path("b.rdnt"), "--in", path("val.radf"), "--out", path("edited.radf"), "--trace",
         path("trace.json")},
        {"eval", "--bundle", path("b.rdnt"), "--in", path("val.radf"), "--report", path("eval.json")},
        {"grid", "--train", path("train.radf"), "--val", path("val.radf"), "--alphas", "1,2.5",
         "--gamma-factors", "2,5", "--floor-cov", "--report", path("grid.json"), "--csv", path("grid.csv")},
    };
    const char* files[] = {"train.radf", "val.radf", "b.rdnt", "edited.radf", "trace.json",
                           "eval.json", "grid.json", "grid.csv"};
    auto run_all = [&](const std::string& workers) {
        std::vector<std::string> captured;
        for (auto args : script) {
            args.insert(args.begin(), {"--workers", workers});
            std::ostringstream out, err;
            captured.push_back(std::to_string(cli::run(args, out, err)) + out.str());
        }
        for (const char* f : files) {
            captured.push_back(slurp(dir / f));
        }
        return captured;
    };
    const auto one = run_all("1");
    const auto many = run_all("4");
    bool all_zero = true;
    for (std::size_t k = 0; k < script.size(); ++k) {
        all_zero = all_zero && one[k].front() == '0';
    }
    const bool same = one == many;
    return {sol.status == SolveStatus::optimal && secs <= 300.0 && same && all_zero,
            fmt("d=128 solve %s in %.1f s; CLI outputs and %zu files identical for 1 vs 4 workers: %s",
                std::string(to_string(sol.status)).c_str(), secs, std::size(files), same ? "yes" : "no")};
}

// --------------------------------------------------------------- criterion 10
template <class Fn>
bool throws_code(Fn&& fn, ErrorCode code)
{
    try {
        fn();
    } catch (const Error& e) {
        return e.code() == code;
    }
    return false;
}

Outcome format_round_trips()
{
    std::mt19937_64 rng(10);
    std::uniform_int_distribution<std::int64_t> small(1, 5);
    int radf_ok = 0, rdnt_ok = 0, negatives_ok = 0, negatives = 0;
    for (int k = 0; k < 200; ++k) {
        const auto ds = support::random_dataset(rng, small(rng), small(rng), small(rng), small(rng));
        const auto bytes = encode_dataset(ds);
        const auto back = decode_dataset(bytes);
        radf_ok += back == ds && encode_dataset(back) == bytes;

        auto cut = bytes;
        cut.resize(bytes.size() - 1 - static_cast<std::size_t>(k) % 3);
        negatives_ok += throws_code([&] { decode_dataset(cut); }, ErrorCode::SizeMismatch);
        auto magic = bytes;
        magic[static_cast<std::size_t>(k) % 4] ^= 0x20;
        negatives_ok += throws_code([&] { decode_dataset(magic); }, ErrorCode::MagicMismatch);
        negatives += 2;

        const auto bundle = support::random_bundle(rng);
        const auto bb = encode_bundle(bundle);
        const auto bback = decode_bundle(bb);
        rdnt_ok += bback == bundle && encode_bundle(bback) == bb;

        auto bcut = bb;
        bcut.resize(bb.size() - 1 - static_cast<std::size_t>(k) % 7);
        negatives_ok += throws_code([&] { decode_bundle(bcut); }, ErrorCode::ChecksumMismatch);
        auto flip = bb;
        flip[8 + static_cast<std::size_t>(rng() % (bb.size() - 8))] ^= 0x01;
        negatives_ok += throws_code([&] { decode_bundle(flip); }, ErrorCode::ChecksumMismatch);
        auto bmagic = bb;
        bmagic[0] = 'X';
        negatives_ok += throws_code([&] { decode_bundle(bmagic); }, ErrorCode::MagicMismatch);
        negatives += 3;
    }
    return {radf_ok == 200 && rdnt_ok == 200 && negatives_ok == negatives,
            fmt("RADF %d/200, RDNT %d/200 exact round trips; corrupted inputs rejected %d/%d", radf_ok, rdnt_ok,
                negatives_ok, negatives)};
}

} // namespace

int main()
{
    struct Criterion
    {
        const char* name;
        double budget_s;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria = {
        {"coverage guarantee", 120, coverage_guarantee},
        {"SDP at d=1 vs analytic projection", 60, scalar_oracle},
        {"SDP at d=2..4 vs Dykstra projection", 300, small_d_oracle},
        {"transport map identities", 60, map_identities},
        {"probe gradient check", 60, gradient_check},
        {"FNR non-increasing in alpha", 60, alpha_monotonicity},
        {"end-to-end steering and locality", 120, end_to_end},
        {"Gamma trade-off", 120, gamma_tradeoff},
        {"d=128 scale and CLI determinism", 600, scale_and_determinism},
        {"RADF/RDNT round trips", 60, format_round_trips},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto& c = criteria[i];
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = secs <= c.budget_s;
        const bool pass = o.pass && in_time;
        failures += !pass;
        std::printf("[%s] %2zu %s: %s [%.1f s of %.0f s]\n", pass ? "PASS" : "FAIL", i + 1, c.name,
                    o.detail.c_str(), secs, c.budget_s);
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
