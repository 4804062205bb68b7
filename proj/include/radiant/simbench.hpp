#pragma once
#include <radiant/probes.hpp>
#include <radiant/steering.hpp>
#include <radiant/tensors.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace radiant {

/// Recipe for a labeled Gaussian activation set.
///
/// `seed` fixes the class geometry (means and covariances per head);
/// `draw_seed` fixes the samples. Splits that share `seed` but differ in
/// `draw_seed` are independent draws from the same two populations.
struct SynthSpec
{
    std::int64_t n_samples = 1000;
    std::int64_t n_layers = 4;
    std::int64_t n_heads = 4;
    std::int64_t head_dim = 8;
    double class_balance = 0.5;
    double separation = 3.0; // Mahalanobis distance between class means
    /// Empty means every head of layer n_layers / 2.
    std::vector<std::pair<std::int64_t, std::int64_t>> informative_heads;
    double noise_cov_scale = 1.0;
    std::uint64_t seed = 0;
    std::optional<std::uint64_t> draw_seed;

    /// Throws BadSpec.
    void validate() const;
    std::vector<std::pair<std::int64_t, std::int64_t>> resolved_informative() const;
};

ActivationDataset generate(const SynthSpec& spec);

struct EvalReport
{
    ProbeReport probe;                              // bundle's layer probe on the unedited set
    std::optional<double> pre_edit_desirable_rate;  // label-1 samples already predicted 0
    std::optional<double> post_edit_desirable_rate; // label-1 samples predicted 0 after the edit
    double mean_edit_magnitude = 0.0;               // over edited (sample, head) pairs
    double mean_phi = 0.0;                          // over heads with at least two edited samples
    std::int64_t samples_edited = 0;
    std::int64_t head_edits = 0;
    double target_coverage = 0.0; // 1 - gamma
    bool coverage_pass = false;
};

EvalReport evaluate_pipeline(const PolicyBundle& bundle, const ActivationDataset& ds,
                             unsigned workers = 1);

struct GridPoint
{
    double alpha = 0.0;
    double gamma_factor = 0.0;
    std::int64_t layer = 0;
    int tau = 0;
    std::int64_t maps_fitted = 0;
    bool excluded = false; // more than half the heads trivial at the selected layer
    EvalReport report;
};

struct GridResult
{
    std::vector<GridPoint> points; // alpha-major, in grid order
    std::optional<std::size_t> selected;
};

inline const std::vector<double> default_alpha_grid{1.0, 1.5, 2.0, 2.5};
inline const std::vector<double> default_gamma_grid{5.0, 7.5, 10.0, 15.0, 20.0};

/// Full sweep. Each alpha's probes are fitted once and shared across the
/// gamma grid; points are evaluated on `validation`. Selection maximizes
/// post_edit_desirable_rate, then minimizes mean_edit_magnitude, then keeps
/// grid order.
GridResult grid_search(const ActivationDataset& train, const ActivationDataset& validation,
                       const std::vector<double>& alpha_grid,
                       const std::vector<double>& gamma_grid, const FitConfig& cfg);

std::string to_json(const ProbeReport& report);
std::string to_json(const EvalReport& report);
std::string to_json(const GridResult& result);
std::string to_csv(const GridResult& result);

} // namespace radiant
