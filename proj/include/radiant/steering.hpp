#pragma once
#include <radiant/intervention.hpp>
#include <radiant/probes.hpp>
#include <radiant/sdp.hpp>
#include <radiant/tensors.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace radiant {

/// G and g of one head's edit as shipped in a bundle.
struct AffineEdit
{
    Matrix G;
    Vector g;

    bool operator==(const AffineEdit&) const = default;
};

struct BundleHyper
{
    double alpha = 2.5;
    double gamma_factor = 15.0;
    bool floor_used = false;
    LossKind loss_kind = LossKind::risk_aware;

    bool operator==(const BundleHyper&) const = default;
};

/// Why a head ended up with or without a map.
struct HeadOutcome
{
    std::int64_t head = 0;
    std::string status; // "optimal", "trivial_probe", "empty_selection", "degenerate_normal", solver status...
    std::string detail;

    bool operator==(const HeadOutcome&) const = default;
};

/// Deployable single-layer policy. Parameters are held at float precision so
/// that the in-memory bundle and its RDNT encoding agree exactly.
struct PolicyBundle
{
    std::int64_t n_layers = 0;
    std::int64_t n_heads = 0;
    std::int64_t head_dim = 0;
    std::int64_t layer = 0;
    int tau = 0;
    std::vector<HeadProbe> head_probes;
    std::vector<std::optional<AffineEdit>> head_maps;
    BundleHyper hyper;
    std::string created_from;
    std::vector<HeadOutcome> outcomes;

    LayerProbe layer_probe() const { return {layer, head_probes, tau}; }
    /// Throws InvariantViolation on inconsistent sizes.
    void validate() const;

    bool operator==(const PolicyBundle& other) const;
};

/// Rounds every probe and map coefficient to the nearest float.
void quantize(PolicyBundle& bundle);

struct FitConfig
{
    RiskLossConfig loss;
    SolverOptions solver;
    double gamma_factor = 15.0;
    bool floor_cov = false;
    Quality quality = Quality::risk_score;
    unsigned workers = 1;
};

struct FitResult
{
    PolicyBundle bundle;
    LayerSelection selection;
    std::vector<std::optional<InterventionMap>> maps;          // full precision, per head
    std::vector<std::optional<SteeringSolution>> solutions;    // per head
};

/// Steering stage on an already selected layer probe: per head, moments of the
/// training samples the head flags, SDP, and the transport map.
FitResult fit_maps(LayerSelection selection, const ActivationDataset& train,
                   const ActivationDataset& validation, const FitConfig& cfg);

/// Probe training, layer selection and map synthesis end to end.
FitResult fit_policy(const ActivationDataset& train, const ActivationDataset& validation,
                     const FitConfig& cfg);

struct EditTrace
{
    bool layer_flag = false;
    std::vector<std::uint8_t> head_flags;
    int heads_edited = 0;
    double total_magnitude = 0.0;
};

struct AppliedPolicy
{
    ActivationDataset edited;
    std::vector<EditTrace> traces;
};

/// Edits head h of sample i iff its head probe and the layer vote both flag it
/// and the head has a map. Everything else is copied bit for bit.
AppliedPolicy apply_policy(const PolicyBundle& bundle, const ActivationDataset& ds,
                           unsigned workers = 1);

std::vector<std::uint8_t> encode_bundle(const PolicyBundle& bundle);
PolicyBundle decode_bundle(std::span<const std::uint8_t> bytes);
void save_bundle(const PolicyBundle& bundle, const std::filesystem::path& path);
PolicyBundle load_bundle(const std::filesystem::path& path);

} // namespace radiant
