#pragma once
#include <radiant/types.hpp>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace radiant {

/// Geometry and encoding of an activation dump.
struct DatasetHeader
{
    int version = 1;
    std::int64_t n_samples = 0;
    std::int64_t n_layers = 0;
    std::int64_t n_heads = 0;
    std::int64_t head_dim = 0;
    std::string dtype = "f32le";
    std::string layout = "sample-layer-head-dim";

    std::size_t value_count() const noexcept
    {
        return static_cast<std::size_t>(n_samples * n_layers * n_heads * head_dim);
    }
    std::size_t payload_bytes() const noexcept { return value_count() * sizeof(float); }
    bool same_geometry(const DatasetHeader& other) const noexcept
    {
        return n_layers == other.n_layers && n_heads == other.n_heads && head_dim == other.head_dim;
    }

    /// Throws InvariantViolation unless the fields describe a valid v1 container.
    void validate() const;

    bool operator==(const DatasetHeader&) const = default;
};

using HeadBlock = Eigen::Map<const rowmat_type<float>, 0, Eigen::OuterStride<>>;

/// Read-only view of every sample's activation at one (layer, head).
struct HeadSliceView
{
    std::int64_t layer;
    std::int64_t head;
    HeadBlock vectors; // N x d, row i is sample i
    std::span<const std::uint8_t> labels;

    std::int64_t size() const noexcept { return vectors.rows(); }
    std::int64_t dim() const noexcept { return vectors.cols(); }
    std::int64_t count_label(std::uint8_t y) const noexcept;
};

/// Labeled activations laid out as [sample][layer][head][component].
///
/// Flat index of (i, l, h, k) is ((i*L + l)*H + h)*d + k. Values are kept as
/// float so that a save/load cycle is bit-exact.
class ActivationDataset
{
public:
    ActivationDataset() = default;
    ActivationDataset(DatasetHeader header, std::vector<float> activations,
                      std::vector<std::uint8_t> labels);

    const DatasetHeader& header() const noexcept { return header_; }
    std::int64_t n_samples() const noexcept { return header_.n_samples; }
    std::int64_t n_layers() const noexcept { return header_.n_layers; }
    std::int64_t n_heads() const noexcept { return header_.n_heads; }
    std::int64_t head_dim() const noexcept { return header_.head_dim; }

    std::span<const float> activations() const noexcept { return activations_; }
    std::span<const std::uint8_t> labels() const noexcept { return labels_; }

    std::size_t offset(std::int64_t sample, std::int64_t layer, std::int64_t head) const noexcept
    {
        return static_cast<std::size_t>(((sample * n_layers() + layer) * n_heads() + head) * head_dim());
    }

    /// Read-only view of the d-vector at (sample, layer, head).
    Eigen::Map<const vec_type<float>> vector(std::int64_t sample, std::int64_t layer,
                                            std::int64_t head) const
    {
        return {activations_.data() + offset(sample, layer, head), head_dim()};
    }

    /// Copy with the (sample, layer, head) vector replaced. Used to build edited datasets.
    friend class ActivationDatasetBuilder;

    bool operator==(const ActivationDataset&) const = default;

private:
    DatasetHeader header_;
    std::vector<float> activations_;
    std::vector<std::uint8_t> labels_;
};

/// Mutable staging area that produces a validated ActivationDataset.
class ActivationDatasetBuilder
{
public:
    explicit ActivationDatasetBuilder(const ActivationDataset& source)
        : header_(source.header_), activations_(source.activations_), labels_(source.labels_)
    {}

    Eigen::Map<vec_type<float>> vector(std::int64_t sample, std::int64_t layer, std::int64_t head)
    {
        const auto off = static_cast<std::size_t>(
            ((sample * header_.n_layers + layer) * header_.n_heads + head) * header_.head_dim);
        return {activations_.data() + off, header_.head_dim};
    }

    ActivationDataset build() &&
    {
        return ActivationDataset(header_, std::move(activations_), std::move(labels_));
    }

private:
    DatasetHeader header_;
    std::vector<float> activations_;
    std::vector<std::uint8_t> labels_;
};

ActivationDataset load_dataset(const std::filesystem::path& path);
void save_dataset(const ActivationDataset& ds, const std::filesystem::path& path);

/// In-memory RADF encoding; save_dataset writes exactly these bytes.
std::vector<std::uint8_t> encode_dataset(const ActivationDataset& ds);
ActivationDataset decode_dataset(std::span<const std::uint8_t> bytes);

HeadSliceView slice_head(const ActivationDataset& ds, std::int64_t layer, std::int64_t head);

/// FNV-1a 64 over the RADF encoding, rendered as 16 hex digits.
std::string fingerprint(const ActivationDataset& ds);

} // namespace radiant
