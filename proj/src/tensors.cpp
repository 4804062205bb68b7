#include <radiant/error.hpp>
#include <radiant/tensors.hpp>
#include "byteio.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

namespace radiant {

namespace {

constexpr char radf_magic[4] = {'R', 'A', 'D', 'F'};

nlohmann::json header_to_json(const DatasetHeader& h)
{
    // Key order is fixed by nlohmann's sorted object map, so the encoding is canonical.
    return {
        {"version", h.version},     {"n_samples", h.n_samples}, {"n_layers", h.n_layers},
        {"n_heads", h.n_heads},     {"head_dim", h.head_dim},   {"dtype", h.dtype},
        {"layout", h.layout},
    };
}

DatasetHeader header_from_json(const nlohmann::json& j)
{
    DatasetHeader h;
    h.version = j.at("version").get<int>();
    h.n_samples = j.at("n_samples").get<std::int64_t>();
    h.n_layers = j.at("n_layers").get<std::int64_t>();
    h.n_heads = j.at("n_heads").get<std::int64_t>();
    h.head_dim = j.at("head_dim").get<std::int64_t>();
    h.dtype = j.at("dtype").get<std::string>();
    h.layout = j.at("layout").get<std::string>();
    return h;
}

} // namespace

void DatasetHeader::validate() const
{
    if (version != 1) {
        throw Error(ErrorCode::InvariantViolation, "dataset version must be 1");
    }
    if (n_samples < 1 || n_layers < 1 || n_heads < 1 || head_dim < 1) {
        throw Error(ErrorCode::InvariantViolation, "dataset dimensions must all be >= 1");
    }
    if (dtype != "f32le" || layout != "sample-layer-head-dim") {
        throw Error(ErrorCode::InvariantViolation, "unsupported dtype or layout");
    }
}

std::int64_t HeadSliceView::count_label(std::uint8_t y) const noexcept
{
    return std::count(labels.begin(), labels.end(), y);
}

ActivationDataset::ActivationDataset(DatasetHeader header, std::vector<float> activations,
                                     std::vector<std::uint8_t> labels)
    : header_(std::move(header)), activations_(std::move(activations)), labels_(std::move(labels))
{
    header_.validate();
    if (labels_.size() != static_cast<std::size_t>(header_.n_samples)) {
        throw Error(ErrorCode::InvariantViolation, "labels length " + std::to_string(labels_.size()) +
                                                       " != n_samples " +
                                                       std::to_string(header_.n_samples));
    }
    if (activations_.size() != header_.value_count()) {
        throw Error(ErrorCode::InvariantViolation, "activation count does not match header");
    }
    for (std::size_t i = 0; i < activations_.size(); ++i) {
        if (!std::isfinite(activations_[i])) {
            throw Error(ErrorCode::NonFiniteValue, "first non-finite value at flat index " +
                                                       std::to_string(i));
        }
    }
    for (std::size_t i = 0; i < labels_.size(); ++i) {
        if (labels_[i] > 1) {
            throw Error(ErrorCode::InvariantViolation, "label at sample " + std::to_string(i) +
                                                           " is not 0 or 1");
        }
    }
}

std::vector<std::uint8_t> encode_dataset(const ActivationDataset& ds)
{
    const std::string header = header_to_json(ds.header()).dump();
    std::vector<std::uint8_t> out;
    out.reserve(8 + header.size() + ds.header().payload_bytes() + ds.labels().size());
    out.insert(out.end(), std::begin(radf_magic), std::end(radf_magic));
    byteio::put_u32(out, static_cast<std::uint32_t>(header.size()));
    out.insert(out.end(), header.begin(), header.end());
    for (float v : ds.activations()) {
        byteio::put_f32(out, v);
    }
    out.insert(out.end(), ds.labels().begin(), ds.labels().end());
    return out;
}

ActivationDataset decode_dataset(std::span<const std::uint8_t> bytes)
{
    if (bytes.size() < 8 || !std::equal(std::begin(radf_magic), std::end(radf_magic), bytes.begin())) {
        throw Error(ErrorCode::MagicMismatch, "missing RADF magic");
    }
    const std::uint32_t header_len = byteio::get_u32(bytes.subspan(4));
    if (bytes.size() < 8 + static_cast<std::size_t>(header_len)) {
        throw Error(ErrorCode::SizeMismatch, "file shorter than declared header length");
    }
    DatasetHeader header;
    try {
        const auto* first = reinterpret_cast<const char*>(bytes.data() + 8);
        header = header_from_json(nlohmann::json::parse(first, first + header_len));
        header.validate();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::HeaderParse, e.what());
    } catch (const Error& e) {
        throw Error(ErrorCode::HeaderParse, e.what());
    }

    const std::size_t payload_begin = 8 + header_len;
    const std::size_t expected = payload_begin + header.payload_bytes() +
                                 static_cast<std::size_t>(header.n_samples);
    if (bytes.size() != expected) {
        throw Error(ErrorCode::SizeMismatch, "expected " + std::to_string(expected) + " bytes, found " +
                                                 std::to_string(bytes.size()));
    }

    std::vector<float> activations(header.value_count());
    auto payload = bytes.subspan(payload_begin, header.payload_bytes());
    for (std::size_t i = 0; i < activations.size(); ++i) {
        activations[i] = byteio::get_f32(payload.subspan(4 * i));
    }
    auto label_bytes = bytes.subspan(payload_begin + header.payload_bytes());
    std::vector<std::uint8_t> labels(label_bytes.begin(), label_bytes.end());
    return ActivationDataset(std::move(header), std::move(activations), std::move(labels));
}

ActivationDataset load_dataset(const std::filesystem::path& path)
{
    return decode_dataset(byteio::read_file(path));
}

void save_dataset(const ActivationDataset& ds, const std::filesystem::path& path)
{
    byteio::write_file(path, encode_dataset(ds));
}

HeadSliceView slice_head(const ActivationDataset& ds, std::int64_t layer, std::int64_t head)
{
    if (layer < 0 || layer >= ds.n_layers() || head < 0 || head >= ds.n_heads()) {
        throw Error(ErrorCode::IndexOutOfRange, "slice (" + std::to_string(layer) + ", " +
                                                    std::to_string(head) + ") outside geometry");
    }
    const auto stride = ds.n_layers() * ds.n_heads() * ds.head_dim();
    return HeadSliceView{
        layer,
        head,
        HeadBlock(ds.activations().data() + ds.offset(0, layer, head), ds.n_samples(), ds.head_dim(),
                  Eigen::OuterStride<>(stride)),
        ds.labels(),
    };
}

std::string fingerprint(const ActivationDataset& ds)
{
    const auto bytes = encode_dataset(ds);
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (std::uint8_t b : bytes) {
        hash ^= b;
        hash *= 0x100000001b3ULL;
    }
    std::ostringstream os;
    os << std::hex;
    os.width(16);
    os.fill('0');
    os << hash;
    return os.str();
}

} // namespace radiant
