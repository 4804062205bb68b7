#include <radiant/error.hpp>
#include <radiant/parallel.hpp>
#include <radiant/steering.hpp>
#include "byteio.hpp"

#include <json.hpp>
#include <zlib.h>

#include <algorithm>

namespace radiant {

namespace {

constexpr char rdnt_magic[4] = {'R', 'D', 'N', 'T'};
constexpr int rdnt_version = 1;
constexpr double collapse_tol = 1e-4;

template <class Derived>
void round_to_float(Eigen::MatrixBase<Derived>& m)
{
    m = m.template cast<float>().template cast<double>();
}

double round_to_float(double x)
{
    return static_cast<double>(static_cast<float>(x));
}

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes)
{
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks
    constexpr std::size_t chunk = 1u << 30;
    for (std::size_t off = 0; off < bytes.size(); off += chunk) {
        const auto len = static_cast<uInt>(std::min(chunk, bytes.size() - off));
        crc = crc32(crc, bytes.data() + off, len);
    }
    return static_cast<std::uint32_t>(crc);
}

std::string loss_kind_name(LossKind k)
{
    return k == LossKind::risk_aware ? "risk_aware" : "weighted_nll";
}

LossKind loss_kind_from(const std::string& s)
{
    if (s == "risk_aware") {
        return LossKind::risk_aware;
    }
    if (s == "weighted_nll") {
        return LossKind::weighted_nll;
    }
    throw Error(ErrorCode::HeaderParse, "unknown loss_kind '" + s + "'");
}

} // namespace

void PolicyBundle::validate() const
{
    if (n_layers < 1 || n_heads < 1 || head_dim < 1 || layer < 0 || layer >= n_layers) {
        throw Error(ErrorCode::InvariantViolation, "bundle layer outside its geometry");
    }
    if (static_cast<std::int64_t>(head_probes.size()) != n_heads ||
        static_cast<std::int64_t>(head_maps.size()) != n_heads) {
        throw Error(ErrorCode::InvariantViolation, "bundle needs exactly one probe and map slot per head");
    }
    if (tau < 0 || tau > n_heads) {
        throw Error(ErrorCode::InvariantViolation, "tau outside [0, H]");
    }
    for (std::size_t h = 0; h < head_probes.size(); ++h) {
        if (head_probes[h].theta.size() != head_dim) {
            throw Error(ErrorCode::InvariantViolation, "probe dimension differs from head_dim");
        }
        const auto& m = head_maps[h];
        if (m && (m->G.rows() != head_dim || m->G.cols() != head_dim || m->g.size() != head_dim)) {
            throw Error(ErrorCode::InvariantViolation, "map dimension differs from head_dim");
        }
    }
}

bool PolicyBundle::operator==(const PolicyBundle& other) const
{
    if (n_layers != other.n_layers || n_heads != other.n_heads || head_dim != other.head_dim ||
        layer != other.layer || tau != other.tau || !(hyper == other.hyper) ||
        created_from != other.created_from || outcomes != other.outcomes ||
        head_probes.size() != other.head_probes.size() || head_maps != other.head_maps) {
        return false;
    }
    for (std::size_t h = 0; h < head_probes.size(); ++h) {
        const auto& a = head_probes[h];
        const auto& b = other.head_probes[h];
        if (a.theta != b.theta || a.bias != b.bias || a.layer != b.layer || a.head != b.head) {
            return false;
        }
    }
    return true;
}

void quantize(PolicyBundle& bundle)
{
    for (auto& p : bundle.head_probes) {
        round_to_float(p.theta);
        p.bias = round_to_float(p.bias);
    }
    for (auto& m : bundle.head_maps) {
        if (m) {
            round_to_float(m->G);
            round_to_float(m->g);
        }
    }
}

FitResult fit_maps(LayerSelection selection, const ActivationDataset& train,
                   const ActivationDataset& validation, const FitConfig& cfg)
{
    const auto layer = selection.layer;
    const auto heads = train.n_heads();
    // Solve against the probes exactly as they will be shipped.
    for (auto& probe : selection.probe.head_probes) {
        round_to_float(probe.theta);
        probe.bias = round_to_float(probe.bias);
    }
    const ProbeReport& report = selection.reports.at(static_cast<std::size_t>(layer));

    FitResult out;
    out.maps.resize(static_cast<std::size_t>(heads));
    out.solutions.resize(static_cast<std::size_t>(heads));
    std::vector<HeadOutcome> outcomes(static_cast<std::size_t>(heads));

    parallel_for(static_cast<std::size_t>(heads), cfg.workers, [&](std::size_t hi) {
        const auto h = static_cast<std::int64_t>(hi);
        HeadOutcome& outcome = outcomes[hi];
        outcome.head = h;
        const HeadProbe& probe = selection.probe.head_probes[hi];
        if (std::find(report.flagged_trivial.begin(), report.flagged_trivial.end(), h) !=
            report.flagged_trivial.end()) {
            outcome.status = "trivial_probe";
            outcome.detail = "validation FPR is 1";
            return;
        }
        const HeadSliceView slice = slice_head(train, layer, h);
        try {
            const auto moments = estimate_moments(
                slice, [&](std::int64_t i) { return probe.classify(slice.vectors.row(i).transpose()); },
                std::nullopt);

            SteeringProblem problem;
            problem.theta = probe.theta;
            problem.bias = probe.bias;
            problem.m_hat = moments.mean;
            problem.sigma_hat_sqrt = psd_sqrt<double>(moments.cov).matrix;
            problem.gamma_factor = cfg.gamma_factor;
            if (cfg.floor_cov) {
                const auto desirable = estimate_moments(
                    slice, [&](std::int64_t i) { return slice.labels[static_cast<std::size_t>(i)] == 0; },
                    0.0);
                problem.floor = psd_sqrt<double>(desirable.cov).matrix;
            }

            SteeringSolution sol = solve_steering(problem, cfg.solver);
            outcome.status = std::string(to_string(sol.status));
            if (sol.status != SolveStatus::optimal) {
                outcome.detail = "solver did not certify optimality";
                out.solutions[hi] = std::move(sol);
                return;
            }
            // A target with no spread along theta sits on the decision
            // boundary, where float rounding of the edit decides the class.
            const double spread = (sol.s_star * probe.theta).norm();
            const double scale = std::max(1.0, std::abs(probe.bias) + probe.theta.norm() * moments.mean.norm());
            if (spread < collapse_tol * scale) {
                outcome.detail = "target collapsed onto the decision boundary";
            }
            MapProvenance prov;
            prov.gamma_factor = cfg.gamma_factor;
            prov.floor_used = cfg.floor_cov;
            out.maps[hi] = construct_map(moments, sol, prov, layer, h);
            out.solutions[hi] = std::move(sol);
        } catch (const Error& e) {
            switch (e.code()) {
            case ErrorCode::EmptySelection: outcome.status = "empty_selection"; break;
            case ErrorCode::DegenerateNormal: outcome.status = "degenerate_normal"; break;
            default: outcome.status = "error"; break;
            }
            outcome.detail = e.what();
        }
    });

    PolicyBundle& b = out.bundle;
    b.n_layers = train.n_layers();
    b.n_heads = heads;
    b.head_dim = train.head_dim();
    b.layer = layer;
    b.tau = selection.probe.tau;
    b.head_probes = selection.probe.head_probes;
    for (const auto& m : out.maps) {
        b.head_maps.push_back(m ? std::optional<AffineEdit>(AffineEdit{m->G, m->g}) : std::nullopt);
    }
    b.hyper = {cfg.loss.alpha, cfg.gamma_factor, cfg.floor_cov, cfg.loss.loss_kind};
    b.created_from = fingerprint(train) + "-" + fingerprint(validation);
    b.outcomes = std::move(outcomes);
    quantize(b);
    b.validate();
    out.selection = std::move(selection);
    return out;
}

FitResult fit_policy(const ActivationDataset& train, const ActivationDataset& validation,
                     const FitConfig& cfg)
{
    if (!(cfg.gamma_factor > 0.0)) {
        throw Error(ErrorCode::InvariantViolation, "gamma_factor must be > 0");
    }
    LayerSelection selection = select_layer(train, validation, cfg.loss, cfg.quality, cfg.workers);
    return fit_maps(std::move(selection), train, validation, cfg);
}

AppliedPolicy apply_policy(const PolicyBundle& bundle, const ActivationDataset& ds, unsigned workers)
{
    bundle.validate();
    if (ds.n_layers() != bundle.n_layers || ds.n_heads() != bundle.n_heads ||
        ds.head_dim() != bundle.head_dim) {
        throw Error(ErrorCode::GeometryMismatch, "dataset geometry does not match the bundle");
    }
    const auto heads = static_cast<std::size_t>(bundle.n_heads);
    ActivationDatasetBuilder builder(ds);
    std::vector<EditTrace> traces(static_cast<std::size_t>(ds.n_samples()));

    parallel_for(traces.size(), workers, [&](std::size_t si) {
        const auto i = static_cast<std::int64_t>(si);
        EditTrace& tr = traces[si];
        tr.head_flags.resize(heads);
        int votes = 0;
        for (std::size_t h = 0; h < heads; ++h) {
            tr.head_flags[h] = bundle.head_probes[h].classify(
                ds.vector(i, bundle.layer, static_cast<std::int64_t>(h)));
            votes += tr.head_flags[h];
        }
        tr.layer_flag = votes >= bundle.tau;
        if (!tr.layer_flag) {
            return;
        }
        for (std::size_t h = 0; h < heads; ++h) {
            const auto& map = bundle.head_maps[h];
            if (!tr.head_flags[h] || !map) {
                continue;
            }
            const Vector a = ds.vector(i, bundle.layer, static_cast<std::int64_t>(h)).cast<double>();
            const Vector edited = map->G * a + map->g;
            builder.vector(i, bundle.layer, static_cast<std::int64_t>(h)) = edited.cast<float>();
            tr.heads_edited += 1;
            tr.total_magnitude += (edited - a).norm();
        }
    });
    return {std::move(builder).build(), std::move(traces)};
}

std::vector<std::uint8_t> encode_bundle(const PolicyBundle& bundle)
{
    bundle.validate();
    std::vector<std::uint8_t> payload;
    for (std::size_t h = 0; h < bundle.head_probes.size(); ++h) {
        const auto& p = bundle.head_probes[h];
        for (double v : p.theta) {
            byteio::put_f32(payload, static_cast<float>(v));
        }
        byteio::put_f32(payload, static_cast<float>(p.bias));
        if (const auto& m = bundle.head_maps[h]) {
            for (Eigen::Index r = 0; r < m->G.rows(); ++r) {
                for (Eigen::Index c = 0; c < m->G.cols(); ++c) {
                    byteio::put_f32(payload, static_cast<float>(m->G(r, c)));
                }
            }
            for (double v : m->g) {
                byteio::put_f32(payload, static_cast<float>(v));
            }
        }
    }

    nlohmann::json meta;
    meta["version"] = rdnt_version;
    meta["geometry"] = {{"n_layers", bundle.n_layers}, {"n_heads", bundle.n_heads},
                        {"head_dim", bundle.head_dim}};
    meta["layer"] = bundle.layer;
    meta["tau"] = bundle.tau;
    meta["hyper"] = {{"alpha", bundle.hyper.alpha},
                     {"gamma_factor", bundle.hyper.gamma_factor},
                     {"floor_used", bundle.hyper.floor_used},
                     {"loss_kind", loss_kind_name(bundle.hyper.loss_kind)}};
    auto& present = meta["map_present"] = nlohmann::json::array();
    for (const auto& m : bundle.head_maps) {
        present.push_back(m.has_value());
    }
    auto& outcomes = meta["outcomes"] = nlohmann::json::array();
    for (const auto& o : bundle.outcomes) {
        outcomes.push_back({{"head", o.head}, {"status", o.status}, {"detail", o.detail}});
    }
    meta["created_from"] = bundle.created_from;
    meta["payload_crc32"] = crc32_of(payload);
    const std::string header = meta.dump();

    std::vector<std::uint8_t> out;
    out.insert(out.end(), std::begin(rdnt_magic), std::end(rdnt_magic));
    byteio::put_u32(out, static_cast<std::uint32_t>(header.size()));
    out.insert(out.end(), header.begin(), header.end());
    out.insert(out.end(), payload.begin(), payload.end());
    byteio::put_u32(out, crc32_of(out));
    return out;
}

PolicyBundle decode_bundle(std::span<const std::uint8_t> bytes)
{
    if (bytes.size() < 4 || !std::equal(std::begin(rdnt_magic), std::end(rdnt_magic), bytes.begin())) {
        throw Error(ErrorCode::MagicMismatch, "missing RDNT magic");
    }
    if (bytes.size() < 12) {
        throw Error(ErrorCode::ChecksumMismatch, "bundle too short to carry a checksum");
    }
    const auto body = bytes.first(bytes.size() - 4);
    if (crc32_of(body) != byteio::get_u32(bytes.last(4))) {
        throw Error(ErrorCode::ChecksumMismatch, "trailing CRC32 does not match bundle contents");
    }
    const std::uint32_t header_len = byteio::get_u32(body.subspan(4));
    if (body.size() < 8 + static_cast<std::size_t>(header_len)) {
        throw Error(ErrorCode::HeaderParse, "header length exceeds bundle size");
    }

    PolicyBundle b;
    std::vector<bool> present;
    std::uint32_t payload_crc = 0;
    try {
        const auto* first = reinterpret_cast<const char*>(body.data() + 8);
        const auto meta = nlohmann::json::parse(first, first + header_len);
        if (meta.at("version").get<int>() != rdnt_version) {
            throw Error(ErrorCode::VersionUnsupported,
                        "bundle version " + meta.at("version").dump() + " is not supported");
        }
        if (meta.contains("layers")) {
            throw Error(ErrorCode::InvariantViolation, "multi-layer bundles are not supported");
        }
        const auto& geo = meta.at("geometry");
        b.n_layers = geo.at("n_layers").get<std::int64_t>();
        b.n_heads = geo.at("n_heads").get<std::int64_t>();
        b.head_dim = geo.at("head_dim").get<std::int64_t>();
        b.layer = meta.at("layer").get<std::int64_t>();
        b.tau = meta.at("tau").get<int>();
        const auto& hyper = meta.at("hyper");
        b.hyper.alpha = hyper.at("alpha").get<double>();
        b.hyper.gamma_factor = hyper.at("gamma_factor").get<double>();
        b.hyper.floor_used = hyper.at("floor_used").get<bool>();
        b.hyper.loss_kind = loss_kind_from(hyper.at("loss_kind").get<std::string>());
        present = meta.at("map_present").get<std::vector<bool>>();
        for (const auto& o : meta.at("outcomes")) {
            b.outcomes.push_back({o.at("head").get<std::int64_t>(), o.at("status").get<std::string>(),
                                  o.at("detail").get<std::string>()});
        }
        b.created_from = meta.at("created_from").get<std::string>();
        payload_crc = meta.at("payload_crc32").get<std::uint32_t>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::HeaderParse, e.what());
    }
    if (b.n_heads < 1 || b.head_dim < 1 || static_cast<std::int64_t>(present.size()) != b.n_heads) {
        throw Error(ErrorCode::HeaderParse, "presence flags do not match geometry");
    }

    const auto payload = body.subspan(8 + header_len);
    if (crc32_of(payload) != payload_crc) {
        throw Error(ErrorCode::ChecksumMismatch, "payload CRC32 mismatch");
    }
    const auto d = b.head_dim;
    std::size_t expected = 0;
    for (bool p : present) {
        expected += static_cast<std::size_t>((d + 1) + (p ? d * d + d : 0)) * 4;
    }
    if (payload.size() != expected) {
        throw Error(ErrorCode::SizeMismatch, "payload length does not match presence flags");
    }

    std::size_t off = 0;
    auto next = [&] {
        const float v = byteio::get_f32(payload.subspan(off));
        off += 4;
        return static_cast<double>(v);
    };
    for (std::int64_t h = 0; h < b.n_heads; ++h) {
        HeadProbe p;
        p.layer = b.layer;
        p.head = h;
        p.theta.resize(d);
        for (Eigen::Index k = 0; k < d; ++k) {
            p.theta[k] = next();
        }
        p.bias = next();
        b.head_probes.push_back(std::move(p));
        if (present[static_cast<std::size_t>(h)]) {
            AffineEdit m{Matrix(d, d), Vector(d)};
            for (Eigen::Index r = 0; r < d; ++r) {
                for (Eigen::Index c = 0; c < d; ++c) {
                    m.G(r, c) = next();
                }
            }
            for (Eigen::Index k = 0; k < d; ++k) {
                m.g[k] = next();
            }
            b.head_maps.emplace_back(std::move(m));
        } else {
            b.head_maps.emplace_back(std::nullopt);
        }
    }
    b.validate();
    return b;
}

void save_bundle(const PolicyBundle& bundle, const std::filesystem::path& path)
{
    byteio::write_file(path, encode_bundle(bundle));
}

PolicyBundle load_bundle(const std::filesystem::path& path)
{
    return decode_bundle(byteio::read_file(path));
}

} // namespace radiant
