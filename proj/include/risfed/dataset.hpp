#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "risfed/channel.hpp"
#include "risfed/core.hpp"
#include "risfed/io.hpp"
#include "risfed/rng.hpp"
#include "risfed/topology.hpp"

namespace risfed {

constexpr int kCsiChannels = 9;

struct SampleMeta {
    uint32_t ue = 0;
    float pos[3] = {0, 0, 0};
    float p_tx_dbm = 0;
    uint32_t serving_ap = 0;
    uint32_t serving_ris = 0;
    uint32_t phase_id = 0;
};

// 9-plane input tensor, stored plane-major: planes 0-2 are the normalised
// real part, imaginary part and magnitude of the effective channel
// (antennas x RBs); planes 3-8 are constant metadata planes.
struct CsiSample {
    std::vector<float> tensor;
    uint8_t label = 0;  // 0 legitimate, 1 eavesdropper
    SampleMeta meta;
};

struct NormStats {
    std::array<float, kCsiChannels> mean{};
    std::array<float, kCsiChannels> stddev{};
};

enum class SplitTag : uint8_t { Full = 0, Train = 1, Test = 2 };

struct Dataset {
    int n_ant = 0;
    int n_rb = 0;
    SplitTag tag = SplitTag::Full;
    NormStats stats;
    std::vector<CsiSample> samples;

    size_t plane_values() const { return static_cast<size_t>(n_ant) * n_rb; }
    size_t tensor_values() const { return plane_values() * kCsiChannels; }
    std::array<int64_t, 2> class_counts() const {
        std::array<int64_t, 2> c{0, 0};
        for (const auto& s : samples) c[s.label ? 1 : 0]++;
        return c;
    }
};

// Per-sample max-abs normalisation of the three CSI planes; an all-zero
// channel maps to all-zero planes.
inline std::vector<float> build_csi_image(const CMat& h_eff) {
    size_t n = h_eff.v.size();
    std::vector<float> planes(3 * n, 0.0f);
    double scale = 0.0;
    for (const cplx& z : h_eff.v) scale = std::max(scale, std::abs(z));
    if (scale == 0.0) return planes;
    for (size_t i = 0; i < n; ++i) {
        const cplx& z = h_eff.v[i];
        planes[i] = static_cast<float>(z.real() / scale);
        planes[n + i] = static_cast<float>(z.imag() / scale);
        planes[2 * n + i] = static_cast<float>(std::abs(z) / scale);
    }
    return planes;
}

// Six constant planes: transmit power over the configured span, UE and
// serving-AP coordinates over the area, and either the UE-to-serving-RIS
// horizontal distance over the diagonal or the RIS x coordinate.
inline std::array<float, 6> build_metadata_planes(const ScenarioConfig& cfg,
                                                  const Topology& topo, int ue,
                                                  int serving_ap, int serving_ris) {
    double p_span = cfg.eve_power_range_dbm[1] - cfg.p_lu_dbm;
    const Vec3& u = topo.ue_pos[ue];
    const Vec3& a = topo.ap_pos[serving_ap];
    const RisNode& r = topo.ris[serving_ris];
    std::array<float, 6> m{};
    m[0] = static_cast<float>((topo.ue_power_dbm[ue] - cfg.p_lu_dbm) / p_span);
    m[1] = static_cast<float>(u.x / cfg.area_x());
    m[2] = static_cast<float>(u.y / cfg.area_y());
    m[3] = static_cast<float>(a.x / cfg.area_x());
    m[4] = static_cast<float>(a.y / cfg.area_y());
    if (cfg.ris_plane == "ris_x")
        m[5] = static_cast<float>(r.pos.x / cfg.area_x());
    else
        m[5] = static_cast<float>(distance_xy(u, r.pos) /
                                  std::hypot(cfg.area_x(), cfg.area_y()));
    return m;
}

// One sample per UE over its serving-AP effective channel, ordered by UE
// index. Labels follow the topology's eavesdropper flags.
inline Dataset generate_dataset(const ScenarioConfig& cfg, const Topology& topo,
                                const Association& assoc, const ChannelContext& ctx,
                                const RisConfiguration& ris_cfg) {
    Dataset ds;
    ds.n_ant = cfg.ap_antennas;
    ds.n_rb = cfg.n_rb;
    ds.tag = SplitTag::Full;
    ds.samples.reserve(topo.n_ue());
    for (int u = 0; u < topo.n_ue(); ++u) {
        int sap = assoc.serving_ap[u], sris = assoc.serving_ris[u];
        LinkChannels link = ctx.gen_link_channels(u, sap, sris);
        CMat h_eff = effective_channel(link, ris_cfg);

        CsiSample s;
        s.tensor.resize(ds.tensor_values());
        std::vector<float> csi = build_csi_image(h_eff);
        std::copy(csi.begin(), csi.end(), s.tensor.begin());
        auto meta_planes = build_metadata_planes(cfg, topo, u, sap, sris);
        for (int c = 0; c < 6; ++c)
            std::fill_n(s.tensor.begin() + (3 + c) * ds.plane_values(),
                        ds.plane_values(), meta_planes[c]);
        s.label = topo.ue_is_eve[u] ? 1 : 0;
        s.meta.ue = static_cast<uint32_t>(u);
        s.meta.pos[0] = static_cast<float>(topo.ue_pos[u].x);
        s.meta.pos[1] = static_cast<float>(topo.ue_pos[u].y);
        s.meta.pos[2] = static_cast<float>(topo.ue_pos[u].z);
        s.meta.p_tx_dbm = static_cast<float>(topo.ue_power_dbm[u]);
        s.meta.serving_ap = static_cast<uint32_t>(sap);
        s.meta.serving_ris = static_cast<uint32_t>(sris);
        s.meta.phase_id = static_cast<uint32_t>(ctx.phase_id());
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

namespace detail {

inline NormStats train_stats(const Dataset& ds) {
    NormStats st;
    if (ds.samples.empty()) return st;
    size_t pv = ds.plane_values();
    for (int c = 0; c < kCsiChannels; ++c) {
        double sum = 0.0, sq = 0.0;
        size_t n = ds.samples.size() * pv;
        for (const auto& s : ds.samples)
            for (size_t i = 0; i < pv; ++i) {
                double v = s.tensor[c * pv + i];
                sum += v;
                sq += v * v;
            }
        double mean = sum / n;
        st.mean[c] = static_cast<float>(mean);
        st.stddev[c] = static_cast<float>(std::sqrt(std::max(0.0, sq / n - mean * mean)));
    }
    return st;
}

}  // namespace detail

// Stratified split: each class is shuffled and split independently, the
// test share rounded down. The epsilon compensates binary representation
// of decimal ratios (e.g. 350 * (1 - 0.8) must give 70, not 69).
inline std::pair<Dataset, Dataset> split(const Dataset& ds, double ratio, Rng& rng) {
    if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("split ratio out of range (0, 1)");
    std::vector<int> by_class[2];
    for (size_t i = 0; i < ds.samples.size(); ++i)
        by_class[ds.samples[i].label ? 1 : 0].push_back(static_cast<int>(i));
    for (int c = 0; c < 2; ++c)
        if (by_class[c].size() < 2)
            throw IntegrityError("split: class " + std::to_string(c) +
                                 " has fewer than 2 samples");

    std::vector<int> train_idx, test_idx;
    for (int c = 0; c < 2; ++c) {
        rng.shuffle(by_class[c]);
        size_t n_test = static_cast<size_t>(
            std::floor(by_class[c].size() * (1.0 - ratio) + 1e-9));
        for (size_t i = 0; i < by_class[c].size(); ++i)
            (i < n_test ? test_idx : train_idx).push_back(by_class[c][i]);
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());

    auto take = [&](const std::vector<int>& idx, SplitTag tag) {
        Dataset out;
        out.n_ant = ds.n_ant;
        out.n_rb = ds.n_rb;
        out.tag = tag;
        for (int i : idx) out.samples.push_back(ds.samples[i]);
        return out;
    };
    Dataset train = take(train_idx, SplitTag::Train);
    Dataset test = take(test_idx, SplitTag::Test);
    train.stats = detail::train_stats(train);
    test.stats = train.stats;  // statistics describe the training set only
    return {train, test};
}

struct ClientShard {
    int client_ap = 0;
    std::vector<int> indices;  // into the train set
};

// Nearest-client-AP assignment; deliberately non-IID.
inline std::vector<ClientShard> partition_clients(const Dataset& train,
                                                  const std::vector<int>& client_aps,
                                                  const Topology& topo) {
    if (client_aps.empty()) throw IntegrityError("partition_clients: no clients");
    std::vector<ClientShard> shards;
    for (int ap : client_aps) shards.push_back({ap, {}});
    for (size_t i = 0; i < train.samples.size(); ++i) {
        const auto& m = train.samples[i].meta;
        Vec3 pos{m.pos[0], m.pos[1], m.pos[2]};
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (size_t c = 0; c < client_aps.size(); ++c) {
            double d = distance(pos, topo.ap_pos[client_aps[c]]);
            if (d < best_d) {
                best_d = d;
                best = static_cast<int>(c);
            }
        }
        shards[best].indices.push_back(static_cast<int>(i));
    }
    for (const auto& s : shards)
        if (s.indices.empty())
            throw IntegrityError("client AP " + std::to_string(s.client_ap) +
                                 " received an empty shard; use fewer clients");
    return shards;
}

// Container format (little endian):
//   "CSI1" | u32 version | u32 n_samples | u16 n_ant | u16 n_rb | u16 n_chan
//   | u8 split_tag | u8 reserved | 9 x f32 mean | 9 x f32 std
//   then per sample: meta(32 B) | u8 label | f32 tensor payload.
inline std::string dataset_bytes(const Dataset& ds) {
    ByteWriter w;
    w.magic("CSI1");
    w.u32(1);
    w.u32(static_cast<uint32_t>(ds.samples.size()));
    w.u16(static_cast<uint16_t>(ds.n_ant));
    w.u16(static_cast<uint16_t>(ds.n_rb));
    w.u16(kCsiChannels);
    w.u8(static_cast<uint8_t>(ds.tag));
    w.u8(0);
    for (float m : ds.stats.mean) w.f32(m);
    for (float s : ds.stats.stddev) w.f32(s);
    for (const auto& s : ds.samples) {
        w.u32(s.meta.ue);
        w.f32(s.meta.pos[0]);
        w.f32(s.meta.pos[1]);
        w.f32(s.meta.pos[2]);
        w.f32(s.meta.p_tx_dbm);
        w.u32(s.meta.serving_ap);
        w.u32(s.meta.serving_ris);
        w.u32(s.meta.phase_id);
        w.u8(s.label);
        for (float v : s.tensor) w.f32(v);
    }
    return std::move(w.bytes);
}

inline Dataset dataset_from_bytes(std::string_view bytes, const std::string& context) {
    ByteReader r(bytes, context);
    r.expect_magic("CSI1");
    uint32_t version = r.u32();
    if (version != 1)
        throw FormatError(context + ": unsupported dataset version " +
                          std::to_string(version));
    uint32_t n = r.u32();
    Dataset ds;
    ds.n_ant = r.u16();
    ds.n_rb = r.u16();
    uint16_t n_chan = r.u16();
    if (n_chan != kCsiChannels)
        throw FormatError(context + ": expected " + std::to_string(kCsiChannels) +
                          " channels");
    if (ds.n_ant <= 0 || ds.n_rb <= 0) throw FormatError(context + ": bad dimensions");
    ds.tag = static_cast<SplitTag>(r.u8());
    r.u8();
    for (auto& m : ds.stats.mean) m = r.f32();
    for (auto& s : ds.stats.stddev) s = r.f32();
    size_t per_sample = 33 + 4 * ds.tensor_values();
    if (bytes.size() != r.pos + n * per_sample)
        throw FormatError(context + ": size does not match the declared sample count");
    ds.samples.resize(n);
    for (auto& s : ds.samples) {
        s.meta.ue = r.u32();
        s.meta.pos[0] = r.f32();
        s.meta.pos[1] = r.f32();
        s.meta.pos[2] = r.f32();
        s.meta.p_tx_dbm = r.f32();
        s.meta.serving_ap = r.u32();
        s.meta.serving_ris = r.u32();
        s.meta.phase_id = r.u32();
        s.label = r.u8();
        s.tensor.resize(ds.tensor_values());
        for (auto& v : s.tensor) v = r.f32();
    }
    if (!r.exhausted()) throw FormatError(context + ": trailing bytes after payload");
    return ds;
}

inline void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
    atomic_write(path, dataset_bytes(ds));
}

inline Dataset load_dataset(const std::filesystem::path& path) {
    return dataset_from_bytes(read_file(path), path.string());
}

}  // namespace risfed
